"""Marginal and conditional generators with shared-parameter coupling.

A two-domain bank holds exactly two networks: one mapping (y, noise) -> x
and one mapping (x, noise) -> y. Marginal sampling reuses the same networks
with an all-zero condition, so the marginals add zero extra parameters and
the coupling identity holds bit-exactly by construction.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nets import MLP
from .samples import JointBatch, connectivity

NOISE_KEYS = ("eps1", "eps2", "eps1_prime", "eps2_prime")


class NoiseSource:
    """Seeded stream of standard-normal noise (and uniform index draws)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(np.random.PCG64(self.seed))

    def draw(self, n: int, dim: int) -> Tensor:
        return Tensor(self._rng.standard_normal((n, dim)))

    def indices(self, n: int, upper: int) -> np.ndarray:
        """Uniform with-replacement row indices in [0, upper)."""
        return self._rng.integers(0, upper, size=n)

    def numpy(self) -> np.random.Generator:
        """The underlying generator, for plain-array draws."""
        return self._rng

    def state(self) -> dict:
        return self._rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._rng.bit_generator.state = state


def _zeros(n: int, dim: int) -> Tensor:
    return Tensor(np.zeros((n, dim)))


class GeneratorBank:
    """Coupled two-domain generator pair.

    ``noise_dims`` may be a single int or a dict over the four noise
    sources; coupling forces dim(eps1) == dim(eps2_prime) (both feed the
    x-producing network) and dim(eps1_prime) == dim(eps2).
    """

    def __init__(self, domain_dims: dict[str, int], noise_dims, hidden: int = 128,
                 n_hidden: int = 2, seed: int = 0, zero_final: bool = False):
        if set(domain_dims) != {"x", "y"}:
            raise ValueError(f"generator bank: domains must be x and y, got {sorted(domain_dims)}")
        self.domain_dims = dict(domain_dims)
        self.noise_dims = _normalize_noise_dims(noise_dims)
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.PCG64(self.seed))
        dx, dy = self.domain_dims["x"], self.domain_dims["y"]
        # phi: (y, eps) -> x, houses the x marginal; theta: (x, eps) -> y.
        self.phi = MLP("phi", dy + self.noise_dims["eps1"], dx, hidden, n_hidden,
                       "tanh", rng, zero_final=zero_final)
        self.theta = MLP("theta", dx + self.noise_dims["eps2"], dy, hidden, n_hidden,
                         "tanh", rng, zero_final=zero_final)

    def parameters(self) -> list[Tensor]:
        return self.phi.parameters() + self.theta.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.phi.named_parameters() + self.theta.named_parameters()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def marginal_noise_dim(self, domain: str) -> int:
        return self.noise_dims["eps1" if domain == "x" else "eps1_prime"]

    def conditional_noise_dim(self, direction: str) -> int:
        return self.noise_dims["eps2" if direction == "y_given_x" else "eps2_prime"]

    def hyperparameters(self) -> dict:
        return {
            "kind": "coupled_two_domain",
            "domain_dims": self.domain_dims,
            "noise_dims": self.noise_dims,
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
            "seed": self.seed,
        }


def _normalize_noise_dims(noise_dims) -> dict[str, int]:
    if isinstance(noise_dims, int):
        dims = {k: noise_dims for k in NOISE_KEYS}
    else:
        dims = dict(noise_dims)
        missing = set(NOISE_KEYS) - set(dims)
        if missing:
            raise ValueError(f"generator bank: missing noise dims {sorted(missing)}")
    # shared parameters mean a marginal draw and the matching conditional
    # draw flow through the same input slot
    if dims["eps1"] != dims["eps2_prime"] or dims["eps1_prime"] != dims["eps2"]:
        raise ValueError(
            "generator bank: coupling requires dim(eps1) == dim(eps2_prime) "
            f"and dim(eps1_prime) == dim(eps2), got {dims}"
        )
    return dims


def sample_marginal(bank, domain: str, noise: Tensor) -> Tensor:
    """Draw from a marginal.

    On a coupled bank this is literally the conditional fed an all-zero
    condition (same parameters, same code path); the two-step baseline bank
    routes to its dedicated marginal networks instead.
    """
    if domain not in ("x", "y"):
        raise ValueError(f"sample_marginal: unknown domain {domain!r}")
    if isinstance(bank, TwoStepBank):
        net = bank.marg_x if domain == "x" else bank.marg_y
        want = bank.marginal_noise_dim(domain)
        if noise.shape[1] != want:
            raise ad.ShapeError(f"sample_marginal: noise dim {noise.shape[1]} != {want}")
        return net(noise)
    direction = "x_given_y" if domain == "x" else "y_given_x"
    cond_dim = bank.domain_dims["y" if domain == "x" else "x"]
    return sample_conditional(bank, direction, _zeros(noise.shape[0], cond_dim), noise)


def sample_conditional(bank, direction: str, condition: Tensor, noise: Tensor) -> Tensor:
    """Draw from a conditional given (n, dim) condition and noise batches."""
    if direction == "y_given_x":
        net, cond_domain = bank.theta, "x"
    elif direction == "x_given_y":
        net, cond_domain = bank.phi, "y"
    else:
        raise ValueError(f"sample_conditional: unknown direction {direction!r}")
    expected = bank.domain_dims[cond_domain]
    if condition.shape[1] != expected:
        raise ad.ShapeError(
            f"sample_conditional: condition dim {condition.shape[1]} != {expected} "
            f"for direction {direction}"
        )
    want = bank.conditional_noise_dim(direction)
    if noise.shape[1] != want:
        raise ad.ShapeError(
            f"sample_conditional: noise dim {noise.shape[1]} != {want} for {direction}"
        )
    if condition.shape[0] != noise.shape[0]:
        raise ad.ShapeError(
            f"sample_conditional: batch sizes differ {condition.shape[0]} vs {noise.shape[0]}"
        )
    return net(condition, noise)


def sample_joint_chain(bank, order: str, noise_pair: tuple[Tensor, Tensor],
                       detach_condition: bool = False) -> JointBatch:
    """Fully synthetic joint draw: marginal first, conditional on its output.

    The conditioning value stays attached to the graph unless
    ``detach_condition`` is set, so conditional losses reach the marginal's
    parameters through the chain.
    """
    first_noise, second_noise = noise_pair
    if order == "x_then_y":
        x = sample_marginal(bank, "x", first_noise)
        cond = x.detach() if detach_condition else x
        y = sample_conditional(bank, "y_given_x", cond, second_noise)
        values, source = (x, y), 3
    elif order == "y_then_x":
        y = sample_marginal(bank, "y", first_noise)
        cond = y.detach() if detach_condition else y
        x = sample_conditional(bank, "x_given_y", cond, second_noise)
        values, source = (x, y), 4
    else:
        raise ValueError(f"sample_joint_chain: unknown order {order!r}")
    return JointBatch(("x", "y"), values, source, connectivity(values))


class TwoStepBank:
    """Uncoupled bank for the two-step baseline.

    Separate marginal networks (noise -> domain) and conditional networks;
    no parameter sharing, so marginals and conditionals exchange no
    information during training.
    """

    def __init__(self, domain_dims: dict[str, int], noise_dims, hidden: int = 128,
                 n_hidden: int = 2, seed: int = 0):
        self.domain_dims = dict(domain_dims)
        self.noise_dims = _normalize_noise_dims(noise_dims)
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.PCG64(self.seed))
        dx, dy = self.domain_dims["x"], self.domain_dims["y"]
        self.marg_x = MLP("marg_x", self.noise_dims["eps1"], dx, hidden, n_hidden, "tanh", rng)
        self.marg_y = MLP("marg_y", self.noise_dims["eps1_prime"], dy, hidden, n_hidden, "tanh", rng)
        self.phi = MLP("phi", dy + self.noise_dims["eps2_prime"], dx, hidden, n_hidden, "tanh", rng)
        self.theta = MLP("theta", dx + self.noise_dims["eps2"], dy, hidden, n_hidden, "tanh", rng)

    def marginal_parameters(self) -> list[Tensor]:
        return self.marg_x.parameters() + self.marg_y.parameters()

    def conditional_parameters(self) -> list[Tensor]:
        return self.phi.parameters() + self.theta.parameters()

    def parameters(self) -> list[Tensor]:
        return self.marginal_parameters() + self.conditional_parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for net in (self.marg_x, self.marg_y, self.phi, self.theta):
            named.extend(net.named_parameters())
        return named

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def marginal_noise_dim(self, domain: str) -> int:
        return self.noise_dims["eps1" if domain == "x" else "eps1_prime"]

    def conditional_noise_dim(self, direction: str) -> int:
        return self.noise_dims["eps2" if direction == "y_given_x" else "eps2_prime"]

    def hyperparameters(self) -> dict:
        return {
            "kind": "two_step_baseline",
            "domain_dims": self.domain_dims,
            "noise_dims": self.noise_dims,
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
            "seed": self.seed,
        }


class ThreeDomainBank:
    """Four conditional generators covering both three-domain factorizations.

    nu: (x, eps) -> y, gamma: (x, y, eps) -> z, psi: (z, eps) -> y,
    eta: (y, z, eps) -> x. gamma and eta take both conditioning domains
    concatenated (the skip connection of the chain factorization). The
    marginal over x is housed in eta (zero condition), the marginal over z
    in gamma, so again no extra marginal parameters exist.
    """

    def __init__(self, domain_dims: dict[str, int], noise_dim: int, hidden: int = 128,
                 n_hidden: int = 2, seed: int = 0, zero_final: bool = False):
        if set(domain_dims) != {"x", "y", "z"}:
            raise ValueError(
                f"three-domain bank: domains must be x, y, z, got {sorted(domain_dims)}"
            )
        self.domain_dims = dict(domain_dims)
        self.noise_dim = int(noise_dim)
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.PCG64(self.seed))
        dx, dy, dz = (self.domain_dims[d] for d in ("x", "y", "z"))
        nd = self.noise_dim
        self.nu = MLP("nu", dx + nd, dy, hidden, n_hidden, "tanh", rng, zero_final=zero_final)
        self.gamma = MLP("gamma", dx + dy + nd, dz, hidden, n_hidden, "tanh", rng,
                         zero_final=zero_final)
        self.psi = MLP("psi", dz + nd, dy, hidden, n_hidden, "tanh", rng, zero_final=zero_final)
        self.eta = MLP("eta", dy + dz + nd, dx, hidden, n_hidden, "tanh", rng,
                       zero_final=zero_final)

    def parameters(self) -> list[Tensor]:
        params = []
        for net in (self.nu, self.gamma, self.psi, self.eta):
            params.extend(net.parameters())
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for net in (self.nu, self.gamma, self.psi, self.eta):
            named.extend(net.named_parameters())
        return named

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def marginal(self, domain: str, noise: Tensor) -> Tensor:
        n = noise.shape[0]
        dx, dy, dz = (self.domain_dims[d] for d in ("x", "y", "z"))
        if domain == "x":
            return self.eta(_zeros(n, dy), _zeros(n, dz), noise)
        if domain == "z":
            return self.gamma(_zeros(n, dx), _zeros(n, dy), noise)
        raise ValueError(f"three-domain marginal: no marginal generator for {domain!r}")

    def hyperparameters(self) -> dict:
        return {
            "kind": "three_domain",
            "domain_dims": self.domain_dims,
            "noise_dims": {"all": self.noise_dim},
            "hidden": self.hidden,
            "n_hidden": self.n_hidden,
            "seed": self.seed,
        }


def sample_three_domain_chain(bank: ThreeDomainBank, order: str,
                              noises: tuple[Tensor, Tensor, Tensor],
                              prefix: tuple[np.ndarray, ...] = ()) -> JointBatch:
    """Draw (x, y, z) through one factorization chain.

    ``prefix`` supplies empirical values for the leading one or two domains
    of the chain (they stay detached); remaining domains are generated and
    carry gradients. Sources are numbered 1/3/5 for the x->y->z chain with
    0/1/2 observed prefixes and 2/4/6 for the z->y->x chain.
    """
    if order not in ("x_y_z", "z_y_x"):
        raise ValueError(f"sample_three_domain_chain: unknown order {order!r}")
    if len(prefix) > 2:
        raise ValueError("sample_three_domain_chain: prefix covers at most two domains")
    prefix_t = tuple(Tensor(p) for p in prefix)
    if prefix_t:
        n = prefix_t[0].shape[0]
    else:
        n = noises[0].shape[0]
    chain_domains = ("x", "y", "z") if order == "x_y_z" else ("z", "y", "x")
    for domain, value in zip(chain_domains, prefix_t):
        if value.shape[1] != bank.domain_dims[domain]:
            raise ad.ShapeError(
                f"sample_three_domain_chain: prefix for {domain} has dim "
                f"{value.shape[1]}, expected {bank.domain_dims[domain]}"
            )
    if order == "x_y_z":
        x = prefix_t[0] if len(prefix_t) >= 1 else bank.marginal("x", noises[0])
        y = prefix_t[1] if len(prefix_t) >= 2 else bank.nu(x, noises[1])
        z = bank.gamma(x, y, noises[2])
        source = {0: 1, 1: 3, 2: 5}[len(prefix_t)]
    else:
        z = prefix_t[0] if len(prefix_t) >= 1 else bank.marginal("z", noises[0])
        y = prefix_t[1] if len(prefix_t) >= 2 else bank.psi(z, noises[1])
        x = bank.eta(y, z, noises[2])
        source = {0: 2, 1: 4, 2: 6}[len(prefix_t)]
    values = (x, y, z)
    return JointBatch(("x", "y", "z"), values, source, connectivity(values))
