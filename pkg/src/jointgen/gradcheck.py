"""Finite-difference verification of every primitive op and the full losses.

``f`` closures rebuild their forward pass from fixed noise on every call,
so central differences see the complete dependence on the parameters being
perturbed.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_difference_check
from .critic import CriticNet
from .generators import GeneratorBank, NoiseSource, sample_conditional, sample_joint_chain
from .objectives import CycleConfig, paired_critic_loss, unpaired_generator_loss
from .samples import JointBatch, connectivity


def _weigher(shape, rng: np.random.Generator):
    """Fixed random weighting that scalarizes without cancelling directions."""
    w = Tensor(rng.normal(size=shape))

    def apply(out: Tensor) -> Tensor:
        return ad.mean(ad.mul(out, w))

    return apply


def _away_from(x: np.ndarray, point: float, margin: float) -> np.ndarray:
    """Push entries out of the nondifferentiable neighborhood of ``point``."""
    shifted = x.copy()
    close = np.abs(shifted - point) < margin
    shifted[close] += 2.0 * margin * np.sign(shifted[close] - point + 1e-300) + margin
    return shifted


def primitive_op_checks(seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Max relative FD error per primitive op on randomized shapes."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    def check(name, inputs, fn, out_shape):
        params = [t for t in inputs if t.requires_grad]
        scalarize = _weigher(out_shape, rng)
        err = finite_difference_check(lambda: scalarize(fn(*inputs)), params, h=h, seed=seed)
        results[name] = max(results.get(name, 0.0), err)

    n, d, k = 4, 3, 5
    check("matmul",
          (Tensor(rng.normal(size=(n, d)), True), Tensor(rng.normal(size=(d, k)), True)),
          ad.matmul, (n, k))
    check("add",
          (Tensor(rng.normal(size=(n, d)), True), Tensor(rng.normal(size=d), True)),
          ad.add, (n, d))
    check("sub",
          (Tensor(rng.normal(size=(n, d)), True), Tensor(rng.normal(size=(n, d)), True)),
          ad.sub, (n, d))
    check("mul",
          (Tensor(rng.normal(size=(n, d)), True), Tensor(rng.normal(size=(n, d)), True)),
          ad.mul, (n, d))
    check("tanh", (Tensor(rng.normal(size=(n, d)), True),), ad.tanh, (n, d))
    check("relu",
          (Tensor(_away_from(rng.normal(size=(n, d)), 0.0, 1e-3), True),),
          ad.relu, (n, d))
    check("leaky_relu",
          (Tensor(_away_from(rng.normal(size=(n, d)), 0.0, 1e-3), True),),
          lambda t: ad.leaky_relu(t, 0.2), (n, d))
    check("sigmoid", (Tensor(rng.normal(size=(n, d)), True),), ad.sigmoid, (n, d))
    check("log_softmax",
          (Tensor(rng.normal(size=(n, k)), True),),
          lambda t: ad.log_softmax(t, axis=1), (n, k))
    check("concat",
          (Tensor(rng.normal(size=(n, d)), True), Tensor(rng.normal(size=(n, 2)), True)),
          lambda a, b: ad.concat([a, b], axis=1), (n, d + 2))
    check("slice",
          (Tensor(rng.normal(size=(n, k)), True),),
          lambda t: ad.slice_(t, axis=1, start=1, stop=3), (n, 2))
    check("mean",
          (Tensor(rng.normal(size=(n, d)), True),),
          lambda t: ad.mean(t, axis=1), (n,))
    check("mean_full",
          (Tensor(rng.normal(size=(n, d)), True),),
          ad.mean, ())
    check("sum",
          (Tensor(rng.normal(size=(n, d)), True),),
          lambda t: ad.sum_(t, axis=0), (d,))
    check("l1_norm",
          (Tensor(_away_from(rng.normal(size=(n, d)), 0.0, 1e-3), True),),
          lambda t: ad.l1_norm(t, axis=1), (n,))
    check("l2_norm",
          (Tensor(rng.normal(size=(n, d)) + 0.5, True),),
          lambda t: ad.l2_norm(t, axis=1), (n,))
    check("clamp_min",
          (Tensor(_away_from(rng.normal(size=(n, d)), -0.5, 1e-3), True),),
          lambda t: ad.clamp_min(t, -0.5), (n, d))
    return results


def _tiny_setup(seed: int):
    dims = {"x": 2, "y": 1}
    bank = GeneratorBank(dims, noise_dims=3, hidden=8, n_hidden=2, seed=seed)
    critic = CriticNet(3, 5, hidden=8, n_hidden=2, seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    n = 4
    fixed = {
        "x_rows": rng.normal(size=(n, 2)),
        "y_rows": rng.normal(size=(n, 1)),
        "joint": rng.normal(size=(n, 3)),
        "eps_a": rng.normal(size=(n, 3)),
        "eps_b": rng.normal(size=(n, 3)),
        "eps_c": rng.normal(size=(n, 3)),
        "eps_d": rng.normal(size=(n, 3)),
        "eps_e": rng.normal(size=(n, 3)),
        "eps_f": rng.normal(size=(n, 3)),
    }
    return bank, critic, fixed


def _build_batches(bank, fixed, num_sources: int) -> dict[int, JointBatch]:
    """Sources 1..4 (and 5 when paired) from frozen noise and data rows."""
    x_rows = Tensor(fixed["x_rows"])
    y_rows = Tensor(fixed["y_rows"])
    batches = {}
    y1 = sample_conditional(bank, "y_given_x", x_rows, Tensor(fixed["eps_a"]))
    batches[1] = JointBatch(("x", "y"), (x_rows, y1), 1, connectivity((x_rows, y1)))
    x2 = sample_conditional(bank, "x_given_y", y_rows, Tensor(fixed["eps_b"]))
    batches[2] = JointBatch(("x", "y"), (x2, y_rows), 2, connectivity((x2, y_rows)))
    batches[3] = sample_joint_chain(bank, "x_then_y",
                                    (Tensor(fixed["eps_c"]), Tensor(fixed["eps_d"])))
    batches[4] = sample_joint_chain(bank, "y_then_x",
                                    (Tensor(fixed["eps_e"]), Tensor(fixed["eps_f"])))
    if num_sources == 5:
        xj = Tensor(fixed["joint"][:, :2])
        yj = Tensor(fixed["joint"][:, 2:])
        batches[5] = JointBatch(("x", "y"), (xj, yj), 5, (False, False))
    return batches


def paired_critic_loss_check(seed: int = 0, h: float = 1e-5) -> float:
    """FD check of the five-way critic loss w.r.t. critic parameters."""
    bank, critic, fixed = _tiny_setup(seed)

    def f():
        with ad.no_grad():
            batches = _build_batches(bank, fixed, 5)
        return paired_critic_loss(critic, batches)

    return finite_difference_check(f, critic.parameters(), h=h, seed=seed)


def unpaired_generator_loss_check(seed: int = 0, h: float = 1e-5) -> float:
    """FD check of the generator objective including the cycle term,
    w.r.t. both generator parameter sets."""
    bank, _, fixed = _tiny_setup(seed)
    critic4 = CriticNet(3, 4, hidden=8, n_hidden=2, seed=seed + 3)
    cycle = CycleConfig(weight=2.0, norm="l2")

    def f():
        batches = _build_batches(bank, fixed, 4)
        loss, _ = unpaired_generator_loss(critic4, batches, cycle, bank,
                                          NoiseSource(seed + 4), "saturating")
        return loss

    return finite_difference_check(f, bank.parameters(), h=h, seed=seed)


def run_gradcheck(seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """The full suite; every value must sit below 1e-4."""
    results = dict(primitive_op_checks(seed, h))
    results["paired_critic_loss"] = paired_critic_loss_check(seed, h)
    results["unpaired_generator_loss"] = unpaired_generator_loss_check(seed, h)
    return results
