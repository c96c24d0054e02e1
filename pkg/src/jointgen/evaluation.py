"""Quantitative checks: kernel two-sample statistics, conditional
consistency, critic diagnostics and the discrete equilibrium oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .critic import CriticNet, evaluate as critic_evaluate
from .data import Dataset, DataError, SyntheticSpec
from .generators import NoiseSource, sample_conditional
from .objectives import CycleConfig, cycle_reconstruction, equilibrium_value
from .sampling import SourceSpec, draw_batch, draw_three_domain_batch


class EvalError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# kernel two-sample statistics


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    sq = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def median_heuristic(samples: np.ndarray, cap: int = 1024) -> float:
    """Median pairwise distance on an evenly strided subsample."""
    n = samples.shape[0]
    if n > cap:
        stride = n // cap
        samples = samples[::stride][:cap]
    d = np.sqrt(_sq_dists(samples, samples))
    upper = d[np.triu_indices(d.shape[0], k=1)]
    med = float(np.median(upper))
    return med if med > 0.0 else 1.0


def default_bandwidths(samples: np.ndarray) -> list[float]:
    med = median_heuristic(samples)
    return [0.5 * med, med, 2.0 * med]


def _kernel(sq: np.ndarray, bandwidths) -> np.ndarray:
    total = np.zeros_like(sq)
    for bw in bandwidths:
        if bw <= 0.0:
            raise EvalError(f"bandwidth must be positive, got {bw}")
        total += np.exp(-sq / (2.0 * bw * bw))
    return total


def mmd2(a: np.ndarray, b: np.ndarray, bandwidths) -> float:
    """Unbiased squared MMD summed over Gaussian kernels.

    The unbiased estimator excludes self-pairs, so both samples need at
    least two rows.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise EvalError(f"mmd2: incompatible sample shapes {a.shape} vs {b.shape}")
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise EvalError(f"mmd2: unbiased estimator needs >= 2 samples per side, got {m}, {n}")
    kaa = _kernel(_sq_dists(a, a), bandwidths)
    kbb = _kernel(_sq_dists(b, b), bandwidths)
    kab = _kernel(_sq_dists(a, b), bandwidths)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    term_ab = kab.mean()
    return float(term_a + term_b - 2.0 * term_ab)


def mmd2_permutation_null(a: np.ndarray, b: np.ndarray, bandwidths,
                          n_permutations: int = 500, seed: int = 0) -> np.ndarray:
    """Null mmd2 values under random relabeling of the pooled sample."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = a.shape[0], b.shape[0]
    pooled = np.concatenate([a, b], axis=0)
    kernel = _kernel(_sq_dists(pooled, pooled), bandwidths)
    rng = np.random.default_rng(seed)
    out = np.empty(n_permutations)
    for i in range(n_permutations):
        perm = rng.permutation(m + n)
        ia, ib = perm[:m], perm[m:]
        kaa = kernel[np.ix_(ia, ia)]
        kbb = kernel[np.ix_(ib, ib)]
        kab = kernel[np.ix_(ia, ib)]
        term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
        term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
        out[i] = term_a + term_b - 2.0 * kab.mean()
    return out


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Bandwidth-free cross-check: 2 E|a-b| - E|a-a'| - E|b-b'|."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise EvalError(f"energy_distance: incompatible shapes {a.shape} vs {b.shape}")
    dab = np.sqrt(_sq_dists(a, b)).mean()
    daa = np.sqrt(_sq_dists(a, a)).mean()
    dbb = np.sqrt(_sq_dists(b, b)).mean()
    return float(2.0 * dab - daa - dbb)


# ---------------------------------------------------------------------------
# model-level checks


def conditional_consistency(bank, spec: SyntheticSpec, n: int, rng: NoiseSource,
                            nearest_symmetry: bool = False) -> float:
    """RMS distance between generated y | x and the benchmark's true map.

    With ``nearest_symmetry`` the error is taken against the closest member
    of the benchmark's symmetry set (for unpaired training, where the map is
    only identifiable up to that set).
    """
    maps = spec.symmetric_maps() if nearest_symmetry else [spec.true_map]
    x = spec.sample_x(n, rng.numpy())
    with ad.no_grad():
        eps = rng.draw(n, bank.conditional_noise_dim("y_given_x"))
        y = sample_conditional(bank, "y_given_x", Tensor(x), eps).data
    best = math.inf
    for mapping in maps:
        target = mapping(x)
        rmse = float(np.sqrt(((y - target) ** 2).sum(axis=1).mean()))
        best = min(best, rmse)
    return best


def cycle_error(bank, data: Dataset, n: int, rng: NoiseSource,
                norm: str = "l1") -> float:
    """Mean two-way reconstruction error on empirical marginal draws."""
    x = data.marginal("x")
    y = data.marginal("y")
    ix = rng.indices(n, x.shape[0])
    iy = rng.indices(n, y.shape[0])
    with ad.no_grad():
        err = cycle_reconstruction(bank, Tensor(x[ix]), Tensor(y[iy]),
                                   CycleConfig(weight=1.0, norm=norm), rng)
    return err.item()


def critic_confusion(critic: CriticNet, spec: SourceSpec, bank, data: Dataset,
                     n_per_source: int, rng: NoiseSource) -> np.ndarray:
    """Row k holds the mean class probabilities on source-k samples."""
    if n_per_source < 1:
        raise EvalError(f"critic_confusion: need n_per_source >= 1, got {n_per_source}")
    k = spec.num_sources
    if critic.num_classes != k:
        raise EvalError(
            f"critic_confusion: critic has {critic.num_classes} classes, mode has {k}"
        )
    matrix = np.zeros((k, k))
    with ad.no_grad():
        for source in range(1, k + 1):
            if spec.mode == "three_domain_6":
                batch = draw_three_domain_batch(source, bank, data, n_per_source, rng)
            else:
                batch = draw_batch(spec, source, bank, data, n_per_source, rng)
            matrix[source - 1] = critic_evaluate(critic, batch).probs.mean(axis=0)
    return matrix


# ---------------------------------------------------------------------------
# discrete equilibrium oracle


def equilibrium_oracle(support, densities) -> tuple[float, bool]:
    """Exact optimal-critic objective for K tabulated distributions.

    ``densities`` is a (K, S) table of probabilities over the ``support``
    points. The returned objective is the class-log-likelihood at the
    analytic critic optimum, which equals K*ln(1/K) plus the sum of
    KL(p_k || mean); it is minimal exactly when all K distributions
    coincide. The function self-checks that any two distributions differing
    in total variation also push the objective above the floor.
    """
    p = np.asarray(densities, dtype=np.float64)
    if p.ndim != 2:
        raise EvalError(f"equilibrium_oracle: densities must be a K x S table, got {p.shape}")
    k, s = p.shape
    if support is not None and len(support) != s:
        raise EvalError(
            f"equilibrium_oracle: support has {len(support)} points, table has {s}"
        )
    if k < 2:
        raise EvalError(f"equilibrium_oracle: need K >= 2 distributions, got {k}")
    if np.any(p < 0.0):
        raise EvalError("equilibrium_oracle: negative probability in table")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise EvalError(
            f"equilibrium_oracle: distribution {bad + 1} sums to {sums[bad]!r}"
        )
    mean_dist = p.mean(axis=0)
    gap = 0.0
    for row in p:
        mask = row > 0.0
        kl = float((row[mask] * np.log(row[mask] / mean_dist[mask])).sum())
        gap += max(kl, 0.0)  # KL is nonnegative; clip float dust
    floor = equilibrium_value(k)
    objective = floor + gap
    is_equilibrium = gap <= 1e-9
    max_tv = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            max_tv = max(max_tv, 0.5 * float(np.abs(p[i] - p[j]).sum()))
    # the gap scales like TV^2, so only macroscopic differences clear the
    # equality tolerance; a disagreement here means the oracle is broken
    if max_tv > 1e-4 and is_equilibrium:
        raise EvalError(
            f"equilibrium_oracle: tables differ (TV={max_tv}) but objective sits at the floor"
        )
    if max_tv <= 1e-9 and not is_equilibrium:
        raise EvalError(
            f"equilibrium_oracle: tables coincide but objective exceeds the floor by {gap}"
        )
    return objective, is_equilibrium


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    """One evaluation run; inapplicable fields are NaN."""

    mmd2: float
    energy_distance: float
    per_marginal_mmd2: dict[str, float] = field(default_factory=dict)
    conditional_rmse: float = math.nan
    cycle_error: float = math.nan
    extras: dict[str, float] = field(default_factory=dict)

    def as_items(self) -> list[tuple[str, float]]:
        items = [("mmd2", self.mmd2), ("energy_distance", self.energy_distance)]
        items += [(f"mmd2_{d}", v) for d, v in sorted(self.per_marginal_mmd2.items())]
        items += [("conditional_rmse", self.conditional_rmse),
                  ("cycle_error", self.cycle_error)]
        items += sorted(self.extras.items())
        return items


def write_metric_summary(report: MetricReport, path) -> None:
    lines = [f"{k}={v:.17g}" for k, v in report.as_items()]
    Path(path).write_text("\n".join(lines) + "\n")


def append_metric_row(report: MetricReport, path) -> None:
    """Appends a tab-separated row, writing a header when the file is new."""
    path = Path(path)
    items = report.as_items()
    header = "\t".join(k for k, _ in items)
    row = "\t".join(f"{v:.17g}" for _, v in items)
    if not path.exists():
        path.write_text(header + "\n" + row + "\n")
        return
    existing = path.read_text().splitlines()
    if existing and existing[0] != header:
        raise EvalError(f"{path}: existing log header does not match this report")
    with path.open("a") as fh:
        fh.write(row + "\n")
