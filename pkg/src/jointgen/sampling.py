"""Batch construction for every source distribution the critic must separate.

Paired mode (K=5):
    1: empirical x, generated y | x          4: generated y marginal, generated x | y
    2: empirical y, generated x | y          5: empirical joint pair
    3: generated x marginal, generated y | x
Unpaired mode (K=4): sources 1-4 only; the empirical joint is unavailable.
Three-domain mode (K=6): both chain factorizations fully generated (1, 2),
their empirical-head variants (3: x observed, 4: z observed) and the
observed-pair variants (5: (x,y) observed, 6: (y,z) observed).
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor
from .data import Dataset, DataError
from .generators import (
    GeneratorBank,
    NoiseSource,
    ThreeDomainBank,
    sample_conditional,
    sample_joint_chain,
    sample_marginal,
    sample_three_domain_chain,
)
from .samples import JointBatch, connectivity

MODES = ("paired_5", "unpaired_4", "three_domain_6", "gan_2", "ali_2")

# (empirical domains, generated domains, chain order) per source; the audit
# test in the suite checks this table entry by entry.
PAIRED_RECIPES = {
    1: {"empirical": ("x",), "generated": ("y",), "order": None},
    2: {"empirical": ("y",), "generated": ("x",), "order": None},
    3: {"empirical": (), "generated": ("x", "y"), "order": "x_then_y"},
    4: {"empirical": (), "generated": ("x", "y"), "order": "y_then_x"},
    5: {"empirical": ("x", "y"), "generated": (), "order": None},
}
UNPAIRED_RECIPES = {k: PAIRED_RECIPES[k] for k in (1, 2, 3, 4)}
THREE_DOMAIN_RECIPES = {
    1: {"empirical": (), "generated": ("x", "y", "z"), "order": "x_y_z"},
    2: {"empirical": (), "generated": ("x", "y", "z"), "order": "z_y_x"},
    3: {"empirical": ("x",), "generated": ("y", "z"), "order": "x_y_z"},
    4: {"empirical": ("z",), "generated": ("y", "x"), "order": "z_y_x"},
    5: {"empirical": ("x", "y"), "generated": ("z",), "order": "x_y_z"},
    6: {"empirical": ("y", "z"), "generated": ("x",), "order": "z_y_x"},
}


@dataclass
class SourceSpec:
    """Active mode plus its source recipes."""

    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def num_sources(self) -> int:
        return {"paired_5": 5, "unpaired_4": 4, "three_domain_6": 6,
                "gan_2": 2, "ali_2": 2}[self.mode]

    def recipes(self) -> dict:
        if self.mode == "paired_5":
            return PAIRED_RECIPES
        if self.mode == "unpaired_4":
            return UNPAIRED_RECIPES
        if self.mode == "three_domain_6":
            return THREE_DOMAIN_RECIPES
        raise ValueError(f"mode {self.mode!r} has no joint source recipes")


def _empirical(data: Dataset, domains: tuple[str, ...], n: int,
               rng: NoiseSource) -> dict[str, Tensor]:
    """Uniform with-replacement draws; joint domains share one index draw."""
    if len(domains) == 1:
        column = data.marginal(domains[0])
        idx = rng.indices(n, column.shape[0])
        return {domains[0]: Tensor(column[idx])}
    columns = data.joint(domains)
    idx = rng.indices(n, columns[0].shape[0])
    return {d: Tensor(c[idx]) for d, c in zip(domains, columns)}


def draw_batch(spec: SourceSpec, source: int, bank: GeneratorBank, data: Dataset,
               n: int, rng: NoiseSource) -> JointBatch:
    """Draw one labeled batch from a two-domain source recipe."""
    if spec.mode not in ("paired_5", "unpaired_4"):
        raise ValueError(f"draw_batch: mode {spec.mode!r} is not a two-domain mode")
    recipes = spec.recipes()
    if source not in recipes:
        if spec.mode == "unpaired_4" and source == 5:
            raise DataError("source 5 requires empirical joint pairs, unavailable unpaired")
        raise ValueError(f"draw_batch: source {source} not defined for {spec.mode}")
    if n < 1:
        raise ValueError(f"draw_batch: batch size must be positive, got {n}")
    if spec.mode == "paired_5" and data.pairing != "paired":
        raise DataError(f"paired mode needs a paired dataset, got {data.pairing!r}")

    if source == 1:
        x = _empirical(data, ("x",), n, rng)["x"]
        eps = rng.draw(n, bank.conditional_noise_dim("y_given_x"))
        y = sample_conditional(bank, "y_given_x", x, eps)
        values = (x, y)
    elif source == 2:
        y = _empirical(data, ("y",), n, rng)["y"]
        eps = rng.draw(n, bank.conditional_noise_dim("x_given_y"))
        x = sample_conditional(bank, "x_given_y", y, eps)
        values = (x, y)
    elif source == 3:
        pair = (rng.draw(n, bank.marginal_noise_dim("x")),
                rng.draw(n, bank.conditional_noise_dim("y_given_x")))
        return sample_joint_chain(bank, "x_then_y", pair)
    elif source == 4:
        pair = (rng.draw(n, bank.marginal_noise_dim("y")),
                rng.draw(n, bank.conditional_noise_dim("x_given_y")))
        return sample_joint_chain(bank, "y_then_x", pair)
    else:  # source == 5
        drawn = _empirical(data, ("x", "y"), n, rng)
        values = (drawn["x"], drawn["y"])
    return JointBatch(("x", "y"), values, source, connectivity(values))


def draw_three_domain_batch(source: int, bank: ThreeDomainBank, data: Dataset,
                            n: int, rng: NoiseSource) -> JointBatch:
    """Draw one labeled batch from a three-domain source recipe."""
    if source not in THREE_DOMAIN_RECIPES:
        raise ValueError(f"draw_three_domain_batch: source {source} not in 1..6")
    if n < 1:
        raise ValueError(f"draw_three_domain_batch: batch size must be positive, got {n}")
    if data.pairing != "two_overlapping_pairs":
        raise DataError(
            f"three-domain mode needs a two_overlapping_pairs dataset, got {data.pairing!r}"
        )
    recipe = THREE_DOMAIN_RECIPES[source]
    order = recipe["order"]
    nd = bank.noise_dim
    noises = (rng.draw(n, nd), rng.draw(n, nd), rng.draw(n, nd))
    if source in (1, 2):
        return sample_three_domain_chain(bank, order, noises)
    if source == 3:
        x = _empirical(data, ("x",), n, rng)["x"]
        return sample_three_domain_chain(bank, order, noises, prefix=(x.data,))
    if source == 4:
        z = _empirical(data, ("z",), n, rng)["z"]
        return sample_three_domain_chain(bank, order, noises, prefix=(z.data,))
    if source == 5:
        drawn = _empirical(data, ("x", "y"), n, rng)
        return sample_three_domain_chain(
            bank, order, noises, prefix=(drawn["x"].data, drawn["y"].data))
    drawn = _empirical(data, ("y", "z"), n, rng)
    return sample_three_domain_chain(
        bank, order, noises, prefix=(drawn["z"].data, drawn["y"].data))
