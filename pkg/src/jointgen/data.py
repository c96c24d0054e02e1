"""Synthetic benchmark distributions, dataset serialization and views.

Datasets are one or more row-aligned tables of named domain columns. The
file format is a plain text header plus tab-separated float rows printed
with 17 significant digits, so a save/load round-trip is bit-exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_MAGIC = "#jointgen-dataset 1"
PAIRINGS = ("paired", "unpaired", "two_overlapping_pairs")
FAMILIES = (
    "correlated_gaussian",
    "gaussian_mixture_pairs",
    "ring_pairs",
    "deterministic_map",
    "three_domain_chain",
)


class DataError(RuntimeError):
    pass


@dataclass
class SyntheticSpec:
    """Parameters of one synthetic benchmark distribution."""

    family: str
    n: int
    dim: int = 1
    rho: float = 0.9            # correlated_gaussian
    components: int = 8         # gaussian_mixture_pairs
    radius: float = 2.0
    component_std: float = 0.1
    rotation_deg: float = 45.0
    ring_radius: float = 1.0    # ring_pairs
    ring_noise: float = 0.05
    angle_shift_deg: float = 90.0
    map_scale: float = 2.0      # deterministic_map: y = map_scale * x + noise
    map_noise: float = 0.0
    chain_noise: float = 0.1    # three_domain_chain: y = x + e, z = -y + e'

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        if self.n <= 0:
            raise DataError(f"sample count must be positive, got {self.n}")
        if self.dim <= 0:
            raise DataError(f"dim must be positive, got {self.dim}")
        if self.family == "correlated_gaussian" and not -1.0 < self.rho < 1.0:
            raise DataError(f"correlation must lie in (-1, 1), got {self.rho}")
        if self.family == "gaussian_mixture_pairs":
            if self.components < 1:
                raise DataError(f"need at least one component, got {self.components}")
            if self.component_std <= 0.0:
                raise DataError(f"component std must be positive, got {self.component_std}")
        if self.family == "ring_pairs" and self.ring_noise < 0.0:
            raise DataError(f"ring noise must be nonnegative, got {self.ring_noise}")
        if self.family == "deterministic_map" and self.map_noise < 0.0:
            raise DataError(f"map noise must be nonnegative, got {self.map_noise}")
        if self.family == "three_domain_chain" and self.chain_noise < 0.0:
            raise DataError(f"chain noise must be nonnegative, got {self.chain_noise}")

    def domain_dims(self) -> dict[str, int]:
        if self.family in ("gaussian_mixture_pairs", "ring_pairs"):
            return {"x": 2, "y": 2}
        if self.family == "three_domain_chain":
            return {"x": self.dim, "y": self.dim, "z": self.dim}
        return {"x": self.dim, "y": self.dim}

    # ground truth for the deterministic-map benchmark
    def true_map(self, x: np.ndarray) -> np.ndarray:
        if self.family != "deterministic_map":
            raise DataError(f"family {self.family!r} has no ground-truth map")
        return self.map_scale * x

    def symmetric_maps(self):
        """Conditional maps indistinguishable from unpaired marginals alone.

        x is symmetric about the origin, so y = +scale*x and y = -scale*x
        induce the same pair of marginals.
        """
        if self.family != "deterministic_map":
            raise DataError(f"family {self.family!r} has no ground-truth map")
        scale = self.map_scale
        return [lambda x: scale * x, lambda x: -scale * x]

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Fresh draws from the x marginal (for evaluation)."""
        if self.family in ("correlated_gaussian", "deterministic_map", "three_domain_chain"):
            return rng.standard_normal((n, self.dim))
        raise DataError(f"family {self.family!r} has no closed-form x marginal sampler")


@dataclass
class Table:
    domains: tuple[str, ...]
    columns: dict[str, np.ndarray]

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).shape[0]


@dataclass
class Dataset:
    pairing: str
    tables: list[Table]
    metadata: dict = field(default_factory=dict)

    def domain_names(self) -> list[str]:
        seen: list[str] = []
        for table in self.tables:
            for d in table.domains:
                if d not in seen:
                    seen.append(d)
        return seen

    def domain_dim(self, domain: str) -> int:
        for table in self.tables:
            if domain in table.domains:
                return table.columns[domain].shape[1]
        raise DataError(f"dataset has no domain {domain!r}")

    def domain_dims(self) -> dict[str, int]:
        return {d: self.domain_dim(d) for d in self.domain_names()}

    def marginal(self, domain: str) -> np.ndarray:
        """All rows of one domain column (alignment-free access)."""
        for table in self.tables:
            if domain in table.domains:
                return table.columns[domain]
        raise DataError(f"dataset has no domain {domain!r}")

    def joint(self, domains: tuple[str, ...]) -> tuple[np.ndarray, ...]:
        """Row-aligned columns for jointly observed domains."""
        if self.pairing == "unpaired":
            raise DataError(
                f"joint draws over {domains} are not available in an unpaired view"
            )
        for table in self.tables:
            if all(d in table.domains for d in domains):
                return tuple(table.columns[d] for d in domains)
        raise DataError(f"no table jointly observes domains {domains}")


def generate(spec: SyntheticSpec, seed: int) -> Dataset:
    """Sample a reproducible dataset from a synthetic family."""
    spec.validate()
    rng = np.random.default_rng(np.random.PCG64(int(seed)))
    meta = {"spec": dataclasses.asdict(spec), "seed": int(seed)}
    n, d = spec.n, spec.dim
    if spec.family == "correlated_gaussian":
        x = rng.standard_normal((n, d))
        y = spec.rho * x + np.sqrt(1.0 - spec.rho ** 2) * rng.standard_normal((n, d))
        tables = [Table(("x", "y"), {"x": x, "y": y})]
        pairing = "paired"
    elif spec.family == "gaussian_mixture_pairs":
        angles = 2.0 * np.pi * np.arange(spec.components) / spec.components
        centers = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        comp = rng.integers(0, spec.components, size=n)
        x = centers[comp] + spec.component_std * rng.standard_normal((n, 2))
        theta = np.deg2rad(spec.rotation_deg)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        y = x @ rot.T + spec.component_std * rng.standard_normal((n, 2))
        tables = [Table(("x", "y"), {"x": x, "y": y})]
        pairing = "paired"
    elif spec.family == "ring_pairs":
        u = rng.uniform(0.0, 2.0 * np.pi, size=n)
        shift = np.deg2rad(spec.angle_shift_deg)
        x = spec.ring_radius * np.stack([np.cos(u), np.sin(u)], axis=1)
        y = spec.ring_radius * np.stack([np.cos(u + shift), np.sin(u + shift)], axis=1)
        x = x + spec.ring_noise * rng.standard_normal((n, 2))
        y = y + spec.ring_noise * rng.standard_normal((n, 2))
        tables = [Table(("x", "y"), {"x": x, "y": y})]
        pairing = "paired"
    elif spec.family == "deterministic_map":
        x = rng.standard_normal((n, d))
        y = spec.map_scale * x
        if spec.map_noise > 0.0:
            y = y + spec.map_noise * rng.standard_normal((n, d))
        tables = [Table(("x", "y"), {"x": x, "y": y})]
        pairing = "paired"
    else:  # three_domain_chain
        # two independent batches of triples; each table exposes one pair,
        # so the full triple is never jointly observed
        def triples(m):
            x = rng.standard_normal((m, d))
            y = x + spec.chain_noise * rng.standard_normal((m, d))
            z = -y + spec.chain_noise * rng.standard_normal((m, d))
            return x, y, z

        x1, y1, _ = triples(n)
        _, y2, z2 = triples(n)
        tables = [
            Table(("x", "y"), {"x": x1, "y": y1}),
            Table(("y", "z"), {"y": y2, "z": z2}),
        ]
        pairing = "two_overlapping_pairs"
    return Dataset(pairing, tables, meta)


# ---------------------------------------------------------------------------
# serialization


def save(ds: Dataset, path) -> None:
    lines = [FORMAT_MAGIC, f"#pairing {ds.pairing}"]
    if "seed" in ds.metadata:
        lines.append(f"#seed {ds.metadata['seed']}")
    spec = ds.metadata.get("spec")
    if spec:
        echo = " ".join(f"{k}={v}" for k, v in spec.items())
        lines.append(f"#spec {echo}")
    for table in ds.tables:
        dims = " ".join(f"{d}:{table.columns[d].shape[1]}" for d in table.domains)
        lines.append(f"#table {dims}")
        lines.append(f"#rows {table.n}")
        stacked = np.concatenate([table.columns[d] for d in table.domains], axis=1)
        for row in stacked:
            lines.append("\t".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load(path, view: str, seed: int = 0) -> Dataset:
    """Load a dataset under the requested pairing view.

    The unpaired view breaks row alignment by shuffling every column with an
    independent stream derived from ``seed``.
    """
    if view not in PAIRINGS:
        raise DataError(f"unknown pairing view {view!r}")
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_MAGIC:
        raise DataError(f"{path}: not a dataset file (missing header)")
    pairing = None
    metadata: dict = {}
    tables: list[Table] = []
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("#pairing "):
            pairing = line.split(maxsplit=1)[1]
            i += 1
        elif line.startswith("#seed "):
            metadata["seed"] = int(line.split(maxsplit=1)[1])
            i += 1
        elif line.startswith("#spec "):
            spec: dict = {}
            for item in line.split()[1:]:
                k, _, v = item.partition("=")
                spec[k] = v
            metadata["spec"] = spec
            i += 1
        elif line.startswith("#table "):
            domains = []
            dims = []
            for item in line.split()[1:]:
                name, _, dim = item.partition(":")
                domains.append(name)
                dims.append(int(dim))
            i += 1
            if i >= len(lines) or not lines[i].startswith("#rows "):
                raise DataError(f"{path}: table header missing #rows line")
            n = int(lines[i].split(maxsplit=1)[1])
            i += 1
            body = lines[i:i + n]
            if len(body) < n:
                raise DataError(f"{path}: expected {n} rows, found {len(body)}")
            raw = np.array([[float(v) for v in row.split("\t")] for row in body])
            if raw.shape[1] != sum(dims):
                raise DataError(
                    f"{path}: rows have {raw.shape[1]} columns, header says {sum(dims)}"
                )
            columns = {}
            offset = 0
            for name, dim in zip(domains, dims):
                columns[name] = raw[:, offset:offset + dim]
                offset += dim
            tables.append(Table(tuple(domains), columns))
            i += n
        else:
            raise DataError(f"{path}: unrecognized header line {line!r}")
    if pairing not in PAIRINGS:
        raise DataError(f"{path}: missing or invalid #pairing header")
    if not tables:
        raise DataError(f"{path}: no tables found")
    ds = Dataset(pairing, tables, metadata)
    return as_view(ds, view, seed)


def as_view(ds: Dataset, view: str, seed: int = 0) -> Dataset:
    """Re-expose a dataset under a (possibly weaker) pairing view."""
    if view == ds.pairing:
        if view != "unpaired":
            return ds
    if view == "paired":
        if ds.pairing != "paired":
            raise DataError(f"paired view requested but file pairing is {ds.pairing!r}")
        return ds
    if view == "two_overlapping_pairs":
        if ds.pairing != "two_overlapping_pairs":
            raise DataError(
                f"two_overlapping_pairs view requested but file pairing is {ds.pairing!r}"
            )
        return ds
    # unpaired view: independent per-column shuffles destroy the pairing
    if ds.pairing == "two_overlapping_pairs":
        raise DataError("unpaired view of a two_overlapping_pairs dataset is not defined")
    seeds = np.random.SeedSequence(seed).spawn(len(ds.tables[0].domains))
    columns = {}
    for child, domain in zip(seeds, ds.tables[0].domains):
        rng = np.random.default_rng(child)
        col = ds.tables[0].columns[domain]
        columns[domain] = col[rng.permutation(col.shape[0])]
    table = Table(ds.tables[0].domains, columns)
    return Dataset("unpaired", [table], dict(ds.metadata))


def holdout_split(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint train/test row partition; ``fraction`` is the held-out share."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"holdout fraction must lie in (0, 1), got {fraction}")
    seeds = np.random.SeedSequence(seed).spawn(len(ds.tables))
    train_tables, test_tables = [], []
    for child, table in zip(seeds, ds.tables):
        rng = np.random.default_rng(child)
        perm = rng.permutation(table.n)
        n_test = int(round(table.n * fraction))
        if n_test == 0 or n_test == table.n:
            raise DataError(
                f"holdout fraction {fraction} degenerates on {table.n} rows"
            )
        test_idx, train_idx = perm[:n_test], perm[n_test:]
        train_tables.append(Table(table.domains,
                                  {d: c[train_idx] for d, c in table.columns.items()}))
        test_tables.append(Table(table.domains,
                                 {d: c[test_idx] for d, c in table.columns.items()}))
    return (Dataset(ds.pairing, train_tables, dict(ds.metadata)),
            Dataset(ds.pairing, test_tables, dict(ds.metadata)))


def spec_from_metadata(metadata: dict) -> SyntheticSpec:
    """Rebuild the generating spec from a dataset's header echo."""
    raw = metadata.get("spec")
    if not raw:
        raise DataError("dataset metadata carries no generator spec")
    # header values are strings when they come from a file
    spec = SyntheticSpec(family=str(raw["family"]), n=int(raw["n"]))
    for f in dataclasses.fields(SyntheticSpec):
        if f.name in ("family", "n") or f.name not in raw:
            continue
        current = getattr(spec, f.name)
        caster = type(current)
        setattr(spec, f.name, caster(raw[f.name]))
    spec.validate()
    return spec
