"""Command-line entry points for end-to-end experiments.

Verbs: gen-data, train, sample, eval, gradcheck, confusion, export-plots.
Module errors exit with code 1 and a one-line diagnostic; usage errors exit
with code 2. Every artifact-producing run writes a manifest echoing the
resolved configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as datamod
from . import evaluation as evalmod
from .autodiff import Tensor
from .critic import CriticNet
from .data import SyntheticSpec
from .generators import (GeneratorBank, NoiseSource, ThreeDomainBank, TwoStepBank,
                         sample_conditional, sample_joint_chain, sample_marginal,
                         sample_three_domain_chain)
from .gradcheck import run_gradcheck
from .sampling import SourceSpec
from .training import (ExperimentConfig, load_bank, load_config, load_critic,
                       set_config_value, train)

GRADCHECK_THRESHOLD = 1e-4


def _write_manifest(path: Path, verb: str, entries: dict) -> None:
    lines = [f"verb={verb}"]
    for key, value in entries.items():
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n")


def _spec_from_args(args) -> SyntheticSpec:
    return SyntheticSpec(
        family=args.family, n=args.n, dim=args.dim, rho=args.rho,
        components=args.components, radius=args.radius,
        component_std=args.component_std, rotation_deg=args.rotation_deg,
        ring_radius=args.ring_radius, ring_noise=args.ring_noise,
        angle_shift_deg=args.angle_shift_deg, map_scale=args.map_scale,
        map_noise=args.map_noise, chain_noise=args.chain_noise,
    )


def cmd_gen_data(args) -> int:
    spec = _spec_from_args(args)
    ds = datamod.generate(spec, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datamod.save(ds, out)
    entries = {f"spec.{k}": v for k, v in dataclasses.asdict(spec).items()}
    entries["seed"] = args.seed
    entries["out"] = out
    _write_manifest(out.with_suffix(out.suffix + ".manifest"), "gen-data", entries)
    print(f"wrote {ds.tables[0].n} rows per table to {out}")
    return 0


def _view_for_mode(mode: str, requested: str) -> str:
    if requested != "auto":
        return requested
    return {
        "paired_5": "paired",
        "unpaired_4": "unpaired",
        "three_domain_6": "two_overlapping_pairs",
        "two_step_baseline": "paired",
    }[mode]


def cmd_train(args) -> int:
    config = load_config(args.config)
    for override in args.set or []:
        key, sep, value = override.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {override!r}")
        config = set_config_value(config, key.strip(), value.strip())
    view = _view_for_mode(config.mode, args.view)
    dataset = datamod.load(args.data, view, seed=config.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_entries = dict(
        (f"config.{k}", v) for k, v in dataclasses.asdict(config).items())
    manifest_entries["data"] = args.data
    manifest_entries["view"] = view
    manifest_entries["out_dir"] = out_dir
    _write_manifest(out_dir / "manifest.txt", "train", manifest_entries)
    state, log = train(config, dataset, out_dir=out_dir,
                       resume_from=args.resume)
    last = log.reports[-1] if log.reports else None
    if last is not None:
        print(f"step {state.step}: critic_loss={last.critic_loss:.6g} "
              f"generator_loss={last.generator_loss:.6g}")
    print(f"checkpoint: {out_dir / 'checkpoint.ckpt'}")
    return 0


def _sample_two_domain(bank, args, noise: NoiseSource):
    dims = bank.domain_dims
    if args.source == "marginal":
        domain = args.domain
        values = sample_marginal(bank, domain, noise.draw(args.n, bank.marginal_noise_dim(domain)))
        return (domain,), (values,)
    if args.source == "joint":
        order = args.order if args.order != "auto" else "x_then_y"
        first = "x" if order == "x_then_y" else "y"
        direction = "y_given_x" if order == "x_then_y" else "x_given_y"
        batch = sample_joint_chain(bank, order, (
            noise.draw(args.n, bank.marginal_noise_dim(first)),
            noise.draw(args.n, bank.conditional_noise_dim(direction))))
        return batch.domains, batch.values
    # conditional: read conditions from a dataset-format file
    direction = args.direction
    cond_domain = "x" if direction == "y_given_x" else "y"
    out_domain = "y" if direction == "y_given_x" else "x"
    given = datamod.load(args.given, "paired")
    rows = given.marginal(cond_domain)
    if rows.shape[1] != dims[cond_domain]:
        raise ad.ShapeError(
            f"conditions file {args.given} has {cond_domain} dim {rows.shape[1]}, "
            f"checkpoint expects {dims[cond_domain]}"
        )
    n = rows.shape[0]
    cond = Tensor(rows)
    out = sample_conditional(bank, direction, cond,
                             noise.draw(n, bank.conditional_noise_dim(direction)))
    if cond_domain == "x":
        return ("x", "y"), (cond, out)
    return ("x", "y"), (out, cond)


def _sample_three_domain(bank: ThreeDomainBank, args, noise: NoiseSource):
    nd = bank.noise_dim
    if args.source == "marginal":
        values = bank.marginal(args.domain, noise.draw(args.n, nd))
        return (args.domain,), (values,)
    if args.source == "joint":
        order = args.order if args.order != "auto" else "x_y_z"
        batch = sample_three_domain_chain(
            bank, order, (noise.draw(args.n, nd), noise.draw(args.n, nd),
                          noise.draw(args.n, nd)))
        return batch.domains, batch.values
    direction = args.direction
    chains = {
        "z_given_xy": ("x_y_z", ("x", "y")),
        "y_given_x": ("x_y_z", ("x",)),
        "x_given_yz": ("z_y_x", ("z", "y")),
        "y_given_z": ("z_y_x", ("z",)),
    }
    if direction not in chains:
        raise SystemExit(f"--direction {direction!r} not supported for three-domain checkpoints")
    order, needed = chains[direction]
    given = datamod.load(args.given, "two_overlapping_pairs") \
        if direction in ("z_given_xy", "x_given_yz") else datamod.load(args.given, "paired")
    try:
        cols = given.joint(tuple(sorted(needed)))
        by_name = dict(zip(tuple(sorted(needed)), cols))
    except datamod.DataError:
        by_name = {d: given.marginal(d) for d in needed}
    for d in needed:
        if by_name[d].shape[1] != bank.domain_dims[d]:
            raise ad.ShapeError(
                f"conditions file {args.given} has {d} dim {by_name[d].shape[1]}, "
                f"checkpoint expects {bank.domain_dims[d]}"
            )
    n = by_name[needed[0]].shape[0]
    prefix = tuple(by_name[d] for d in needed)
    batch = sample_three_domain_chain(
        bank, order, (noise.draw(n, nd), noise.draw(n, nd), noise.draw(n, nd)),
        prefix=prefix)
    return batch.domains, batch.values


def cmd_sample(args) -> int:
    bank, manifest = load_bank(args.checkpoint)
    noise = NoiseSource(args.seed)
    with ad.no_grad():
        if isinstance(bank, ThreeDomainBank):
            domains, values = _sample_three_domain(bank, args, noise)
        else:
            domains, values = _sample_two_domain(bank, args, noise)
    columns = {d: v.data for d, v in zip(domains, values)}
    ds = datamod.Dataset("paired", [datamod.Table(tuple(domains), columns)],
                         {"seed": args.seed})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datamod.save(ds, out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest"), "sample", {
        "checkpoint": args.checkpoint, "source": args.source,
        "domain": args.domain, "order": args.order, "direction": args.direction,
        "given": args.given, "n": args.n, "seed": args.seed, "out": out,
    })
    print(f"wrote {next(iter(columns.values())).shape[0]} samples to {out}")
    return 0


def cmd_eval(args) -> int:
    bank, manifest = load_bank(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise = NoiseSource(args.seed)
    if isinstance(bank, ThreeDomainBank):
        dataset = datamod.load(args.data, "two_overlapping_pairs")
        report = _eval_three_domain(bank, dataset, args.n, noise)
    else:
        dataset = datamod.load(args.data, "paired")
        report = _eval_two_domain(bank, dataset, args.n, noise)
    evalmod.write_metric_summary(report, out_dir / "eval_summary.txt")
    evalmod.append_metric_row(report, out_dir / "eval_log.tsv")
    _write_manifest(out_dir / "eval_manifest.txt", "eval", {
        "checkpoint": args.checkpoint, "data": args.data, "n": args.n,
        "seed": args.seed, "out_dir": out_dir,
    })
    for key, value in report.as_items():
        print(f"{key}={value:.6g}")
    return 0


def _eval_two_domain(bank, dataset, n: int, noise: NoiseSource) -> evalmod.MetricReport:
    truth = np.concatenate(dataset.joint(("x", "y")), axis=1)
    if truth.shape[0] > n:
        truth = truth[:n]
    with ad.no_grad():
        batch = sample_joint_chain(bank, "x_then_y", (
            noise.draw(n, bank.marginal_noise_dim("x")),
            noise.draw(n, bank.conditional_noise_dim("y_given_x"))))
    generated = np.concatenate([v.data for v in batch.values], axis=1)
    bandwidths = evalmod.default_bandwidths(truth)
    report = evalmod.MetricReport(
        mmd2=evalmod.mmd2(generated, truth, bandwidths),
        energy_distance=evalmod.energy_distance(generated, truth),
    )
    offset = 0
    for domain in ("x", "y"):
        dim = bank.domain_dims[domain]
        gen_col = generated[:, offset:offset + dim]
        true_col = truth[:, offset:offset + dim]
        bw = evalmod.default_bandwidths(true_col)
        report.per_marginal_mmd2[domain] = evalmod.mmd2(gen_col, true_col, bw)
        offset += dim
    spec = None
    try:
        spec = datamod.spec_from_metadata(dataset.metadata)
    except datamod.DataError:
        pass
    if spec is not None and spec.family == "deterministic_map":
        report.conditional_rmse = evalmod.conditional_consistency(bank, spec, n, noise)
        report.extras["conditional_rmse_symmetric"] = evalmod.conditional_consistency(
            bank, spec, n, noise, nearest_symmetry=True)
    if not isinstance(bank, ThreeDomainBank):
        report.cycle_error = evalmod.cycle_error(bank, dataset, n, noise)
    return report


def _eval_three_domain(bank: ThreeDomainBank, dataset, n: int,
                       noise: NoiseSource) -> evalmod.MetricReport:
    with ad.no_grad():
        nd = bank.noise_dim
        batch = sample_three_domain_chain(
            bank, "x_y_z", (noise.draw(n, nd), noise.draw(n, nd), noise.draw(n, nd)))
    gen = {d: v.data for d, v in zip(batch.domains, batch.values)}
    report = evalmod.MetricReport(mmd2=np.nan, energy_distance=np.nan)
    for pair in (("x", "y"), ("y", "z")):
        true_pair = np.concatenate(dataset.joint(pair), axis=1)
        if true_pair.shape[0] > n:
            true_pair = true_pair[:n]
        gen_pair = np.concatenate([gen[pair[0]], gen[pair[1]]], axis=1)
        bw = evalmod.default_bandwidths(true_pair)
        report.extras[f"mmd2_{pair[0]}{pair[1]}"] = evalmod.mmd2(gen_pair, true_pair, bw)
        report.extras[f"energy_{pair[0]}{pair[1]}"] = evalmod.energy_distance(
            gen_pair, true_pair)
    corr = np.corrcoef(gen["x"][:, 0], gen["z"][:, 0])[0, 1]
    report.extras["corr_xz"] = float(corr)
    return report


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed)
    worst = max(results.values())
    for name in sorted(results):
        print(f"{name}: {results[name]:.3e}")
    print(f"max_relative_error={worst:.6e}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"{k}={v:.17g}" for k, v in sorted(results.items())]
        (out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
        _write_manifest(out / "gradcheck_manifest.txt", "gradcheck",
                        {"seed": args.seed, "out": out})
    return 0 if worst < GRADCHECK_THRESHOLD else 1


def cmd_confusion(args) -> int:
    bank, manifest = load_bank(args.checkpoint)
    mode = manifest["config"]["mode"]
    critic = load_critic(args.checkpoint, "joint")
    view = _view_for_mode(mode, "auto")
    dataset = datamod.load(args.data, view, seed=int(manifest["config"]["seed"]))
    spec = SourceSpec(mode)
    noise = NoiseSource(args.seed)
    matrix = evalmod.critic_confusion(critic, spec, bank, dataset,
                                      args.n_per_source, noise)
    for row in matrix:
        print("\t".join(f"{v:.6f}" for v in row))
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["\t".join(f"{v:.17g}" for v in row) for row in matrix]
        (out / "confusion.tsv").write_text("\n".join(lines) + "\n")
        _write_manifest(out / "confusion_manifest.txt", "confusion", {
            "checkpoint": args.checkpoint, "data": args.data,
            "n_per_source": args.n_per_source, "seed": args.seed, "out": out,
        })
    return 0


def cmd_export_plots(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.log is not None:
        lines = Path(args.log).read_text().splitlines()
        header = lines[0].split("\t")
        rows = [line.split("\t") for line in lines[1:]]
        step_idx = header.index("step")
        for column, name in enumerate(header):
            if name == "step":
                continue
            series = out / f"{name}.dat"
            body = [f"# step {name}"]
            body += [f"{r[step_idx]} {r[column]}" for r in rows]
            series.write_text("\n".join(body) + "\n")
            wrote.append(series)
    if args.samples is not None:
        ds = datamod.load(args.samples, "paired")
        table = ds.tables[0]
        names = []
        for d in table.domains:
            for j in range(table.columns[d].shape[1]):
                names.append(f"{d}{j}")
        stacked = np.concatenate([table.columns[d] for d in table.domains], axis=1)
        series = out / "samples.dat"
        body = ["# " + " ".join(names)]
        body += [" ".join(f"{v:.17g}" for v in row) for row in stacked]
        series.write_text("\n".join(body) + "\n")
        wrote.append(series)
    if not wrote:
        raise SystemExit("export-plots: pass --log and/or --samples")
    _write_manifest(out / "export_manifest.txt", "export-plots", {
        "log": args.log, "samples": args.samples, "out_dir": out,
    })
    for path in wrote:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointgen",
        description="Joint-distribution adversarial learning toolkit",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic benchmark dataset")
    p.add_argument("--family", required=True, choices=datamod.FAMILIES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--components", type=int, default=8)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--component-std", dest="component_std", type=float, default=0.1)
    p.add_argument("--rotation-deg", dest="rotation_deg", type=float, default=45.0)
    p.add_argument("--ring-radius", dest="ring_radius", type=float, default=1.0)
    p.add_argument("--ring-noise", dest="ring_noise", type=float, default=0.05)
    p.add_argument("--angle-shift-deg", dest="angle_shift_deg", type=float, default=90.0)
    p.add_argument("--map-scale", dest="map_scale", type=float, default=2.0)
    p.add_argument("--map-noise", dest="map_noise", type=float, default=0.0)
    p.add_argument("--chain-noise", dest="chain_noise", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--view", default="auto",
                   choices=("auto", "paired", "unpaired", "two_overlapping_pairs"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config entry")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", required=True, choices=("marginal", "joint", "conditional"))
    p.add_argument("--domain", default="x", choices=("x", "y", "z"))
    p.add_argument("--order", default="auto",
                   choices=("auto", "x_then_y", "y_then_x", "x_y_z", "z_y_x"))
    p.add_argument("--direction", default="y_given_x",
                   choices=("y_given_x", "x_given_y", "z_given_xy", "x_given_yz", "y_given_z"))
    p.add_argument("--given", default=None, help="dataset file of conditioning values")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="distribution-matching metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of ops and losses")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("confusion", help="critic confusion matrix on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-per-source", dest="n_per_source", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("export-plots", help="convert logs/samples to columnar files")
    p.add_argument("--log", default=None)
    p.add_argument("--samples", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb == "sample" and args.source == "conditional" and not args.given:
        parser.error("sample --source conditional requires --given")
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ad.AutodiffError, datamod.DataError, evalmod.EvalError,
            RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
