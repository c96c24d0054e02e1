"""Alternating minimax training for all modes, plus the two-step baseline.

Every run is fully determined by (config, dataset): parameter init, batch
indices and noise all derive from the single config seed. The training log
file holds only deterministic columns so repeated runs are byte-identical;
wall-clock stays in memory.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, NonFiniteError, Tensor, adam_step, backward
from .checkpoint import (CheckpointError, load_checkpoint, require_manifest_match,
                         save_checkpoint)
from .critic import CriticNet, mean_class_logprob
from .data import DataError, Dataset
from .generators import (GeneratorBank, NoiseSource, ThreeDomainBank, TwoStepBank,
                         sample_marginal)
from .objectives import (CycleConfig, LossReport, ali_loss, cycle_reconstruction,
                         gan_loss, paired_critic_loss, paired_generator_loss,
                         source_logprob_terms, three_domain_critic_loss,
                         three_domain_generator_loss, unpaired_critic_loss,
                         unpaired_generator_loss)
from .sampling import SourceSpec, draw_batch, draw_three_domain_batch

MODES = ("paired_5", "unpaired_4", "three_domain_6", "two_step_baseline")
LOSS_STYLES = ("auto", "saturating", "nonsaturating")


class ConfigError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """All hyperparameters of one run; serialized as flat key=value text."""

    mode: str = "paired_5"
    learning_rate: float = 2e-4
    batch_size: int = 64
    total_steps: int = 1000
    critic_steps: int = 1
    noise_dim: int = 8
    cycle_weight: float = 10.0
    cycle_norm: str = "l1"
    loss_style: str = "auto"
    seed: int = 0
    gen_hidden: int = 128
    gen_layers: int = 2
    critic_hidden: int = 128
    critic_layers: int = 3
    leaky_slope: float = 0.2
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    detach_conditioning: bool = False
    log_every: int = 100
    checkpoint_every: int = 0
    baseline_stage1_fraction: float = 0.5

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("batch_size", "critic_steps", "noise_dim", "gen_hidden",
                     "gen_layers", "critic_hidden", "critic_layers", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.total_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("step counts must be nonnegative")
        if self.cycle_weight < 0.0:
            raise ConfigError(f"cycle_weight must be nonnegative, got {self.cycle_weight}")
        if self.cycle_norm not in ("l1", "l2"):
            raise ConfigError(f"cycle_norm must be l1 or l2, got {self.cycle_norm!r}")
        if self.loss_style not in LOSS_STYLES:
            raise ConfigError(f"loss_style must be one of {LOSS_STYLES}")
        if self.mode in ("unpaired_4", "three_domain_6") and self.loss_style == "nonsaturating":
            raise ConfigError(
                f"{self.mode} has no empirical class to target; loss_style nonsaturating "
                "only applies to paired_5 and two_step_baseline"
            )
        if not 0.0 < self.baseline_stage1_fraction < 1.0:
            raise ConfigError("baseline_stage1_fraction must lie in (0, 1)")

    def resolved_style(self) -> str:
        if self.loss_style != "auto":
            return self.loss_style
        return "nonsaturating" if self.mode in ("paired_5", "two_step_baseline") \
            else "saturating"

    def cycle_config(self) -> CycleConfig:
        return CycleConfig(weight=self.cycle_weight, norm=self.cycle_norm)


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = f"{value:.17g}"
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ExperimentConfig:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    config = ExperimentConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        current = getattr(config, key)
        if isinstance(current, bool):
            if value not in ("true", "false"):
                raise ConfigError(f"line {lineno}: {key} must be true or false")
            setattr(config, key, value == "true")
        elif isinstance(current, int):
            setattr(config, key, int(value))
        elif isinstance(current, float):
            setattr(config, key, float(value))
        else:
            setattr(config, key, value)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    return config_from_text(Path(path).read_text())


def set_config_value(config: ExperimentConfig, key: str, value: str) -> ExperimentConfig:
    """Typed single-field override (used by CLI --set); validates the result."""
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if key not in names:
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(config, key)
    if isinstance(current, bool):
        if value not in ("true", "false"):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        typed = value == "true"
    elif isinstance(current, int):
        typed = int(value)
    elif isinstance(current, float):
        typed = float(value)
    else:
        typed = value
    updated = dataclasses.replace(config, **{key: typed})
    updated.validate()
    return updated


@dataclass
class TrainingLog:
    steps: list[int] = field(default_factory=list)
    reports: list[LossReport] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)

    def append(self, step: int, report: LossReport) -> None:
        if self.steps and step <= self.steps[-1]:
            raise TrainingError(f"log steps must increase, got {step} after {self.steps[-1]}")
        self.steps.append(step)
        self.reports.append(report)
        self.wall_clock.append(time.time())

    def write(self, path) -> None:
        """Deterministic columns only; wall-clock never reaches the file."""
        if self.reports:
            k = len(self.reports[0].per_source_logprob)
        else:
            k = 0
        header = ["step", "critic_loss", "generator_loss"]
        header += [f"logprob_{i + 1}" for i in range(k)]
        header.append("cycle_penalty")
        lines = ["\t".join(header)]
        for step, report in zip(self.steps, self.reports):
            row = [str(step), f"{report.critic_loss:.17g}", f"{report.generator_loss:.17g}"]
            row += [f"{v:.17g}" for v in report.per_source_logprob]
            row.append(f"{report.cycle_penalty:.17g}")
            lines.append("\t".join(row))
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class TrainState:
    mode: str
    bank: object
    critics: dict[str, CriticNet]
    optimizers: dict[str, AdamState]
    noise: NoiseSource
    step: int = 0
    marginals_frozen: bool = False  # two-step baseline stage 2 flag


def _expected_pairing(mode: str) -> tuple[str, ...]:
    return {
        "paired_5": ("paired",),
        "unpaired_4": ("unpaired",),
        "three_domain_6": ("two_overlapping_pairs",),
        "two_step_baseline": ("paired", "unpaired"),
    }[mode]


def _check_mode_data(mode: str, data: Dataset) -> None:
    if data.pairing not in _expected_pairing(mode):
        raise DataError(
            f"mode {mode!r} expects pairing {_expected_pairing(mode)}, "
            f"dataset is {data.pairing!r}"
        )


def init_state(config: ExperimentConfig, data: Dataset) -> TrainState:
    config.validate()
    _check_mode_data(config.mode, data)
    dims = data.domain_dims()
    seeds = [int(s) for s in np.random.SeedSequence(config.seed).generate_state(8)]
    adam_kwargs = dict(learning_rate=config.learning_rate, beta1=config.adam_beta1,
                       beta2=config.adam_beta2, epsilon=config.adam_epsilon)
    noise = NoiseSource(seeds[2])
    if config.mode == "three_domain_6":
        bank = ThreeDomainBank(dims, config.noise_dim, hidden=config.gen_hidden,
                               n_hidden=config.gen_layers, seed=seeds[0])
        critic = CriticNet(sum(dims.values()), 6, hidden=config.critic_hidden,
                           n_hidden=config.critic_layers,
                           leaky_slope=config.leaky_slope, seed=seeds[1])
        return TrainState(config.mode, bank, {"joint": critic}, {
            "generator": AdamState(bank.parameters(), **adam_kwargs),
            "critic": AdamState(critic.parameters(), **adam_kwargs),
        }, noise)
    if config.mode == "two_step_baseline":
        bank = TwoStepBank(dims, config.noise_dim, hidden=config.gen_hidden,
                           n_hidden=config.gen_layers, seed=seeds[0])
        dx, dy = dims["x"], dims["y"]
        critics = {
            "x": CriticNet(dx, 2, hidden=config.critic_hidden,
                           n_hidden=config.critic_layers,
                           leaky_slope=config.leaky_slope, seed=seeds[3]),
            "y": CriticNet(dy, 2, hidden=config.critic_hidden,
                           n_hidden=config.critic_layers,
                           leaky_slope=config.leaky_slope, seed=seeds[4]),
            "ali": CriticNet(dx + dy, 2, hidden=config.critic_hidden,
                             n_hidden=config.critic_layers,
                             leaky_slope=config.leaky_slope, seed=seeds[5]),
        }
        optimizers = {
            "marg_x": AdamState(bank.marg_x.parameters(), **adam_kwargs),
            "marg_y": AdamState(bank.marg_y.parameters(), **adam_kwargs),
            "conditionals": AdamState(bank.conditional_parameters(), **adam_kwargs),
            "critic_x": AdamState(critics["x"].parameters(), **adam_kwargs),
            "critic_y": AdamState(critics["y"].parameters(), **adam_kwargs),
            "critic_ali": AdamState(critics["ali"].parameters(), **adam_kwargs),
        }
        return TrainState(config.mode, bank, critics, optimizers, noise)
    k = 5 if config.mode == "paired_5" else 4
    bank = GeneratorBank(dims, config.noise_dim, hidden=config.gen_hidden,
                         n_hidden=config.gen_layers, seed=seeds[0])
    critic = CriticNet(sum(dims.values()), k, hidden=config.critic_hidden,
                       n_hidden=config.critic_layers,
                       leaky_slope=config.leaky_slope, seed=seeds[1])
    return TrainState(config.mode, bank, {"joint": critic}, {
        "generator": AdamState(bank.parameters(), **adam_kwargs),
        "critic": AdamState(critic.parameters(), **adam_kwargs),
    }, noise)


def _batch_stats(batches) -> str:
    parts = []
    for k in sorted(batches):
        for domain, value in zip(batches[k].domains, batches[k].values):
            d = value.data
            parts.append(
                f"source {k} {domain}: mean={np.mean(d):.4g} min={np.min(d):.4g} "
                f"max={np.max(d):.4g}"
            )
    return "; ".join(parts)


def _draw_all(mode: str, bank, data: Dataset, n: int, noise: NoiseSource):
    spec = SourceSpec(mode)
    batches = {}
    for k in range(1, spec.num_sources + 1):
        if mode == "three_domain_6":
            batches[k] = draw_three_domain_batch(k, bank, data, n, noise)
        else:
            batches[k] = draw_batch(spec, k, bank, data, n, noise)
    return batches


def train_step(state: TrainState, config: ExperimentConfig, data: Dataset) -> LossReport:
    """critic_steps critic updates, then one generator update, fresh batches each.

    Returns the generator-phase LossReport and advances the step counter.
    """
    if state.mode == "two_step_baseline":
        return _two_step_train_step(state, config, data)
    critic = state.critics["joint"]
    mode = state.mode
    last_batches = None
    try:
        for _ in range(config.critic_steps):
            with ad.no_grad():
                batches = _draw_all(mode, state.bank, data, config.batch_size, state.noise)
            last_batches = batches
            if mode == "paired_5":
                loss = paired_critic_loss(critic, batches)
            elif mode == "unpaired_4":
                loss = unpaired_critic_loss(critic, batches)
            else:
                loss = three_domain_critic_loss(critic, batches)
            backward(loss)
            adam_step(state.optimizers["critic"])

        batches = _draw_all(mode, state.bank, data, config.batch_size, state.noise)
        last_batches = batches
        cycle_value = 0.0
        if mode == "paired_5":
            gen_loss = paired_generator_loss(critic, batches, config.resolved_style())
        elif mode == "unpaired_4":
            gen_loss, penalty = unpaired_generator_loss(
                critic, batches, config.cycle_config(), state.bank, state.noise,
                config.resolved_style())
            cycle_value = penalty.item()
        else:
            gen_loss = three_domain_generator_loss(critic, batches, config.resolved_style())
        gen_value = gen_loss.item()
        with ad.no_grad():
            sources = tuple(sorted(batches))
            logprobs = tuple(t.item() for t in
                             source_logprob_terms(critic, batches, sources))
        backward(gen_loss)
        adam_step(state.optimizers["generator"])
    except NonFiniteError as exc:
        stats = _batch_stats(last_batches) if last_batches else "no batches drawn"
        raise TrainingError(
            f"non-finite loss at step {state.step + 1}: {exc}; last batches: {stats}"
        ) from exc
    state.step += 1
    return LossReport(
        critic_loss=-sum(logprobs),
        generator_loss=gen_value,
        per_source_logprob=logprobs,
        cycle_penalty=cycle_value,
    )


def _stage1_steps(config: ExperimentConfig) -> int:
    return int(round(config.total_steps * config.baseline_stage1_fraction))


def _two_step_train_step(state: TrainState, config: ExperimentConfig,
                         data: Dataset) -> LossReport:
    """Stage 1 fits the two marginal GANs, stage 2 the conditional matcher.

    Parameter sets are disjoint; stage 2 freezes the marginals so no
    information flows back into them.
    """
    bank: TwoStepBank = state.bank
    style = config.resolved_style()
    n = config.batch_size
    in_stage1 = state.step < _stage1_steps(config)
    try:
        if in_stage1:
            logprobs = []
            gen_total = 0.0
            for domain, critic_name in (("x", "x"), ("y", "y")):
                critic = state.critics[critic_name]
                rows = data.marginal(domain)
                nd = bank.marginal_noise_dim(domain)
                for _ in range(config.critic_steps):
                    real = Tensor(rows[state.noise.indices(n, rows.shape[0])])
                    with ad.no_grad():
                        fake = sample_marginal(bank, domain, state.noise.draw(n, nd))
                    critic_loss, _ = gan_loss(critic, real, fake, style)
                    backward(critic_loss)
                    adam_step(state.optimizers[f"critic_{critic_name}"])
                real = Tensor(rows[state.noise.indices(n, rows.shape[0])])
                fake = sample_marginal(bank, domain, state.noise.draw(n, nd))
                critic_loss, gen_loss = gan_loss(critic, real, fake, style)
                with ad.no_grad():
                    logprobs.append(mean_class_logprob(critic, real, 1).item())
                    logprobs.append(mean_class_logprob(critic, fake, 2).item())
                gen_total += gen_loss.item()
                backward(gen_loss)
                adam_step(state.optimizers[f"marg_{domain}"])
            state.step += 1
            logprobs = tuple(logprobs)
            return LossReport(-sum(logprobs), gen_total, logprobs, 0.0)

        if not state.marginals_frozen:
            for p in bank.marginal_parameters():
                p.requires_grad = False
            state.marginals_frozen = True
        critic = state.critics["ali"]
        spec = SourceSpec("paired_5" if data.pairing == "paired" else "unpaired_4")
        for _ in range(config.critic_steps):
            with ad.no_grad():
                b_theta = draw_batch(spec, 1, bank, data, n, state.noise)
                b_phi = draw_batch(spec, 2, bank, data, n, state.noise)
            critic_loss, _ = ali_loss(critic, b_theta, b_phi, style)
            backward(critic_loss)
            adam_step(state.optimizers["critic_ali"])
        b_theta = draw_batch(spec, 1, bank, data, n, state.noise)
        b_phi = draw_batch(spec, 2, bank, data, n, state.noise)
        critic_loss, gen_loss = ali_loss(critic, b_theta, b_phi, style)
        cycle_value = 0.0
        if data.pairing == "unpaired":
            x = b_theta.values[0].detach()
            y = b_phi.values[1].detach()
            penalty = ad.mul(
                cycle_reconstruction(bank, x, y, config.cycle_config(), state.noise),
                config.cycle_weight)
            cycle_value = penalty.item()
            gen_loss = ad.add(gen_loss, penalty)
        with ad.no_grad():
            lp = (mean_class_logprob(critic, b_theta, 1).item(),
                  mean_class_logprob(critic, b_phi, 2).item(), 0.0, 0.0)
        gen_value = gen_loss.item()
        backward(gen_loss)
        adam_step(state.optimizers["conditionals"])
    except NonFiniteError as exc:
        raise TrainingError(f"non-finite loss at step {state.step + 1}: {exc}") from exc
    state.step += 1
    return LossReport(-sum(lp), gen_value, lp, cycle_value)


def train(config: ExperimentConfig, data: Dataset, out_dir=None,
          resume_from=None) -> tuple[TrainState, TrainingLog]:
    """Run total_steps steps, logging and checkpointing along the way."""
    config.validate()
    _check_mode_data(config.mode, data)
    if resume_from is not None:
        state = restore_state(resume_from, config, data)
    else:
        state = init_state(config, data)
    log = TrainingLog()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    while state.step < config.total_steps:
        report = train_step(state, config, data)
        log.append(state.step, report)
        if out is not None:
            if state.step % config.log_every == 0:
                log.write(out / "train_log.tsv")
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                save_state(state, config, out / f"checkpoint_{state.step:07d}.ckpt")
    if out is not None:
        log.write(out / "train_log.tsv")
        save_state(state, config, out / "checkpoint.ckpt")
    return state, log


def train_two_step_baseline(config: ExperimentConfig, data: Dataset,
                            out_dir=None) -> tuple[TrainState, TrainingLog]:
    """Marginal GANs first, conditional matcher second, disjoint parameters."""
    if config.mode != "two_step_baseline":
        config = dataclasses.replace(config, mode="two_step_baseline")
    return train(config, data, out_dir=out_dir)


# ---------------------------------------------------------------------------
# checkpointing


def save_state(state: TrainState, config: ExperimentConfig, path) -> None:
    manifest = {
        "kind": "train_state",
        "mode": state.mode,
        "step": state.step,
        "config": dataclasses.asdict(config),
        "bank": state.bank.hyperparameters(),
        "critics": {name: c.hyperparameters() for name, c in state.critics.items()},
        "noise_state": state.noise.state(),
        "opt_steps": {name: opt.step for name, opt in state.optimizers.items()},
        "marginals_frozen": state.marginals_frozen,
    }
    tensors: list[tuple[str, np.ndarray]] = []
    for name, p in state.bank.named_parameters():
        tensors.append((f"bank/{name}", p.data))
    for critic_name, critic in sorted(state.critics.items()):
        for name, p in critic.named_parameters():
            tensors.append((f"critics/{critic_name}/{name}", p.data))
    for opt_name, opt in sorted(state.optimizers.items()):
        for i, (m, v) in enumerate(zip(opt.first_moment, opt.second_moment)):
            tensors.append((f"opt/{opt_name}/m{i}", m))
            tensors.append((f"opt/{opt_name}/v{i}", v))
    save_checkpoint(path, manifest, tensors)


def _load_into(params: list[tuple[str, Tensor]], tensors: dict[str, np.ndarray],
               prefix: str, path) -> None:
    for name, p in params:
        key = f"{prefix}/{name}"
        if key not in tensors:
            raise CheckpointError(f"{path}: missing tensor {key!r}")
        stored = tensors[key]
        if stored.shape != p.data.shape:
            raise CheckpointError(
                f"{path}: tensor {key!r} has shape {stored.shape}, expected {p.data.shape}"
            )
        p.data = stored.copy()


def restore_state(path, config: ExperimentConfig, data: Dataset) -> TrainState:
    """Rebuild a TrainState and resume bit-exactly from a checkpoint."""
    manifest, tensors = load_checkpoint(path)
    if manifest.get("kind") != "train_state":
        raise CheckpointError(f"{path}: not a training checkpoint")
    state = init_state(config, data)
    require_manifest_match(manifest, {"mode": config.mode}, str(path))
    require_manifest_match(manifest["bank"], state.bank.hyperparameters(), str(path))
    stored_config = manifest.get("config", {})
    for key in ("gen_hidden", "gen_layers", "critic_hidden", "critic_layers", "noise_dim"):
        if stored_config.get(key) != getattr(config, key):
            raise CheckpointError(
                f"{path}: config field {key!r} is {stored_config.get(key)!r}, "
                f"expected {getattr(config, key)!r}"
            )
    _load_into(state.bank.named_parameters(), tensors, "bank", path)
    for critic_name, critic in state.critics.items():
        _load_into(critic.named_parameters(), tensors, f"critics/{critic_name}", path)
    for opt_name, opt in state.optimizers.items():
        opt.step = manifest["opt_steps"][opt_name]
        for i in range(len(opt.params)):
            for moments, tag in ((opt.first_moment, "m"), (opt.second_moment, "v")):
                key = f"opt/{opt_name}/{tag}{i}"
                if key not in tensors:
                    raise CheckpointError(f"{path}: missing tensor {key!r}")
                moments[i] = tensors[key].copy()
    state.noise.set_state(manifest["noise_state"])
    state.step = manifest["step"]
    if manifest.get("marginals_frozen"):
        for p in state.bank.marginal_parameters():
            p.requires_grad = False
        state.marginals_frozen = True
    return state


def bank_from_manifest(manifest: dict):
    """Reconstruct a bank (untrained) from its checkpoint manifest entry."""
    info = manifest["bank"]
    dims = {k: int(v) for k, v in info["domain_dims"].items()}
    kind = info["kind"]
    if kind == "coupled_two_domain":
        noise_dims = {k: int(v) for k, v in info["noise_dims"].items()}
        return GeneratorBank(dims, noise_dims, hidden=info["hidden"],
                             n_hidden=info["n_hidden"], seed=info["seed"])
    if kind == "two_step_baseline":
        noise_dims = {k: int(v) for k, v in info["noise_dims"].items()}
        return TwoStepBank(dims, noise_dims, hidden=info["hidden"],
                           n_hidden=info["n_hidden"], seed=info["seed"])
    if kind == "three_domain":
        return ThreeDomainBank(dims, int(info["noise_dims"]["all"]),
                               hidden=info["hidden"], n_hidden=info["n_hidden"],
                               seed=info["seed"])
    raise CheckpointError(f"unknown bank kind {kind!r}")


def load_bank(path):
    """Load a trained bank (and manifest) from a checkpoint, for sampling/eval."""
    manifest, tensors = load_checkpoint(path)
    if manifest.get("kind") != "train_state":
        raise CheckpointError(f"{path}: not a training checkpoint")
    bank = bank_from_manifest(manifest)
    _load_into(bank.named_parameters(), tensors, "bank", path)
    return bank, manifest


def load_critic(path, name: str = "joint") -> CriticNet:
    manifest, tensors = load_checkpoint(path)
    critics = manifest.get("critics", {})
    if name not in critics:
        raise CheckpointError(f"{path}: checkpoint has no critic named {name!r}")
    info = critics[name]
    critic = CriticNet(int(info["input_dim"]), int(info["num_classes"]),
                       hidden=int(info["hidden"]), n_hidden=int(info["n_hidden"]),
                       leaky_slope=float(info["leaky_slope"]))
    _load_into(critic.named_parameters(), tensors, f"critics/{name}", path)
    return critic
