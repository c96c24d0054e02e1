"""Adversarial losses for every mode, plus equilibrium diagnostics.

The critic side of each mode is a K-class log-likelihood: the critic
minimizes -sum_k mean log g(.)[k] over the K source batches. Generators
either descend their own class terms directly (``saturating``, the minimax
objective as written) or, in paired mode, push synthetic sources toward the
empirical class (``nonsaturating``, the usual stabilization).

Critic losses treat generated samples as constants; generator losses run
with critic parameters frozen, so the two parameter sets never receive
gradients from each other's phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor, frozen
from .critic import CriticNet, mean_class_logprob
from .generators import NoiseSource, sample_conditional
from .samples import JointBatch

GENERATOR_LOSS_STYLES = ("saturating", "nonsaturating")


@dataclass
class LossReport:
    """One training step's losses; critic_loss == -sum(per_source_logprob)."""

    critic_loss: float
    generator_loss: float
    per_source_logprob: tuple[float, ...]
    cycle_penalty: float = 0.0


@dataclass
class CycleConfig:
    weight: float = 10.0
    norm: str = "l1"

    def __post_init__(self):
        if self.weight < 0.0:
            raise ValueError(f"cycle weight must be nonnegative, got {self.weight}")
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"cycle norm must be l1 or l2, got {self.norm!r}")


def _detached(batch: JointBatch) -> JointBatch:
    values = tuple(v.detach() for v in batch.values)
    return JointBatch(batch.domains, values, batch.source, (False,) * len(values))


def _check_sources(batches: dict[int, JointBatch], wanted: tuple[int, ...], op: str) -> None:
    missing = [k for k in wanted if k not in batches]
    if missing:
        raise ValueError(f"{op}: missing source batches {missing}")
    for k in wanted:
        if batches[k].n < 1:
            raise ValueError(f"{op}: empty batch for source {k}")


def source_logprob_terms(critic: CriticNet, batches: dict[int, JointBatch],
                         sources: tuple[int, ...], detach: bool = True) -> list[Tensor]:
    """Mean log g(.)[k] for each requested source, in order."""
    terms = []
    for k in sources:
        batch = _detached(batches[k]) if detach else batches[k]
        terms.append(mean_class_logprob(critic, batch, k))
    return terms


def _neg_sum(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.mul(total, -1.0)


def _classification_loss(critic: CriticNet, batches: dict[int, JointBatch],
                         num_sources: int, op: str) -> Tensor:
    wanted = tuple(range(1, num_sources + 1))
    _check_sources(batches, wanted, op)
    if critic.num_classes != num_sources:
        raise ValueError(
            f"{op}: critic has {critic.num_classes} classes, need {num_sources}"
        )
    return _neg_sum(source_logprob_terms(critic, batches, wanted))


def paired_critic_loss(critic: CriticNet, batches: dict[int, JointBatch]) -> Tensor:
    """Five-way classification loss; generated samples enter detached."""
    return _classification_loss(critic, batches, 5, "paired_critic_loss")


def unpaired_critic_loss(critic: CriticNet, batches: dict[int, JointBatch]) -> Tensor:
    return _classification_loss(critic, batches, 4, "unpaired_critic_loss")


def three_domain_critic_loss(critic: CriticNet, batches: dict[int, JointBatch]) -> Tensor:
    return _classification_loss(critic, batches, 6, "three_domain_critic_loss")


def paired_generator_loss(critic: CriticNet, batches: dict[int, JointBatch],
                          style: str = "nonsaturating") -> Tensor:
    """Generator objective over the four synthetic sources.

    saturating: descend +sum mean log g[k] (the minimax objective itself);
    nonsaturating: descend -sum mean log g[5] (push toward the empirical
    class). Source 5 carries no generator gradient and is ignored here.
    """
    if style not in GENERATOR_LOSS_STYLES:
        raise ValueError(f"paired_generator_loss: unknown style {style!r}")
    synthetic = (1, 2, 3, 4)
    _check_sources(batches, synthetic, "paired_generator_loss")
    if critic.num_classes != 5:
        raise ValueError(
            f"paired_generator_loss: critic has {critic.num_classes} classes, need 5"
        )
    with frozen(critic.parameters()):
        if style == "saturating":
            terms = source_logprob_terms(critic, batches, synthetic, detach=False)
            return ad.mul(_neg_sum(terms), -1.0)
        terms = [mean_class_logprob(critic, batches[k], 5) for k in synthetic]
        return _neg_sum(terms)


def cycle_reconstruction(bank, x: Tensor, y: Tensor, cycle: CycleConfig,
                         rng: NoiseSource) -> Tensor:
    """Mean reconstruction error of both cycles, with fresh noise draws.

    x -> generated y -> reconstructed x, and y -> generated x ->
    reconstructed y; each row's norm is averaged over the batch.
    """
    n = x.shape[0]
    norm = ad.l1_norm if cycle.norm == "l1" else ad.l2_norm
    y_mid = sample_conditional(bank, "y_given_x", x,
                               rng.draw(n, bank.conditional_noise_dim("y_given_x")))
    x_back = sample_conditional(bank, "x_given_y", y_mid,
                                rng.draw(n, bank.conditional_noise_dim("x_given_y")))
    m = y.shape[0]
    x_mid = sample_conditional(bank, "x_given_y", y,
                               rng.draw(m, bank.conditional_noise_dim("x_given_y")))
    y_back = sample_conditional(bank, "y_given_x", x_mid,
                                rng.draw(m, bank.conditional_noise_dim("y_given_x")))
    err_x = ad.mean(norm(ad.sub(x, x_back), axis=1))
    err_y = ad.mean(norm(ad.sub(y, y_back), axis=1))
    return ad.add(err_x, err_y)


def unpaired_generator_loss(critic: CriticNet, batches: dict[int, JointBatch],
                            cycle: CycleConfig, bank, rng: NoiseSource,
                            style: str = "saturating") -> tuple[Tensor, Tensor]:
    """Adversarial generator loss plus weighted cycle term.

    Returns (total loss, weighted cycle penalty). Only the saturating style
    exists here: with no empirical class in the four-way critic there is no
    "real" class to push toward.
    """
    if style != "saturating":
        raise ValueError(
            f"unpaired_generator_loss: style must be saturating, got {style!r}"
        )
    synthetic = (1, 2, 3, 4)
    _check_sources(batches, synthetic, "unpaired_generator_loss")
    if critic.num_classes != 4:
        raise ValueError(
            f"unpaired_generator_loss: critic has {critic.num_classes} classes, need 4"
        )
    with frozen(critic.parameters()):
        terms = source_logprob_terms(critic, batches, synthetic, detach=False)
        adversarial = ad.mul(_neg_sum(terms), -1.0)
    # cycles start from the empirical components of sources 1 and 2
    x = batches[1].values[0].detach()
    y = batches[2].values[1].detach()
    penalty = ad.mul(cycle_reconstruction(bank, x, y, cycle, rng), cycle.weight)
    return ad.add(adversarial, penalty), penalty


def unpaired_losses(critic: CriticNet, batches: dict[int, JointBatch],
                    cycle: CycleConfig, bank, rng: NoiseSource,
                    style: str = "saturating") -> LossReport:
    """Full unpaired-mode report on one set of batches (no gradients kept)."""
    with ad.no_grad():
        wanted = (1, 2, 3, 4)
        _check_sources(batches, wanted, "unpaired_losses")
        terms = source_logprob_terms(critic, batches, wanted)
        logprobs = tuple(t.item() for t in terms)
        generator, penalty = unpaired_generator_loss(critic, batches, cycle, bank,
                                                     rng, style)
        return LossReport(
            critic_loss=-sum(logprobs),
            generator_loss=generator.item(),
            per_source_logprob=logprobs,
            cycle_penalty=penalty.item(),
        )


def three_domain_generator_loss(critic: CriticNet, batches: dict[int, JointBatch],
                                style: str = "saturating") -> Tensor:
    """All six sources contain generated components, so all contribute."""
    if style != "saturating":
        raise ValueError(
            f"three_domain_generator_loss: style must be saturating, got {style!r}"
        )
    wanted = (1, 2, 3, 4, 5, 6)
    _check_sources(batches, wanted, "three_domain_generator_loss")
    if critic.num_classes != 6:
        raise ValueError(
            f"three_domain_generator_loss: critic has "
            f"{critic.num_classes} classes, need 6"
        )
    with frozen(critic.parameters()):
        terms = source_logprob_terms(critic, batches, wanted, detach=False)
        return ad.mul(_neg_sum(terms), -1.0)


def three_domain_losses(critic: CriticNet, batches: dict[int, JointBatch],
                        bank=None, style: str = "saturating") -> LossReport:
    with ad.no_grad():
        wanted = (1, 2, 3, 4, 5, 6)
        _check_sources(batches, wanted, "three_domain_losses")
        terms = source_logprob_terms(critic, batches, wanted)
        logprobs = tuple(t.item() for t in terms)
        generator = three_domain_generator_loss(critic, batches, style)
        return LossReport(
            critic_loss=-sum(logprobs),
            generator_loss=generator.item(),
            per_source_logprob=logprobs,
            cycle_penalty=0.0,
        )


def gan_loss(critic2: CriticNet, real: Tensor, fake: Tensor,
             style: str = "nonsaturating") -> tuple[Tensor, Tensor]:
    """Two-class GAN losses; the first class plays the "real" role."""
    if critic2.num_classes != 2:
        raise ValueError(f"gan_loss: critic has {critic2.num_classes} classes, need 2")
    if style not in GENERATOR_LOSS_STYLES:
        raise ValueError(f"gan_loss: unknown style {style!r}")
    if real.shape[0] < 1 or fake.shape[0] < 1:
        raise ValueError("gan_loss: empty batch")
    critic_loss = _neg_sum([
        mean_class_logprob(critic2, real, 1),
        mean_class_logprob(critic2, fake.detach(), 2),
    ])
    with frozen(critic2.parameters()):
        if style == "nonsaturating":
            generator_loss = _neg_sum([mean_class_logprob(critic2, fake, 1)])
        else:
            generator_loss = ad.mul(_neg_sum([mean_class_logprob(critic2, fake, 2)]), -1.0)
    return critic_loss, generator_loss


def ali_loss(critic2: CriticNet, batch_ptheta: JointBatch, batch_pphi: JointBatch,
             style: str = "nonsaturating") -> tuple[Tensor, Tensor]:
    """Two-class conditional matcher: q(x) p(y|x) pairs vs q(y) p(x|y) pairs.

    Both conditional generators receive gradients through their synthetic
    components.
    """
    if critic2.num_classes != 2:
        raise ValueError(f"ali_loss: critic has {critic2.num_classes} classes, need 2")
    if batch_ptheta.n < 1 or batch_pphi.n < 1:
        raise ValueError("ali_loss: empty batch")
    critic_loss = _neg_sum([
        mean_class_logprob(critic2, _detached(batch_ptheta), 1),
        mean_class_logprob(critic2, _detached(batch_pphi), 2),
    ])
    with frozen(critic2.parameters()):
        if style == "nonsaturating":
            generator_loss = _neg_sum([
                mean_class_logprob(critic2, batch_ptheta, 2),
                mean_class_logprob(critic2, batch_pphi, 1),
            ])
        else:
            generator_loss = ad.mul(_neg_sum([
                mean_class_logprob(critic2, batch_ptheta, 1),
                mean_class_logprob(critic2, batch_pphi, 2),
            ]), -1.0)
    return critic_loss, generator_loss


def equilibrium_value(num_classes: int) -> float:
    """Objective value when all K sources coincide and the critic is optimal."""
    if num_classes < 2:
        raise ValueError(f"equilibrium_value: need K >= 2, got {num_classes}")
    return num_classes * math.log(1.0 / num_classes)
