"""K-way softmax critic over concatenated joint samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nets import MLP
from .samples import JointBatch

# floor applied to probabilities inside log terms
PROB_FLOOR = 1e-12
LOG_FLOOR = float(np.log(PROB_FLOOR))


class CriticNet:
    """Shared-trunk MLP with a K-way softmax head."""

    def __init__(self, input_dim: int, num_classes: int, hidden: int = 128,
                 n_hidden: int = 3, leaky_slope: float = 0.2, seed: int = 0,
                 zero_final: bool = False):
        if num_classes < 2:
            raise ValueError(f"critic: need at least 2 classes, got {num_classes}")
        self.input_dim = input_dim
        self.num_classes = num_classes
        rng = np.random.default_rng(np.random.PCG64(int(seed)))
        self.net = MLP("critic", input_dim, num_classes, hidden, n_hidden,
                       "leaky_relu", rng, leaky_slope=leaky_slope, zero_final=zero_final)

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.net.named_parameters()

    def parameter_count(self) -> int:
        return self.net.parameter_count()

    def hyperparameters(self) -> dict:
        hp = self.net.hyperparameters()
        return {
            "kind": "critic",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": hp["hidden"],
            "n_hidden": hp["n_hidden"],
            "leaky_slope": hp["leaky_slope"],
        }


@dataclass
class CriticOutput:
    """Class log-probabilities (still on the tape) plus plain probabilities."""

    log_probs: Tensor  # (n, K)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


def evaluate(critic: CriticNet, sample: JointBatch | Tensor) -> CriticOutput:
    """Run the critic on a joint batch; log-probs come from log-softmax directly."""
    if isinstance(sample, JointBatch):
        joined = ad.concat(sample.values, axis=1)
    else:
        joined = sample
    if joined.shape[1] != critic.input_dim:
        raise ad.ShapeError(
            f"critic: sample dim {joined.shape[1]} != input dim {critic.input_dim}"
        )
    logits = critic.net(joined)
    return CriticOutput(ad.log_softmax(logits, axis=1))


def mean_class_logprob(critic: CriticNet, sample: JointBatch | Tensor, k: int) -> Tensor:
    """Mean over the batch of log g(.)[k], clamped away from -inf; k is 1-based."""
    log_probs = evaluate(critic, sample).log_probs
    column = ad.slice_(log_probs, axis=1, start=k - 1, stop=k)
    return ad.mean(ad.clamp_min(column, LOG_FLOOR))


def optimal_critic_oracle(densities, point) -> np.ndarray:
    """Closed-form optimum of the class-log-likelihood objective at one point.

    The critic maximizing sum_k E_{p_k}[log g[k]] assigns, pointwise, the
    normalized density weights p_k / sum_j p_j.
    """
    weights = np.array([float(d(point)) for d in densities], dtype=np.float64)
    if np.any(weights < 0.0):
        raise ValueError("optimal_critic_oracle: negative density value")
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("optimal_critic_oracle: all densities zero at the point")
    return weights / total
