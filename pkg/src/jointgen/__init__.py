"""Joint-distribution adversarial learning with coupled generators and a
softmax critic: marginals, conditionals and full joint chains trained
against a single K-way classifier."""

from .autodiff import (AdamState, AutodiffError, Graph, NonFiniteError, ShapeError,
                       Tensor, adam_step, backward, finite_difference_check, no_grad)
from .critic import CriticNet, CriticOutput, evaluate, optimal_critic_oracle
from .data import Dataset, SyntheticSpec, generate, holdout_split, load, save
from .generators import (GeneratorBank, NoiseSource, ThreeDomainBank, TwoStepBank,
                         sample_conditional, sample_joint_chain, sample_marginal,
                         sample_three_domain_chain)
from .objectives import (CycleConfig, LossReport, ali_loss, equilibrium_value,
                         gan_loss, paired_critic_loss, paired_generator_loss,
                         three_domain_losses, unpaired_losses)
from .samples import JointBatch
from .sampling import SourceSpec, draw_batch, draw_three_domain_batch
from .training import ExperimentConfig, TrainingLog, train, train_step, train_two_step_baseline
from .evaluation import (MetricReport, critic_confusion, conditional_consistency,
                         energy_distance, equilibrium_oracle, mmd2,
                         mmd2_permutation_null)

__version__ = "0.1.0"
