import math

import numpy as np
import pytest

from jointgen import autodiff as ad
from jointgen.autodiff import Tensor, backward, finite_difference_check
from jointgen.critic import CriticNet
from jointgen.data import SyntheticSpec, as_view, generate
from jointgen.generators import GeneratorBank, NoiseSource, ThreeDomainBank
from jointgen.objectives import (CycleConfig, ali_loss, cycle_reconstruction,
                                 equilibrium_value, gan_loss, paired_critic_loss,
                                 paired_generator_loss, three_domain_losses,
                                 unpaired_generator_loss, unpaired_losses)
from jointgen.samples import JointBatch
from jointgen.sampling import SourceSpec, draw_batch, draw_three_domain_batch


def uniform_critic(input_dim, k):
    return CriticNet(input_dim, k, hidden=8, n_hidden=2, seed=0, zero_final=True)


@pytest.fixture
def paired_setup():
    data = generate(SyntheticSpec("correlated_gaussian", n=200, dim=1, rho=0.8), seed=0)
    bank = GeneratorBank({"x": 1, "y": 1}, noise_dims=3, hidden=8, n_hidden=2, seed=1)
    spec = SourceSpec("paired_5")
    noise = NoiseSource(2)
    batches = {k: draw_batch(spec, k, bank, data, 6, noise) for k in range(1, 6)}
    return bank, batches


@pytest.fixture
def unpaired_setup():
    data = as_view(
        generate(SyntheticSpec("correlated_gaussian", n=200, dim=1, rho=0.8), seed=0),
        "unpaired", seed=3)
    bank = GeneratorBank({"x": 1, "y": 1}, noise_dims=3, hidden=8, n_hidden=2, seed=1)
    spec = SourceSpec("unpaired_4")
    noise = NoiseSource(2)
    batches = {k: draw_batch(spec, k, bank, data, 6, noise) for k in range(1, 5)}
    return bank, batches


def test_uniform_critic_paired_loss_is_5ln5(paired_setup):
    _, batches = paired_setup
    loss = paired_critic_loss(uniform_critic(2, 5), batches)
    assert loss.item() == pytest.approx(5.0 * math.log(5.0), abs=1e-9)
    ad.active_graph().clear()


def test_perfect_critic_loss_approaches_zero(paired_setup):
    _, batches = paired_setup
    critic = CriticNet(2, 5, hidden=8, n_hidden=2, seed=0, zero_final=True)
    # enormous correct-class logits emulate a saturated critic; the clamp
    # keeps every term finite
    for k, batch in batches.items():
        joined = np.concatenate([v.data for v in batch.values], axis=1)
    critic.net.biases[-1].data = np.zeros(5)
    losses = []
    for bias_scale in (50.0,):
        for k in range(1, 6):
            critic.net.biases[-1].data = np.full(5, -bias_scale)
            critic.net.biases[-1].data[k - 1] = bias_scale
            from jointgen.critic import mean_class_logprob
            losses.append(-mean_class_logprob(critic, batches[k], k).item())
    total = sum(losses)
    assert 0.0 <= total < 1e-9
    ad.active_graph().clear()


def test_paired_critic_loss_gradients_only_reach_critic(paired_setup):
    bank, batches = paired_setup
    critic = CriticNet(2, 5, hidden=8, n_hidden=2, seed=4)
    loss = paired_critic_loss(critic, batches)
    backward(loss)
    assert all(p.grad is not None for p in critic.parameters())
    assert all(p.grad is None for p in bank.parameters())


def test_paired_generator_loss_gradients_only_reach_generators(paired_setup):
    bank, batches = paired_setup
    critic = CriticNet(2, 5, hidden=8, n_hidden=2, seed=4)
    loss = paired_generator_loss(critic, batches, "nonsaturating")
    backward(loss)
    assert all(p.grad is None for p in critic.parameters())
    assert any(p.grad is not None and np.abs(p.grad).max() > 0
               for p in bank.parameters())


def test_uniform_critic_generator_loss_values(paired_setup):
    _, batches = paired_setup
    critic = uniform_critic(2, 5)
    saturating = paired_generator_loss(critic, batches, "saturating")
    assert saturating.item() == pytest.approx(4.0 * math.log(1.0 / 5.0), abs=1e-9)
    nonsaturating = paired_generator_loss(critic, batches, "nonsaturating")
    assert nonsaturating.item() == pytest.approx(4.0 * math.log(5.0), abs=1e-9)
    ad.active_graph().clear()


def test_paired_generator_loss_matches_finite_differences(paired_setup):
    bank, _ = paired_setup
    critic = CriticNet(2, 5, hidden=8, n_hidden=2, seed=4)
    data = generate(SyntheticSpec("correlated_gaussian", n=50, dim=1, rho=0.8), seed=5)
    spec = SourceSpec("paired_5")

    def f():
        batches = {k: draw_batch(spec, k, bank, data, 4, NoiseSource(7))
                   for k in range(1, 6)}
        return paired_generator_loss(critic, batches, "nonsaturating")

    err = finite_difference_check(f, bank.theta.parameters(), h=1e-5)
    assert err < 1e-4


def test_missing_source_rejected(paired_setup):
    _, batches = paired_setup
    critic = uniform_critic(2, 5)
    del batches[3]
    with pytest.raises(ValueError, match="missing source"):
        paired_critic_loss(critic, batches)


def test_loss_report_decomposition(unpaired_setup):
    bank, batches = unpaired_setup
    critic = CriticNet(2, 4, hidden=8, n_hidden=2, seed=6)
    report = unpaired_losses(critic, batches, CycleConfig(weight=1.0), bank,
                             NoiseSource(8))
    assert report.critic_loss == pytest.approx(-sum(report.per_source_logprob), abs=1e-9)
    assert len(report.per_source_logprob) == 4
    assert report.cycle_penalty > 0.0


def test_cycle_penalty_zero_for_identity_generators():
    # condition passthrough: final layer wired to copy the condition input
    bank = GeneratorBank({"x": 1, "y": 1}, noise_dims=2, hidden=4, n_hidden=1,
                         seed=0, zero_final=True)
    for net, cond_dim in ((bank.phi, 1), (bank.theta, 1)):
        w = np.zeros((4, 1))
        first = np.zeros((cond_dim + 2, 4))
        # route condition -> first hidden unit (small weight keeps tanh linear)
        first[0, 0] = 1e-6
        net.weights[0].data = first
        w[0, 0] = 1e6
        net.weights[-1].data = w
    x = Tensor(np.array([[0.0], [0.0]]))
    y = Tensor(np.array([[0.0], [0.0]]))
    err = cycle_reconstruction(bank, x, y, CycleConfig(weight=1.0, norm="l1"),
                               NoiseSource(1))
    assert err.item() == pytest.approx(0.0, abs=1e-9)
    ad.active_graph().clear()


def test_cycle_penalty_matches_hand_computation():
    bank = GeneratorBank({"x": 1, "y": 1}, noise_dims=2, hidden=4, n_hidden=1, seed=3)
    x = Tensor(np.array([[1.0], [-2.0]]))
    y = Tensor(np.array([[0.5], [0.25]]))
    rng = NoiseSource(4)
    with ad.no_grad():
        got = cycle_reconstruction(bank, x, y, CycleConfig(weight=1.0, norm="l1"), rng)
    # replay the same noise draws by reusing the seed
    rng2 = NoiseSource(4)
    from jointgen.generators import sample_conditional
    with ad.no_grad():
        y_mid = sample_conditional(bank, "y_given_x", x, rng2.draw(2, 2))
        x_back = sample_conditional(bank, "x_given_y", y_mid, rng2.draw(2, 2))
        x_mid = sample_conditional(bank, "x_given_y", y, rng2.draw(2, 2))
        y_back = sample_conditional(bank, "y_given_x", x_mid, rng2.draw(2, 2))
    expected = (np.abs(x.data - x_back.data).sum(axis=1).mean()
                + np.abs(y.data - y_back.data).sum(axis=1).mean())
    assert got.item() == pytest.approx(expected, rel=1e-12)


def test_unpaired_lambda_zero_is_pure_adversarial(unpaired_setup):
    bank, batches = unpaired_setup
    critic = CriticNet(2, 4, hidden=8, n_hidden=2, seed=6)
    with ad.no_grad():
        with_cycle, penalty = unpaired_generator_loss(
            critic, batches, CycleConfig(weight=0.0), bank, NoiseSource(8))
        pure, _ = unpaired_generator_loss(
            critic, batches, CycleConfig(weight=0.0), bank, NoiseSource(8))
    assert penalty.item() == 0.0
    assert with_cycle.item() == pytest.approx(pure.item(), rel=1e-12)


def test_unpaired_cycle_gradients_reach_both_generators(unpaired_setup):
    bank, batches = unpaired_setup
    critic = CriticNet(2, 4, hidden=8, n_hidden=2, seed=6)
    loss, _ = unpaired_generator_loss(critic, batches, CycleConfig(weight=5.0),
                                      bank, NoiseSource(9))
    backward(loss)
    assert any(p.grad is not None for p in bank.theta.parameters())
    assert any(p.grad is not None for p in bank.phi.parameters())


def test_negative_cycle_weight_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        CycleConfig(weight=-1.0)


# ---------------------------------------------------------------------------
# three domains


@pytest.fixture
def three_setup():
    data = generate(SyntheticSpec("three_domain_chain", n=200, dim=1), seed=0)
    bank = ThreeDomainBank({"x": 1, "y": 1, "z": 1}, noise_dim=3, hidden=8,
                           n_hidden=2, seed=1)
    noise = NoiseSource(2)
    batches = {k: draw_three_domain_batch(k, bank, data, 6, noise)
               for k in range(1, 7)}
    return bank, batches


def test_three_domain_uniform_critic_loss(three_setup):
    bank, batches = three_setup
    critic = uniform_critic(3, 6)
    report = three_domain_losses(critic, batches, bank)
    assert report.critic_loss == pytest.approx(6.0 * math.log(6.0), abs=1e-9)


def test_three_domain_simplex_output(three_setup):
    bank, batches = three_setup
    critic = CriticNet(3, 6, hidden=8, n_hidden=2, seed=7)
    from jointgen.critic import evaluate
    with ad.no_grad():
        probs = evaluate(critic, batches[1]).probs
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_three_domain_gamma_gradient_sources(three_setup):
    # gamma appears in chains 1, 3, 5 and houses the z marginal used by
    # chain 2, so exactly sources 1, 2, 3, 5 reach it; 4 and 6 do not
    bank, _ = three_setup
    data = generate(SyntheticSpec("three_domain_chain", n=200, dim=1), seed=0)
    critic = CriticNet(3, 6, hidden=8, n_hidden=2, seed=7)
    from jointgen.objectives import source_logprob_terms
    reached = {}
    for k in range(1, 7):
        for p in bank.parameters():
            p.grad = None
        batch = draw_three_domain_batch(k, bank, data, 5, NoiseSource(k))
        with ad.frozen(critic.parameters()):
            term = source_logprob_terms(critic, {k: batch}, (k,), detach=False)[0]
        backward(term)
        reached[k] = any(p.grad is not None and np.abs(p.grad).max() > 0
                         for p in bank.gamma.parameters())
    assert reached == {1: True, 2: True, 3: True, 4: False, 5: True, 6: False}


# ---------------------------------------------------------------------------
# two-class objectives


def test_gan_loss_uniform_critic():
    critic = uniform_critic(1, 2)
    real = Tensor(np.random.default_rng(0).normal(size=(8, 1)))
    fake = Tensor(np.random.default_rng(1).normal(size=(8, 1)))
    critic_loss, _ = gan_loss(critic, real, fake)
    assert critic_loss.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-9)
    ad.active_graph().clear()


def test_gan_equilibrium_probs_half():
    # fake == real in distribution: the optimal critic cannot beat 1/2,
    # where the loss sits at 2 ln 2
    assert equilibrium_value(2) == pytest.approx(-2.0 * math.log(2.0))


def test_gan_empty_batch_rejected():
    critic = uniform_critic(1, 2)
    real = Tensor(np.zeros((0, 1)))
    fake = Tensor(np.zeros((4, 1)))
    with pytest.raises(ValueError, match="empty"):
        gan_loss(critic, real, fake)


def test_ali_loss_uniform_critic_and_gradients():
    critic = uniform_critic(2, 2)
    bank = GeneratorBank({"x": 1, "y": 1}, noise_dims=2, hidden=4, n_hidden=1, seed=0)
    rng = NoiseSource(0)
    from jointgen.generators import sample_conditional
    x = Tensor(np.random.default_rng(2).normal(size=(5, 1)))
    y = Tensor(np.random.default_rng(3).normal(size=(5, 1)))
    from jointgen.samples import JointBatch, connectivity
    ty = sample_conditional(bank, "y_given_x", x, rng.draw(5, 2))
    b_theta = JointBatch(("x", "y"), (x, ty), 1, connectivity((x, ty)))
    tx = sample_conditional(bank, "x_given_y", y, rng.draw(5, 2))
    b_phi = JointBatch(("x", "y"), (tx, y), 2, connectivity((tx, y)))
    critic_loss, gen_loss = ali_loss(critic, b_theta, b_phi)
    assert critic_loss.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-9)
    backward(gen_loss)
    assert any(p.grad is not None for p in bank.theta.parameters())
    assert any(p.grad is not None for p in bank.phi.parameters())
    assert all(p.grad is None for p in critic.parameters())


def test_equilibrium_value_cases():
    assert equilibrium_value(5) == pytest.approx(-5.0 * math.log(5.0))
    assert equilibrium_value(2) == pytest.approx(-2.0 * math.log(2.0))
    assert equilibrium_value(6) == pytest.approx(-6.0 * math.log(6.0))
    with pytest.raises(ValueError, match="K >= 2"):
        equilibrium_value(1)
