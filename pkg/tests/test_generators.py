import numpy as np
import pytest

from jointgen import autodiff as ad
from jointgen.autodiff import ShapeError, Tensor, backward, finite_difference_check
from jointgen.generators import (GeneratorBank, NoiseSource, ThreeDomainBank,
                                 TwoStepBank, sample_conditional, sample_joint_chain,
                                 sample_marginal, sample_three_domain_chain)

DIMS = {"x": 2, "y": 1}


def make_bank(seed=0, **kwargs):
    return GeneratorBank(DIMS, noise_dims=3, hidden=16, n_hidden=2, seed=seed, **kwargs)


def test_noise_source_identical_seed_identical_draws():
    a = NoiseSource(42).draw(5, 3)
    b = NoiseSource(42).draw(5, 3)
    np.testing.assert_array_equal(a.data, b.data)


def test_noise_source_streams_advance():
    src = NoiseSource(42)
    first = src.draw(5, 3)
    second = src.draw(5, 3)
    assert not np.array_equal(first.data, second.data)


def test_marginal_equals_zero_conditioned_conditional_bit_exact():
    bank = make_bank()
    for trial in range(100):
        eps = NoiseSource(trial).draw(4, 3)
        marg = sample_marginal(bank, "x", eps)
        cond = sample_conditional(bank, "x_given_y", Tensor(np.zeros((4, 1))), eps)
        assert np.array_equal(marg.data, cond.data)
        marg_y = sample_marginal(bank, "y", eps)
        cond_y = sample_conditional(bank, "y_given_x", Tensor(np.zeros((4, 2))), eps)
        assert np.array_equal(marg_y.data, cond_y.data)
    ad.active_graph().clear()


def test_marginal_deterministic_under_fixed_seed():
    bank = make_bank()
    with ad.no_grad():
        a = sample_marginal(bank, "x", NoiseSource(7).draw(8, 3))
        b = sample_marginal(bank, "x", NoiseSource(7).draw(8, 3))
    np.testing.assert_array_equal(a.data, b.data)


def test_zero_final_layer_gives_zero_output():
    bank = make_bank(zero_final=True)
    with ad.no_grad():
        out = sample_marginal(bank, "x", NoiseSource(0).draw(6, 3))
    np.testing.assert_array_equal(out.data, np.zeros((6, 2)))


def test_conditional_outputs_differ_across_noise():
    bank = make_bank()
    cond = Tensor(np.ones((4, 2)))
    with ad.no_grad():
        src = NoiseSource(1)
        a = sample_conditional(bank, "y_given_x", cond, src.draw(4, 3))
        b = sample_conditional(bank, "y_given_x", cond, src.draw(4, 3))
    assert not np.allclose(a.data, b.data)


def test_conditional_gradient_wrt_condition_matches_fd():
    bank = make_bank()
    condition = Tensor(np.random.default_rng(5).normal(size=(3, 2)), requires_grad=True)
    eps = NoiseSource(9).draw(3, 3)
    weight = Tensor(np.random.default_rng(6).normal(size=(3, 1)))

    def f():
        out = sample_conditional(bank, "y_given_x", condition, eps)
        return ad.mean(ad.mul(out, weight))

    assert finite_difference_check(f, [condition], h=1e-5) < 1e-4


def test_conditional_dimension_mismatch():
    bank = make_bank()
    with pytest.raises(ShapeError, match="condition dim"):
        sample_conditional(bank, "y_given_x", Tensor(np.zeros((4, 3))),
                           NoiseSource(0).draw(4, 3))
    with pytest.raises(ShapeError, match="noise dim"):
        sample_conditional(bank, "y_given_x", Tensor(np.zeros((4, 2))),
                           NoiseSource(0).draw(4, 5))


def test_joint_chain_first_element_equals_marginal():
    bank = make_bank()
    eps1 = NoiseSource(3).draw(5, 3)
    eps2 = NoiseSource(4).draw(5, 3)
    with ad.no_grad():
        batch = sample_joint_chain(bank, "x_then_y", (eps1, eps2))
        marg = sample_marginal(bank, "x", eps1)
    np.testing.assert_array_equal(batch.values[0].data, marg.data)
    assert batch.source == 3
    assert batch.domains == ("x", "y")


def test_joint_chain_deterministic():
    bank = make_bank()
    with ad.no_grad():
        a = sample_joint_chain(bank, "y_then_x",
                               (NoiseSource(1).draw(4, 3), NoiseSource(2).draw(4, 3)))
        b = sample_joint_chain(bank, "y_then_x",
                               (NoiseSource(1).draw(4, 3), NoiseSource(2).draw(4, 3)))
    for va, vb in zip(a.values, b.values):
        np.testing.assert_array_equal(va.data, vb.data)
    assert a.source == 4


def test_joint_chain_gradient_reaches_marginal_parameters():
    # the conditioning value is not detached, so a loss on y alone
    # back-propagates into the x-producing network
    bank = make_bank()
    batch = sample_joint_chain(bank, "x_then_y",
                               (NoiseSource(1).draw(6, 3), NoiseSource(2).draw(6, 3)))
    backward(ad.mean(batch.values[1]))
    grads = [p.grad for p in bank.phi.parameters()]
    assert any(g is not None and np.abs(g).max() > 0.0 for g in grads)


def test_joint_chain_detach_blocks_marginal_gradient():
    bank = make_bank()
    batch = sample_joint_chain(bank, "x_then_y",
                               (NoiseSource(1).draw(6, 3), NoiseSource(2).draw(6, 3)),
                               detach_condition=True)
    backward(ad.mean(batch.values[1]))
    assert all(p.grad is None for p in bank.phi.parameters())


def test_coupled_bank_has_no_extra_marginal_parameters():
    bank = make_bank()
    conditional_total = bank.phi.parameter_count() + bank.theta.parameter_count()
    assert bank.parameter_count() == conditional_total


def test_two_step_bank_has_more_parameters_than_coupled():
    coupled = GeneratorBank(DIMS, noise_dims=3, hidden=16, n_hidden=2, seed=0)
    two_step = TwoStepBank(DIMS, noise_dims=3, hidden=16, n_hidden=2, seed=0)
    assert two_step.parameter_count() > coupled.parameter_count()


def test_two_step_marginal_uses_dedicated_network():
    bank = TwoStepBank(DIMS, noise_dims=3, hidden=16, n_hidden=2, seed=0)
    eps = NoiseSource(0).draw(4, 3)
    with ad.no_grad():
        out = sample_marginal(bank, "x", eps)
        direct = bank.marg_x(eps)
    np.testing.assert_array_equal(out.data, direct.data)


def test_noise_dim_coupling_constraint_enforced():
    with pytest.raises(ValueError, match="coupling requires"):
        GeneratorBank(DIMS, noise_dims={"eps1": 3, "eps2": 3,
                                        "eps1_prime": 3, "eps2_prime": 4})


# ---------------------------------------------------------------------------
# three domains

TDIMS = {"x": 2, "y": 1, "z": 1}


def make_three(seed=0, **kwargs):
    return ThreeDomainBank(TDIMS, noise_dim=3, hidden=16, n_hidden=2, seed=seed, **kwargs)


def three_noises(seed, n=4, dim=3):
    src = NoiseSource(seed)
    return (src.draw(n, dim), src.draw(n, dim), src.draw(n, dim))


def test_three_domain_chain_head_equals_coupled_marginal():
    bank = make_three()
    noises = three_noises(0)
    with ad.no_grad():
        batch = sample_three_domain_chain(bank, "x_y_z", noises)
        marg = bank.marginal("x", noises[0])
    np.testing.assert_array_equal(batch.values[0].data, marg.data)
    assert batch.source == 1

    with ad.no_grad():
        batch = sample_three_domain_chain(bank, "z_y_x", noises)
        marg_z = bank.marginal("z", noises[0])
    np.testing.assert_array_equal(batch.values[2].data, marg_z.data)
    assert batch.source == 2


def test_three_domain_prefix_connectivity():
    bank = make_three()
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 2))
    y = rng.normal(size=(4, 1))
    batch = sample_three_domain_chain(bank, "x_y_z", three_noises(1), prefix=(x, y))
    assert batch.graph_connected == (False, False, True)
    assert batch.source == 5
    np.testing.assert_array_equal(batch.values[0].data, x)
    np.testing.assert_array_equal(batch.values[1].data, y)
    ad.active_graph().clear()


def test_three_domain_skip_connection_input_dims():
    bank = make_three()
    assert bank.gamma.in_dim == TDIMS["x"] + TDIMS["y"] + 3
    assert bank.eta.in_dim == TDIMS["y"] + TDIMS["z"] + 3


def test_three_domain_prefix_dimension_mismatch():
    bank = make_three()
    bad_x = np.zeros((4, 3))
    with pytest.raises(ShapeError, match="prefix"):
        sample_three_domain_chain(bank, "x_y_z", three_noises(0), prefix=(bad_x,))


def test_three_domain_marginal_coupling_bit_exact():
    bank = make_three()
    for trial in range(50):
        eps = NoiseSource(trial).draw(3, 3)
        with ad.no_grad():
            marg = bank.marginal("x", eps)
            via_eta = bank.eta(Tensor(np.zeros((3, 1))), Tensor(np.zeros((3, 1))), eps)
        assert np.array_equal(marg.data, via_eta.data)
