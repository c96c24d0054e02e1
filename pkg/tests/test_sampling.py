import numpy as np
import pytest

from jointgen import autodiff as ad
from jointgen.data import DataError, SyntheticSpec, as_view, generate
from jointgen.generators import GeneratorBank, NoiseSource, ThreeDomainBank
from jointgen.sampling import (PAIRED_RECIPES, THREE_DOMAIN_RECIPES, UNPAIRED_RECIPES,
                               SourceSpec, draw_batch, draw_three_domain_batch)


@pytest.fixture
def paired_data():
    return generate(SyntheticSpec("correlated_gaussian", n=300, dim=1, rho=0.8), seed=0)


@pytest.fixture
def unpaired_data(paired_data):
    return as_view(paired_data, "unpaired", seed=1)


@pytest.fixture
def chain_data():
    return generate(SyntheticSpec("three_domain_chain", n=300, dim=1), seed=0)


@pytest.fixture
def bank():
    return GeneratorBank({"x": 1, "y": 1}, noise_dims=3, hidden=8, n_hidden=2, seed=0)


@pytest.fixture
def three_bank():
    return ThreeDomainBank({"x": 1, "y": 1, "z": 1}, noise_dim=3, hidden=8,
                           n_hidden=2, seed=0)


def test_recipe_table_matches_definitions():
    # one assertion per source per mode: which components are empirical,
    # which generated, and the chain order for the fully synthetic sources
    assert PAIRED_RECIPES[1] == {"empirical": ("x",), "generated": ("y",), "order": None}
    assert PAIRED_RECIPES[2] == {"empirical": ("y",), "generated": ("x",), "order": None}
    assert PAIRED_RECIPES[3] == {"empirical": (), "generated": ("x", "y"),
                                 "order": "x_then_y"}
    assert PAIRED_RECIPES[4] == {"empirical": (), "generated": ("x", "y"),
                                 "order": "y_then_x"}
    assert PAIRED_RECIPES[5] == {"empirical": ("x", "y"), "generated": (), "order": None}
    assert set(UNPAIRED_RECIPES) == {1, 2, 3, 4}
    for k in (1, 2, 3, 4):
        assert UNPAIRED_RECIPES[k] == PAIRED_RECIPES[k]
    assert THREE_DOMAIN_RECIPES[1] == {"empirical": (), "generated": ("x", "y", "z"),
                                       "order": "x_y_z"}
    assert THREE_DOMAIN_RECIPES[2] == {"empirical": (), "generated": ("x", "y", "z"),
                                       "order": "z_y_x"}
    assert THREE_DOMAIN_RECIPES[3] == {"empirical": ("x",), "generated": ("y", "z"),
                                       "order": "x_y_z"}
    assert THREE_DOMAIN_RECIPES[4] == {"empirical": ("z",), "generated": ("y", "x"),
                                       "order": "z_y_x"}
    assert THREE_DOMAIN_RECIPES[5] == {"empirical": ("x", "y"), "generated": ("z",),
                                       "order": "x_y_z"}
    assert THREE_DOMAIN_RECIPES[6] == {"empirical": ("y", "z"), "generated": ("x",),
                                       "order": "z_y_x"}


def test_source5_both_empirical_unconnected(paired_data, bank):
    batch = draw_batch(SourceSpec("paired_5"), 5, bank, paired_data, 16, NoiseSource(0))
    assert batch.source == 5
    assert batch.graph_connected == (False, False)
    # rows must be actual dataset rows, still aligned
    x, y = paired_data.joint(("x", "y"))
    joined = np.concatenate([x, y], axis=1)
    drawn = np.concatenate([batch.values[0].data, batch.values[1].data], axis=1)
    for row in drawn:
        assert any(np.array_equal(row, orig) for orig in joined)


def test_source3_fully_generated_connected(paired_data, bank):
    batch = draw_batch(SourceSpec("paired_5"), 3, bank, paired_data, 8, NoiseSource(0))
    assert batch.source == 3
    assert batch.graph_connected == (True, True)
    ad.active_graph().clear()


def test_source1_mixed_connectivity(paired_data, bank):
    batch = draw_batch(SourceSpec("paired_5"), 1, bank, paired_data, 8, NoiseSource(0))
    assert batch.graph_connected == (False, True)
    x_rows = paired_data.marginal("x")
    for row in batch.values[0].data:
        assert any(np.array_equal(row, orig) for orig in x_rows)
    ad.active_graph().clear()


def test_source2_mixed_connectivity(paired_data, bank):
    batch = draw_batch(SourceSpec("paired_5"), 2, bank, paired_data, 8, NoiseSource(0))
    assert batch.graph_connected == (True, False)
    ad.active_graph().clear()


def test_unpaired_mode_rejects_source5(unpaired_data, bank):
    with pytest.raises(DataError, match="unavailable unpaired"):
        draw_batch(SourceSpec("unpaired_4"), 5, bank, unpaired_data, 8, NoiseSource(0))


def test_paired_mode_rejects_unpaired_dataset(unpaired_data, bank):
    with pytest.raises(DataError, match="paired"):
        draw_batch(SourceSpec("paired_5"), 5, bank, unpaired_data, 8, NoiseSource(0))


def test_unpaired_sources_draw_from_columns(unpaired_data, bank):
    for source in (1, 2, 3, 4):
        batch = draw_batch(SourceSpec("unpaired_4"), source, bank, unpaired_data,
                           8, NoiseSource(source))
        assert batch.source == source
    ad.active_graph().clear()


def test_batch_size_positive(paired_data, bank):
    with pytest.raises(ValueError, match="batch size"):
        draw_batch(SourceSpec("paired_5"), 1, bank, paired_data, 0, NoiseSource(0))


def test_draw_is_deterministic_given_rng_seed(paired_data, bank):
    with ad.no_grad():
        a = draw_batch(SourceSpec("paired_5"), 3, bank, paired_data, 8, NoiseSource(9))
        b = draw_batch(SourceSpec("paired_5"), 3, bank, paired_data, 8, NoiseSource(9))
    for va, vb in zip(a.values, b.values):
        np.testing.assert_array_equal(va.data, vb.data)


def test_three_domain_fully_generated_all_connected(chain_data, three_bank):
    batch = draw_three_domain_batch(1, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (True, True, True)
    batch = draw_three_domain_batch(2, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (True, True, True)
    ad.active_graph().clear()


def test_three_domain_observed_pair_only_generates_last(chain_data, three_bank):
    batch = draw_three_domain_batch(5, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (False, False, True)
    x, y = chain_data.joint(("x", "y"))
    joined = np.concatenate([x, y], axis=1)
    drawn = np.concatenate([batch.values[0].data, batch.values[1].data], axis=1)
    for row in drawn:
        assert any(np.array_equal(row, orig) for orig in joined)
    ad.active_graph().clear()


def test_three_domain_observed_yz_generates_x(chain_data, three_bank):
    batch = draw_three_domain_batch(6, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (True, False, False)
    ad.active_graph().clear()


def test_three_domain_empirical_heads(chain_data, three_bank):
    batch = draw_three_domain_batch(3, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (False, True, True)
    batch = draw_three_domain_batch(4, three_bank, chain_data, 8, NoiseSource(0))
    assert batch.graph_connected == (True, True, False)
    ad.active_graph().clear()


def test_three_domain_rejects_bad_source(chain_data, three_bank):
    with pytest.raises(ValueError, match="source"):
        draw_three_domain_batch(7, three_bank, chain_data, 8, NoiseSource(0))


def test_three_domain_requires_overlapping_pairs(paired_data, three_bank):
    with pytest.raises(DataError, match="two_overlapping_pairs"):
        draw_three_domain_batch(1, three_bank, paired_data, 8, NoiseSource(0))


def test_three_domain_never_requests_xz(chain_data):
    # the dataset itself refuses (x, z) joint access in this pairing
    with pytest.raises(DataError, match="jointly"):
        chain_data.joint(("x", "z"))
