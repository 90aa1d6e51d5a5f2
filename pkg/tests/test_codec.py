import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdlsae.codec import (FeatureTree, HierarchyViolation, collect_stats, dl_report,
                          effective_precision_search, entropy_dl, onehot_paper_arithmetic,
                          onehot_upper_bound, quantize_latents, tree_dl, upper_bound_dl)
from mdlsae.core_math import make_rng
from mdlsae.sae import SparseAutoencoder

# 40-digit mpmath evaluations
H_03_PLUS_03_H_05 = 1.1812908992306926182
LOG2 = math.log2


def h2(p):
    return 0.0 if p in (0.0, 1.0) else -p * LOG2(p) - (1 - p) * LOG2(1 - p)


def test_all_zero_latents():
    stats = collect_stats(np.zeros((10, 4)), 3)
    assert np.all(stats.firing_probability == 0)
    assert entropy_dl(stats) == 0.0
    assert stats.alive_features == 0


def test_half_active_single_level_is_one_bit():
    z = np.zeros((8, 1))
    z[::2, 0] = 2.5
    stats = collect_stats(z, 1)
    assert stats.firing_probability[0] == 0.5
    assert entropy_dl(stats) == pytest.approx(1.0, abs=1e-12)


def test_zero_bin_matches_firing_probability():
    z = make_rng(0).random((50, 6)) * (make_rng(1).random((50, 6)) < 0.3)
    for h in collect_stats(z, 4).histograms:
        assert h.zero_probability == pytest.approx(1 - h.firing_probability, abs=1e-9)
        assert h.probabilities().sum() == pytest.approx(1.0, abs=1e-9)


def test_three_bernoulli_half_features():
    z = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=float)
    assert entropy_dl(collect_stats(z, 2)) == pytest.approx(3.0, abs=1e-12)


def test_uniform_over_four_levels_always_active():
    # B=2 on [0, 3] has levels 0, 1, 2, 3; 0.1 is active but snaps to level 0
    z = np.array([[0.1], [1.0], [2.0], [3.0]] * 5)
    assert entropy_dl(collect_stats(z, 2)) == pytest.approx(2.0, abs=1e-12)


def test_independent_features_add():
    rng = make_rng(5)
    a = rng.random((200, 1)) * (rng.random((200, 1)) < 0.4)
    b = rng.random((200, 1)) * (rng.random((200, 1)) < 0.7)
    joint = entropy_dl(collect_stats(np.hstack([a, b]), 3))
    assert joint == pytest.approx(entropy_dl(collect_stats(a, 3)) + entropy_dl(collect_stats(b, 3)),
                                  abs=1e-12)


def test_collect_stats_domain():
    with pytest.raises(ValueError):
        collect_stats(np.zeros((0, 3)), 2)
    with pytest.raises(ValueError):
        collect_stats(np.zeros((2, 3)), 0)


def test_upper_bound_golden_numbers():
    assert upper_bound_dl(65, 25000, 7) == pytest.approx(1404.6266308383928, abs=1e-9)
    assert upper_bound_dl(768, 1, 7) == 5376
    assert upper_bound_dl(1, 2, 0) == 1.0
    with pytest.raises(ValueError):
        upper_bound_dl(1, 0, 7)


def test_onehot_arithmetic():
    assert onehot_paper_arithmetic(50257, 128, 7) == pytest.approx(13992.865093121817, abs=1e-6)
    assert onehot_paper_arithmetic(2, 1, 1) == 1.0
    assert onehot_upper_bound(50257, 128, 7) == pytest.approx(2005.9807275888309, abs=1e-6)
    assert onehot_upper_bound(50257, 128, 7) == pytest.approx(
        upper_bound_dl(1, 2, 7) + 128 * LOG2(50257) - 1, abs=1e-9)


def test_entropy_estimator_consistency():
    # feature 0: active w.p. 0.3, uniform over levels {1/3, 2/3, 1}; feature 1: w.p. 0.6, one level
    n = 100_000
    rng = make_rng(2024)
    f0 = (rng.random(n) < 0.3) * rng.choice([1 / 3, 2 / 3, 1.0], size=n)
    f1 = (rng.random(n) < 0.6) * 1.0
    est = entropy_dl(collect_stats(np.column_stack([f0, f1]), 2))
    exact = h2(0.3) + 0.3 * LOG2(3) + h2(0.6)
    # standard error of the plug-in estimate: sd of the per-sample code length / sqrt(n)
    p0 = np.array([0.7, 0.1, 0.1, 0.1])
    p1 = np.array([0.4, 0.6])
    var = sum(float(np.sum(p * np.log2(p) ** 2) - np.sum(p * np.log2(p)) ** 2) for p in (p0, p1))
    assert abs(est - exact) <= 3 * math.sqrt(var / n)


sparse_latents = st.tuples(st.integers(1, 200), st.integers(1, 24), st.floats(0.05, 1.0),
                           st.integers(0, 2 ** 32))


@settings(max_examples=60, deadline=None)
@given(sparse_latents, st.integers(2, 8))
def test_entropy_below_index_bound(spec, bits):
    # sum_i H(p_i) <= L0 * (log2(D / L0) + log2 e), so the bound is guaranteed once L0 >= e
    n, D, density, seed = spec
    rng = make_rng(seed)
    z = rng.random((n, D)) * (rng.random((n, D)) < density)
    l0 = np.count_nonzero(z, axis=1).mean()
    if l0 < math.e:
        return
    stats = collect_stats(z, bits)
    assert entropy_dl(stats) <= upper_bound_dl(l0, stats.alive_features, bits) + 1e-6


@settings(max_examples=60, deadline=None)
@given(sparse_latents, st.sampled_from([(2, 1), (4, 2), (6, 3), (6, 2), (8, 4), (16, 8)]))
def test_coarser_nested_grid_never_increases_dl(spec, pair):
    n, D, density, seed = spec
    rng = make_rng(seed)
    z = rng.random((n, D)) * (rng.random((n, D)) < density)
    fine, coarse = pair
    assert entropy_dl(collect_stats(z, coarse)) <= entropy_dl(collect_stats(z, fine)) + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_dl_grows_with_bits_on_sampled_data(seed):
    rng = make_rng(seed)
    z = rng.exponential(size=(5000, 8)) * (rng.random((5000, 8)) < 0.2)
    dls = [entropy_dl(collect_stats(z, b)) for b in range(1, 13)]
    assert all(a <= b + 1e-9 for a, b in zip(dls, dls[1:]))


def identity_model(d=2):
    I = np.eye(d)
    return SparseAutoencoder.from_weights(I, np.zeros(d), I, np.zeros(d),
                                          activation_rule="relu_l1", k=1)


def test_precision_search_infinite_tolerance():
    x = make_rng(0).random((30, 2))
    assert effective_precision_search(identity_model(), x, np.inf).bits == 1


def test_precision_search_lossless_at_four_bits():
    rng = make_rng(1)
    x = rng.integers(0, 16, size=(200, 2)) / 15.0 * 2.0
    x[0] = [2.0, 2.0]  # pin each feature's max to the top level
    model = identity_model()
    base = model.reconstruction_mse(x)
    result = effective_precision_search(model, x, base + 1e-12)
    assert result.feasible and result.bits <= 4
    assert result.mse_by_bits[result.bits] < base + 1e-12


def test_precision_search_returns_minimal_bits():
    x = make_rng(2).random((500, 2))
    model = identity_model()
    result = effective_precision_search(model, x, 1e-3)
    assert result.feasible
    for b in range(1, result.bits):
        zq, _ = quantize_latents(model.transform(x), b)
        assert np.mean((zq - x) ** 2) >= 1e-3


def test_precision_search_infeasible_and_precondition():
    x = make_rng(3).random((500, 2))
    model = identity_model()
    result = effective_precision_search(model, x, 1e-30)
    assert not result.feasible and result.bits == 16
    assert result.mse == result.mse_by_bits[16]
    with pytest.raises(ValueError):
        effective_precision_search(model, x, 0.0)


def animal_bird_latents(n=1000):
    z = np.zeros((n, 2))
    z[:300, 0] = 1.0
    z[:150, 1] = 1.0
    return z


def test_tree_dl_empty_tree_is_flat():
    z = make_rng(4).random((100, 3)) * (make_rng(5).random((100, 3)) < 0.5)
    stats = collect_stats(z, 3)
    assert tree_dl(stats, FeatureTree(), z != 0) == pytest.approx(entropy_dl(stats), abs=1e-12)


def test_tree_dl_animal_bird():
    z = animal_bird_latents()
    stats = collect_stats(z, 1)
    assert tree_dl(stats, FeatureTree({1: 0}), z != 0) == pytest.approx(H_03_PLUS_03_H_05, abs=1e-12)


def test_tree_dl_silent_child_costs_nothing():
    z = animal_bird_latents()
    z[:, 1] = 0
    stats = collect_stats(z, 1)
    assert tree_dl(stats, FeatureTree({1: 0}), z != 0) == pytest.approx(h2(0.3), abs=1e-12)


def test_tree_dl_hierarchy_violation():
    z = animal_bird_latents()
    z[500, 1] = 1.0
    with pytest.raises(HierarchyViolation) as info:
        tree_dl(collect_stats(z, 1), FeatureTree({1: 0}), z != 0)
    assert (info.value.child, info.value.parent) == (1, 0)


def test_feature_tree_rejects_cycles():
    with pytest.raises(ValueError):
        FeatureTree({0: 1, 1: 0})


@settings(max_examples=60, deadline=None)
@given(st.integers(20, 300), st.floats(0.05, 0.95), st.floats(0.0, 1.0), st.integers(1, 6),
       st.integers(0, 2 ** 32))
def test_tree_coding_never_worse_than_flat(n, p_parent, p_child, bits, seed):
    rng = make_rng(seed)
    parent = rng.random(n) < p_parent
    child = parent & (rng.random(n) < p_child)
    grand = child & (rng.random(n) < 0.5)
    z = np.column_stack([parent * rng.random(n), child * rng.random(n), grand * rng.random(n)])
    z[parent & (z[:, 0] == 0), 0] = 0.5
    z[child & (z[:, 1] == 0), 1] = 0.5
    z[grand & (z[:, 2] == 0), 2] = 0.5
    stats = collect_stats(z, bits)
    tree = FeatureTree({1: 0, 2: 1})
    assert tree_dl(stats, tree, z != 0) <= entropy_dl(stats) + 1e-9


def test_dl_report_fields():
    rng = make_rng(6)
    x = rng.random((100, 3)) * (rng.random((100, 3)) < 0.5)
    model = identity_model(3)
    r = dl_report(model, x, 4)
    assert r.dict_size == 3 and r.quant_bits == 4
    assert r.mean_L0 == pytest.approx(np.count_nonzero(x, axis=1).mean())
    assert r.entropy_dl_bits == pytest.approx(entropy_dl(collect_stats(x, 4)))
    assert r.decoder_bits == (9 + 3) * 4
