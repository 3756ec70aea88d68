import math

import numpy as np
import pytest

from aeshap.autoencoder import AEConfig, init_model, reconstruction_error
from aeshap.data import CleanDataset
from aeshap.kmeans import BackgroundSet
from aeshap.shap import (CoalitionDeficiencyError, ExplainerConfig, brute_force_shapley,
                         coalition_values, enumerate_coalitions, explain_batch,
                         explain_instance, kernel_shap, merge_coalitions, read_explanations,
                         sample_coalitions, shapley_kernel_weight, solve_kernel_regression,
                         value_function, write_explanations)

from conftest import random_model

EXACT = ExplainerConfig(mode="exact")


def setup(d, hidden=(6, 3, 6), seed=0, k=4):
    rng = np.random.default_rng(seed + 77)
    model = random_model(d, hidden, seed)
    bg = BackgroundSet.uniform(rng.normal(size=(k, d)))
    x = rng.normal(1.0, 1.5, size=d)
    return model, bg, x


@pytest.mark.parametrize("M, s, w", [(4, 1, 0.25), (4, 2, 0.125), (4, 3, 0.25)])
def test_kernel_weight(M, s, w):
    assert shapley_kernel_weight(M, s) == w


def test_kernel_weight_boundaries():
    assert shapley_kernel_weight(4, 0) == math.inf
    assert shapley_kernel_weight(4, 4) == math.inf


def test_enumerate():
    assert enumerate_coalitions(2).tolist() == [[False, False], [True, False],
                                                [False, True], [True, True]]
    m = enumerate_coalitions(10)
    assert m.shape == (1024, 10)
    assert len({tuple(r) for r in m}) == 1024
    with pytest.raises(ValueError, match="sampled"):
        enumerate_coalitions(21)


def test_sample_saturates_to_enumeration():
    m, _ = merge_coalitions(sample_coalitions(4, 16, seed=0))
    assert len(m) == 16


def test_sample_contains_endpoints_and_is_deterministic():
    for d, budget in [(30, 100), (8, 40), (50, 2148)]:
        m = sample_coalitions(d, budget, seed=5)
        assert not m[0].any() and m[1].all()
        assert len(m) <= budget
        assert np.array_equal(m, sample_coalitions(d, budget, seed=5))
        # complement pairs
        assert np.array_equal(m[2::2], ~m[3::2])


def test_value_function_full_and_empty():
    model, bg, x = setup(5)
    full = np.ones(5, bool)
    assert value_function(model, x, full, bg) == reconstruction_error(model, x) / 5
    empty = np.zeros(5, bool)
    v1 = value_function(model, x, empty, bg)
    v2 = value_function(model, x + 3.0, empty, bg)
    assert v1 == v2
    expect = sum(w * reconstruction_error(model, b) for w, b in zip(bg.weights, bg.points)) / 5
    assert abs(v1 - expect) < 1e-14


def test_value_function_hand_assembled():
    # one hidden unit copying feature 0 to every output
    model = init_model(AEConfig(hidden_layers=(1,)), 3)
    model.weights[0][:] = [[1.0], [0.0], [0.0]]
    model.weights[1][:] = [[1.0, 1.0, 1.0]]
    x = np.array([2.0, 0.0, 1.0])
    bg = BackgroundSet(np.array([[0.0, 1.0, 1.0], [1.0, 3.0, 0.0]]), np.array([0.5, 0.5]), 2)
    # hybrids [2,1,1] and [2,3,0] reconstruct to [2,2,2]: errors 2/3 and 5/3
    assert abs(value_function(model, x, [0], bg) - 7.0 / 18.0) < 1e-15


def test_value_function_dimension_mismatch():
    model, bg, x = setup(5)
    with pytest.raises(ValueError, match="dimension"):
        value_function(model, x[:4], np.ones(4, bool), bg)


def model_game(model, x, bg):
    return lambda masks: coalition_values(model, x, masks, bg)


@pytest.mark.parametrize("d, seed", [(3, 0), (5, 1), (8, 2), (10, 3)])
def test_exact_mode_matches_brute_force(d, seed):
    model, bg, x = setup(d, seed=seed)
    e = explain_instance(model, x, bg, EXACT)
    oracle = brute_force_shapley(model_game(model, x, bg), d)
    assert np.max(np.abs(e.phi - oracle)) <= 1e-6
    assert e.local_accuracy_gap <= 1e-8


def test_dummy_feature_gets_zero():
    d, i = 6, 2
    model, bg, x = setup(d, seed=4)
    model.weights[0][i, :] = 0.0
    pts = bg.points.copy()
    pts[:, i] = 0.7
    x[i] = 0.7
    bg = BackgroundSet(pts, bg.weights, bg.source_count)
    e = explain_instance(model, x, bg, EXACT)
    assert abs(e.phi[i]) <= 1e-8


def test_symmetric_features_get_equal_values():
    d, i, j = 6, 1, 4
    model, bg, x = setup(d, seed=5)
    model.weights[0][j, :] = model.weights[0][i, :]
    model.weights[-1][:, j] = model.weights[-1][:, i]
    model.biases[-1][j] = model.biases[-1][i]
    pts = bg.points.copy()
    pts[:, j] = pts[:, i]
    x[j] = x[i]
    bg = BackgroundSet(pts, bg.weights, bg.source_count)
    e = explain_instance(model, x, bg, EXACT)
    assert abs(e.phi[i] - e.phi[j]) <= 1e-8


def test_linear_game_closed_form(rng):
    d = 10
    w, x, bbar = rng.normal(size=d), rng.normal(size=d), rng.normal(size=d)
    game = lambda masks: masks.astype(float) @ (w * (x - bbar))
    phi, base, full = kernel_shap(game, d, "exact")
    np.testing.assert_allclose(phi, w * (x - bbar), atol=1e-9, rtol=0)
    assert base == 0.0


def test_sampled_saturated_budget_matches_exact():
    model, bg, x = setup(8, seed=6)
    exact = explain_instance(model, x, bg, EXACT)
    sampled = explain_instance(model, x, bg, ExplainerConfig(mode="sampled", sample_budget=2000))
    assert np.max(np.abs(exact.phi - sampled.phi)) <= 0.02


def test_sampled_below_enumeration_is_close_to_exact():
    # 12 features: 4096 masks, budget 2000 forces genuine sampling
    model, bg, x = setup(12, seed=7)
    exact = explain_instance(model, x, bg, EXACT)
    sampled = explain_instance(model, x, bg, ExplainerConfig(mode="sampled", sample_budget=2000))
    assert sampled.local_accuracy_gap <= 1e-3
    scale = np.abs(exact.phi).max()
    assert np.max(np.abs(exact.phi - sampled.phi)) <= 0.1 * scale


def test_too_small_budget_reports_deficiency():
    model, bg, x = setup(30, hidden=(4,), seed=0)
    with pytest.raises(CoalitionDeficiencyError, match="budget"):
        explain_instance(model, x, bg, ExplainerConfig(mode="sampled", sample_budget=6))


def test_exact_mode_rejects_large_d():
    model, bg, x = setup(21, hidden=(4,), seed=0)
    with pytest.raises(ValueError, match="sampled"):
        explain_instance(model, x, bg, EXACT)


def test_single_feature():
    phi = solve_kernel_regression(np.array([[False], [True]]), np.array([1.0, 3.0]),
                                  np.zeros(2), 1.0, 3.0)
    assert phi.tolist() == [2.0]


def test_explain_batch_consistency():
    model, bg, _ = setup(6, seed=8)
    rows = np.random.default_rng(1).normal(size=(5, 6))
    cfg = ExplainerConfig(mode="sampled", sample_budget=40, seed=11)
    one = explain_batch(model, rows[:1], bg, cfg)
    single = explain_instance(model, rows[0], bg, cfg, seed=11 ^ 0)
    assert np.array_equal(one[0].phi, single.phi)

    ids = [10, 11, 12, 13, 14]
    ref = explain_batch(model, rows, bg, cfg, row_ids=ids)
    perm = [3, 0, 4, 1, 2]
    shuffled = explain_batch(model, rows[perm], bg, cfg, row_ids=[ids[p] for p in perm])
    for k, p in enumerate(perm):
        assert np.array_equal(shuffled[k].phi, ref[p].phi)
        assert shuffled[k].instance_index == ref[p].instance_index

    par = explain_batch(model, rows, bg, cfg, row_ids=ids, n_jobs=3)
    assert all(np.array_equal(a.phi, b.phi) for a, b in zip(par, ref))


def test_explain_batch_local_accuracy_exact_d12():
    from aeshap.data import synth_generate, fit_standardize
    ds = synth_generate(200, 50, 12, 4, 4.0, seed=3)
    z, _ = fit_standardize(ds)
    attacks = z.take(z.labels == 1)
    model = random_model(12, seed=9)
    bg = BackgroundSet.uniform(attacks.features[:4])
    expl = explain_batch(model, attacks, bg, EXACT)
    assert len(expl) == 50
    assert max(e.local_accuracy_gap for e in expl) <= 1e-8
    assert expl[0].feature_names == attacks.feature_names


def test_explanations_tsv_round_trip(tmp_path):
    model, bg, _ = setup(4, seed=2)
    rows = CleanDataset(np.random.default_rng(0).normal(size=(3, 4)), ["a", "b", "c", "d"])
    expl = explain_batch(model, rows, bg, EXACT, row_ids=[7, 2, 5])
    write_explanations(expl, tmp_path / "e.tsv")
    lines = (tmp_path / "e.tsv").read_text().splitlines()
    assert [int(l.split("\t")[0]) for l in lines[1:]] == [2] * 4 + [5] * 4 + [7] * 4
    back = read_explanations(tmp_path / "e.tsv")
    by_id = {e.instance_index: e for e in expl}
    for e in back:
        assert np.array_equal(e.phi, by_id[e.instance_index].phi)
        assert e.base_value == by_id[e.instance_index].base_value
        assert e.feature_names == ("a", "b", "c", "d")
