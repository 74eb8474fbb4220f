from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from assocmem.graph import read_graph, write_graph
from assocmem.learning import (
    ConfigError, LearningConfig, NotConvergedError, learn_constraint, learn_graph, learning_step,
    null_space_basis, polish, project, prune, residual_energy, sparse_init, sparsity_gradient,
)
from assocmem.patterns import GeneratorMatrix, ModelSpec, build_training_set

X4 = np.array([[0, 0, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [1, 1, 1, 1]])
# mean squared norm of X4 is 2, so alpha0 = 0.4 keeps 2 * alpha * eta well below 1
SMALL = LearningConfig(alpha0=0.4, theta0=0.05, max_passes=400)

finite = st.floats(-10, 10, allow_nan=False)


def test_project():
    assert project([1, 1, 1, 1], [0.5, 0.5, -0.5, -0.5]) == 0
    assert project([1, 0, 0, 0], [1, 0, 0, 0]) == 1
    with pytest.raises(ValueError):
        project([1, 2], [1, 2, 3])


def test_sparsity_gradient():
    assert sparsity_gradient([0.001, 0.5], 0.01).tolist() == [0.001, 0]
    assert sparsity_gradient(np.zeros(3), 0.01).tolist() == [0, 0, 0]
    assert sparsity_gradient([0.02, -0.005, 0.01], 0.01).tolist() == [0, -0.005, 0.01]


def test_learning_step_fixed_points():
    w = np.array([0.5, -0.5, 0.0, 0.0])
    x = np.array([2.0, 2.0, 1.0, 7.0])  # orthogonal to w
    assert np.array_equal(learning_step(w, x, 0.1, 1.0, 0.01), w)
    assert np.array_equal(learning_step(w, [1, 2, 3, 4], 0.0, 1.0, 0.01), w)


def test_learning_step_shrinks_small_entries():
    w = np.array([0.5, -0.5, 0.005])
    x = np.array([2.0, 2.0, 0.0])
    out = learning_step(w, x, 0.1, 1.0, 0.01)
    assert out[:2].tolist() == [0.5, -0.5]
    assert out[2] == pytest.approx(0.005 * (1 - 0.1))


@settings(max_examples=50)
@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3),
       st.floats(1e-4, 0.05))
def test_learning_step_matches_formula(w, x, alpha):
    w, x = np.array(w), np.array(x)
    if not np.linalg.norm(w) > 1e-3:
        return
    y = x @ w
    gam = np.where(np.abs(w) <= 0.1, w, 0)
    expect = w - alpha * (y * (x - y * w / (w @ w)) + 1.0 * gam)
    np.testing.assert_allclose(learning_step(w, x, alpha, 1.0, 0.1), expect, rtol=1e-12, atol=1e-12)


def test_learning_step_guard():
    with pytest.raises(ConfigError):
        learning_step(np.ones(2), np.ones(2), 0.5, 1.0, 0.1)
    with pytest.raises(ValueError):
        learning_step(np.zeros(2), np.ones(2), 0.1, 1.0, 0.1)


def test_residual_energy():
    assert residual_energy([[1, 0]], [0.6, 0.8]) == pytest.approx(0.36)
    assert residual_energy(X4, [1, 0, -1, 0]) == 0


@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=4),
       st.lists(finite, min_size=3, max_size=3))
def test_residual_energy_quadratic(X, w):
    X, w = np.array(X), np.array(w)
    r = residual_energy(X, w)
    assert r >= 0
    assert residual_energy(X, 2 * w) == pytest.approx(4 * r, rel=1e-12, abs=1e-12)


def test_config_guards():
    with pytest.raises(ConfigError):
        LearningConfig(alpha0=0)
    with pytest.raises(ConfigError):
        LearningConfig(decay_passes=0.5)
    with pytest.raises(ConfigError):
        LearningConfig(max_passes=0)


def test_schedule():
    cfg = LearningConfig(alpha0=0.3, theta0=0.02, decay_passes=1)
    assert [cfg.alpha(t) for t in (1, 2, 4)] == pytest.approx([0.3, 0.15, 0.075])
    assert cfg.theta(5) == pytest.approx(0.004)
    slow = LearningConfig(decay_passes=300)
    assert slow.decay(301) == pytest.approx(0.5)


def test_sparse_init():
    rng = np.random.default_rng(0)
    w = sparse_init(1000, 0.2, rng)
    assert np.linalg.norm(w) == pytest.approx(1)
    assert 0.15 < np.mean(w != 0) < 0.25
    assert np.count_nonzero(sparse_init(3, 1e-9, rng)) == 1


def test_prune():
    out = prune([[3.0, 0.001, -4.0], [0.0, 0.0, 0.0]], 0.01)
    assert out[0].tolist() == [0.6, 0.0, -0.8]
    assert out[1].tolist() == [0, 0, 0]


def test_polish_projects_onto_null_space():
    w = np.array([0.7, 0.01, -0.71, 0.02])
    w /= np.linalg.norm(w)
    out, ok = polish(X4, w, 0.05)
    assert ok
    assert residual_energy(X4, out) < 1e-25
    np.testing.assert_allclose(out, np.array([1, 0, -1, 0]) / np.sqrt(2), atol=1e-12)


def test_learn_constraint_zero_data_returns_start():
    X = np.zeros((3, 5))
    r = learn_constraint(X, LearningConfig(), np.random.default_rng(7))
    start = sparse_init(5, 0.2, np.random.default_rng(7))
    assert r.passes == 0 and r.converged
    assert np.array_equal(r.w, start)


def test_learn_constraint_full_rank_fails():
    X = np.eye(4)
    with pytest.raises(NotConvergedError) as info:
        learn_constraint(X, LearningConfig(alpha0=0.4, max_passes=30), np.random.default_rng(0))
    assert info.value.result.residual > 1e-3


def test_learn_constraint_small_subspace():
    r = learn_constraint(X4, SMALL, np.random.default_rng(3))
    assert r.converged
    assert np.linalg.norm(r.w) == pytest.approx(1)
    for g in ([1, 0, 1, 0], [0, 1, 0, 1]):
        assert abs(np.dot(g, r.w)) <= 1e-2
    nz = np.abs(r.w[r.w != 0])
    assert not np.any(nz < r.theta_final / 2)


def test_learn_constraint_is_deterministic():
    a = learn_constraint(X4, SMALL, np.random.default_rng(11))
    b = learn_constraint(X4, SMALL, np.random.default_rng(11))
    assert np.array_equal(a.w, b.w) and a.passes == b.passes


def test_learn_graph_spans_complement():
    g, rep = learn_graph(X4, replace(SMALL, m=2), np.random.default_rng(0), Q=2)
    assert g.m == 2 and rep.rank == 2
    basis = null_space_basis(X4)
    # rows lie in the exact null space and together span it
    np.testing.assert_allclose(g.W @ basis.T @ basis, g.W, atol=1e-10)
    assert np.linalg.matrix_rank(np.vstack([g.W, basis]), tol=1e-8) == 2


def test_learn_graph_empty_when_no_constraints():
    spec = ModelSpec(2, 3, 3)
    ts = build_training_set(spec, GeneratorMatrix(np.eye(3, dtype=int), 2, 1), 2, "all")
    g, rep = learn_graph(ts, LearningConfig(alpha0=0.1), np.random.default_rng(0))
    assert g.m == 0 and g.n == 3 and rep.rank == 0


def test_learn_graph_drops_stubborn_duplicates():
    # a one-dimensional null space: every extra row is a duplicate.  A dense
    # start avoids beginning exactly on a coordinate axis, which is stationary.
    X = np.array([[1, 1, 0], [0, 0, 1]])
    cfg = LearningConfig(alpha0=0.4, theta0=0.05, max_passes=400, m=3, max_retries=1,
                         init_density=1.0)
    g, rep = learn_graph(X, cfg, np.random.default_rng(2), Q=2)
    assert g.m == 1 and rep.duplicates_dropped == 2 and rep.retries == 1
    np.testing.assert_allclose(np.abs(g.W[0]), [2 ** -0.5, 2 ** -0.5, 0], atol=1e-12)


def test_weights_file_round_trip(tmp_path):
    g, _ = learn_graph(X4, replace(SMALL, m=2), np.random.default_rng(0),
                       Q=2, seed=0)
    write_graph(tmp_path / "w.txt", g)
    lines = (tmp_path / "w.txt").read_text().splitlines()
    assert lines[0].split()[:4] == ["2", "4", "2", "0"]
    assert " 0 " in f" {lines[1]} " or " 0 " in f" {lines[2]} "
    back = read_graph(tmp_path / "w.txt")
    assert np.array_equal(back.W, g.W) and back.theta_final == g.theta_final and back.seed == 0
