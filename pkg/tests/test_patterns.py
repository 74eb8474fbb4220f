import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from assocmem.patterns import (
    GeneratorMatrix, InfeasibleParameters, ModelSpec, TrainingSet, build_training_set,
    capacity_check, column_weights, generate_generator_matrix, integer_rank, read_generator,
    read_training_set, synthesize_pattern, write_generator, write_training_set,
)

G_HAND = [[1, 0, 1, 0], [0, 1, 0, 1]]


def fraction_rank(M):
    """Reference rank: plain Gaussian elimination over the rationals."""
    A = [[Fraction(int(v)) for v in row] for row in M]
    rank, rows = 0, len(A)
    cols = len(A[0]) if rows else 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if A[r][c] != 0), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for r in range(rows):
            if r != rank and A[r][c] != 0:
                f = A[r][c] / A[rank][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[rank])]
        rank += 1
    return rank


def test_model_spec_validation():
    assert ModelSpec(11, 400, 200).m == 200
    with pytest.raises(ValueError):
        ModelSpec(1, 4, 2)
    with pytest.raises(ValueError):
        ModelSpec(3, 4, 5)
    with pytest.raises(ValueError):
        ModelSpec(3, 4, 0)


@pytest.mark.parametrize("dstar,gamma,upsilon,Q,expected", [
    (10, 2, 2, 11, True),
    (1, 2, 2, 2, True),
    (10, 2, 2, 10, False),
    (3, 3, 2, 7, True),
    (3, 3, 2, 6, False),
])
def test_capacity_check(dstar, gamma, upsilon, Q, expected):
    assert capacity_check(dstar, gamma, upsilon, Q) is expected


@given(st.lists(st.lists(st.integers(-4, 4), min_size=4, max_size=4), min_size=1, max_size=5))
def test_integer_rank_matches_rational_elimination(rows):
    assert integer_rank(rows) == fraction_rank(rows)


def test_integer_rank_known_cases():
    assert integer_rank(G_HAND) == 2
    assert integer_rank([[1, 2], [2, 4]]) == 1
    assert integer_rank(np.zeros((3, 3), int)) == 0
    assert integer_rank(np.eye(5, dtype=int)) == 5


def test_generator_small():
    rng = np.random.default_rng(0)
    G = generate_generator_matrix(ModelSpec(11, 4, 2), 2, 1, rng)
    assert G.G.shape == (2, 4)
    assert set(np.unique(G.G)) <= {0, 1}
    assert column_weights(G.G).max() <= 1
    assert integer_rank(G.G) == 2


def test_generator_large_scale():
    rng = np.random.default_rng(1)
    G = generate_generator_matrix(ModelSpec(11, 400, 200), 2, 10, rng)
    assert np.all(column_weights(G.G) == 10)
    assert np.linalg.matrix_rank(G.G.astype(float)) == 200


def test_generator_dstar_zero_is_infeasible():
    with pytest.raises(InfeasibleParameters):
        generate_generator_matrix(ModelSpec(11, 3, 3), 2, 0, np.random.default_rng(0))


def test_generator_all_ones_columns_are_infeasible():
    with pytest.raises(InfeasibleParameters):
        generate_generator_matrix(ModelSpec(11, 4, 2), 2, 2, np.random.default_rng(0))


def test_generator_redraw_budget_exhausted():
    with pytest.raises(InfeasibleParameters):
        generate_generator_matrix(ModelSpec(11, 3, 3), 2, 1, np.random.default_rng(0), max_redraws=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(1, 6), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_generator_invariants(n, dstar, gamma, seed):
    k = max(1, n // 2)
    assume(not (gamma == 2 and dstar >= k > 1))
    G = generate_generator_matrix(ModelSpec(50, n, k), gamma, dstar, np.random.default_rng(seed))
    assert G.G.min() >= 0 and G.G.max() <= gamma - 1
    assert column_weights(G.G).max() <= dstar
    assert integer_rank(G.G) == k


def test_generator_matrix_rejects_bad_entries():
    with pytest.raises(ValueError):
        GeneratorMatrix([[2, 0]], gamma=2, dstar=1)
    with pytest.raises(ValueError):
        GeneratorMatrix([[1, 1], [1, 0]], gamma=2, dstar=1)


def test_synthesize_pattern():
    G = GeneratorMatrix(G_HAND, 2, 1)
    assert synthesize_pattern([0, 0], G, 11).tolist() == [0, 0, 0, 0]
    assert synthesize_pattern([1, 1], G, 11).tolist() == [1, 1, 1, 1]
    assert synthesize_pattern([3, 1], G, 3) is None


def test_capacity_means_no_rejections():
    rng = np.random.default_rng(3)
    spec = ModelSpec(7, 12, 6)
    G = generate_generator_matrix(spec, 3, 3, rng)
    assert capacity_check(3, 3, 2, 7)
    for u in itertools.product(range(2), repeat=6):
        assert synthesize_pattern(u, G, 7) is not None


def test_enumerate_hand_example():
    G = GeneratorMatrix(G_HAND, 2, 1)
    ts = build_training_set(ModelSpec(11, 4, 2), G, 2, "all")
    assert sorted(map(tuple, ts.X.tolist())) == [(0, 0, 0, 0), (0, 1, 0, 1), (1, 0, 1, 0), (1, 1, 1, 1)]
    assert ts.C == 4 and integer_rank(ts.X) == 2


def test_sampled_training_set():
    rng = np.random.default_rng(4)
    spec = ModelSpec(11, 40, 20)
    G = generate_generator_matrix(spec, 2, 10, rng)
    ts = build_training_set(spec, G, 2, 300, rng)
    assert ts.C == 300
    assert len({r.tobytes() for r in ts.X}) == 300
    assert ts.X.min() >= 0 and ts.X.max() <= 10
    assert np.linalg.matrix_rank(ts.X.astype(float)) <= 20
    one = build_training_set(spec, G, 2, 1, rng)
    assert one.C == 1


def test_sampled_training_set_too_large():
    G = GeneratorMatrix(G_HAND, 2, 1)
    with pytest.raises(InfeasibleParameters):
        build_training_set(ModelSpec(11, 4, 2), G, 2, 5, np.random.default_rng(0))


def test_rejected_messages_are_resampled():
    # u=(1,1) puts a 2 in column 0, which Q=2 rejects
    G = GeneratorMatrix([[1, 1, 0], [1, 0, 1]], 2, 2)
    ts = build_training_set(ModelSpec(2, 3, 2), G, 2, 3, np.random.default_rng(0))
    assert ts.X.max() <= 1
    assert sorted(map(tuple, ts.X.tolist())) == [(0, 0, 0), (1, 0, 1), (1, 1, 0)]
    with pytest.raises(InfeasibleParameters):
        build_training_set(ModelSpec(2, 3, 2), G, 2, 4, np.random.default_rng(0), max_attempts=50)


def test_training_set_range_check():
    with pytest.raises(ValueError):
        TrainingSet(np.array([[0, 3]]), ModelSpec(3, 2, 1))


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    spec = ModelSpec(11, 10, 4)
    G = generate_generator_matrix(spec, 2, 3, rng)
    ts = build_training_set(spec, G, 2, 12, rng, seed=5)
    write_training_set(tmp_path / "x.txt", ts)
    back = read_training_set(tmp_path / "x.txt")
    assert np.array_equal(back.X, ts.X) and back.spec == spec and back.seed == 5
    assert (tmp_path / "x.txt").read_text().splitlines()[0] == "10 4 11 12 5"
    write_generator(tmp_path / "g.txt", G, None)
    G2, seed = read_generator(tmp_path / "g.txt")
    assert np.array_equal(G2.G, G.G) and seed is None and G2.dstar == 3


def test_bad_header(tmp_path):
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(ValueError):
        read_training_set(tmp_path / "bad.txt")
