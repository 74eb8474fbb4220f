"""Subspace pattern generation.

Patterns are built as ``x = u @ G`` where ``G`` is a sparse non-negative
integer generator matrix of rank ``k`` and ``u`` a small-alphabet message.
When ``Q - 1 >= d* (gamma - 1) (upsilon - 1)`` every message yields a valid
pattern, so the number of storable patterns is ``upsilon ** k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InfeasibleParameters(ValueError):
    """Raised when the requested generator / training set cannot be built."""


@dataclass(frozen=True)
class ModelSpec:
    Q: int
    n: int
    k: int

    def __post_init__(self):
        if self.Q < 2:
            raise ValueError(f"Q must be >= 2, got {self.Q}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def m(self) -> int:
        return self.n - self.k


@dataclass
class GeneratorMatrix:
    G: np.ndarray
    gamma: int
    dstar: int

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=np.int64)
        if self.G.ndim != 2:
            raise ValueError("generator must be a 2-d matrix")
        if self.G.min(initial=0) < 0 or self.G.max(initial=0) > self.gamma - 1:
            raise ValueError(f"generator entries must lie in [0, {self.gamma - 1}]")
        if column_weights(self.G).max(initial=0) > self.dstar:
            raise ValueError(f"a column has more than d*={self.dstar} nonzeros")

    @property
    def k(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]


@dataclass
class TrainingSet:
    X: np.ndarray
    spec: ModelSpec
    generator: GeneratorMatrix | None = None
    messages: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64).reshape(-1, self.spec.n)
        if self.X.size and (self.X.min() < 0 or self.X.max() > self.spec.Q - 1):
            raise ValueError(f"pattern entries must lie in [0, {self.spec.Q - 1}]")

    @property
    def C(self) -> int:
        return self.X.shape[0]


def column_weights(G) -> np.ndarray:
    return np.count_nonzero(np.asarray(G), axis=0)


def integer_rank(M) -> int:
    """Exact rank of an integer matrix (fraction-free Gaussian elimination)."""
    rows = [[int(v) for v in r] for r in np.asarray(M)]
    if not rows:
        return 0
    ncols = len(rows[0])
    rank = 0
    prev = 1
    for c in range(ncols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        p = rows[rank]
        for r in range(rank + 1, len(rows)):
            row = rows[r]
            a = row[c]
            # Bareiss step: the division by the previous pivot is exact
            rows[r] = [(p[c] * row[cc] - a * p[cc]) // prev for cc in range(ncols)]
        prev = p[c]
        rank += 1
        if rank == len(rows):
            break
    return rank


def capacity_check(dstar: int, gamma: int, upsilon: int, Q: int) -> bool:
    """True when every message ``u`` in ``{0..upsilon-1}^k`` maps into ``[0, Q-1]^n``."""
    return Q - 1 >= dstar * (gamma - 1) * (upsilon - 1)


def generate_generator_matrix(spec: ModelSpec, gamma: int, dstar: int, rng,
                              max_redraws: int = 100) -> GeneratorMatrix:
    """Random ``k x n`` generator with exactly ``min(d*, k)`` nonzeros per column.

    Nonzero values are uniform in ``1..gamma-1``. The matrix is re-drawn until it
    has full row rank ``k``.
    """
    if gamma < 2:
        raise ValueError(f"gamma must be >= 2, got {gamma}")
    if dstar < 0:
        raise ValueError(f"d* must be non-negative, got {dstar}")
    k, n = spec.k, spec.n
    w = min(dstar, k)
    if w == 0:
        raise InfeasibleParameters(f"d*=0 gives the zero matrix, which cannot have rank {k}")
    if w == k > 1 and gamma == 2:
        raise InfeasibleParameters(f"every column would be all-ones, so rank {k} is unreachable")
    for _ in range(max_redraws):
        G = np.zeros((k, n), dtype=np.int64)
        for j in range(n):
            rows = rng.choice(k, size=w, replace=False)
            G[rows, j] = rng.integers(1, gamma, size=w)
        if np.linalg.matrix_rank(G.astype(float)) == k:
            return GeneratorMatrix(G, gamma, dstar)
    raise InfeasibleParameters(
        f"no rank-{k} generator found in {max_redraws} draws (n={n}, d*={dstar}, gamma={gamma})")


def synthesize_pattern(u, G: GeneratorMatrix, Q: int) -> np.ndarray | None:
    """``u @ G`` if all entries are below ``Q``, else ``None`` (rejected)."""
    x = np.asarray(u, dtype=np.int64) @ G.G
    if x.max(initial=0) > Q - 1:
        return None
    return x


def build_training_set(spec: ModelSpec, G: GeneratorMatrix, upsilon: int, count, rng=None,
                       seed: int | None = None, max_attempts: int | None = None) -> TrainingSet:
    """Distinct valid patterns generated from ``G``.

    ``count="all"`` enumerates every message in ``{0..upsilon-1}^k`` (rejected ones
    are dropped). Otherwise ``count`` distinct messages are sampled without
    replacement, resampling whenever a pattern is rejected.
    """
    if upsilon < 2:
        raise ValueError(f"upsilon must be >= 2, got {upsilon}")
    k = spec.k
    total = upsilon ** k
    if count == "all":
        if total > 5_000_000:
            raise InfeasibleParameters(f"refusing to enumerate {total} messages")
        msgs = np.array(list(itertools.product(range(upsilon), repeat=k)), dtype=np.int64)
        X = msgs @ G.G
        keep = X.max(axis=1) <= spec.Q - 1
        return TrainingSet(X[keep], spec, G, msgs[keep], seed)

    count = int(count)
    if count < 0:
        raise ValueError("count must be non-negative")
    if count > total:
        raise InfeasibleParameters(f"cannot draw {count} distinct messages from {total}")
    if rng is None:
        raise ValueError("rng required when sampling")
    if max_attempts is None:
        max_attempts = 100 * count + 1000
    seen: set[bytes] = set()
    msgs, rows = [], []
    attempts = 0
    while len(rows) < count:
        if attempts >= max_attempts:
            raise InfeasibleParameters(
                f"only {len(rows)} of {count} valid distinct patterns after {attempts} draws")
        attempts += 1
        u = rng.integers(0, upsilon, size=k)
        key = u.astype(np.int8 if upsilon < 128 else np.int64).tobytes()
        if key in seen:
            continue
        seen.add(key)
        x = synthesize_pattern(u, G, spec.Q)
        if x is None:
            continue
        msgs.append(u)
        rows.append(x)
    X = np.array(rows, dtype=np.int64).reshape(count, spec.n)
    U = np.array(msgs, dtype=np.int64).reshape(count, k)
    return TrainingSet(X, spec, G, U, seed)


# -- text formats -----------------------------------------------------------

def _seed_token(seed):
    return "-" if seed is None else str(int(seed))


def _parse_seed(tok):
    return None if tok == "-" else int(tok)


def write_training_set(path, ts: TrainingSet) -> None:
    lines = [f"{ts.spec.n} {ts.spec.k} {ts.spec.Q} {ts.C} {_seed_token(ts.seed)}"]
    lines += [" ".join(str(int(v)) for v in row) for row in ts.X]
    Path(path).write_text("\n".join(lines) + "\n")


def read_training_set(path) -> TrainingSet:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 5:
        raise ValueError(f"{path}: bad training-set header {lines[0]!r}")
    n, k, Q, C = (int(v) for v in head[:4])
    rows = [ln.split() for ln in lines[1:1 + C]]
    if len(rows) != C or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {C} rows of {n} integers")
    X = np.array(rows, dtype=np.int64).reshape(C, n)
    return TrainingSet(X, ModelSpec(Q, n, k), seed=_parse_seed(head[4]))


def write_generator(path, G: GeneratorMatrix, seed: int | None = None) -> None:
    lines = [f"{G.k} {G.n} {G.gamma} {G.dstar} {_seed_token(seed)}"]
    lines += [" ".join(str(int(v)) for v in row) for row in G.G]
    Path(path).write_text("\n".join(lines) + "\n")


def read_generator(path) -> tuple[GeneratorMatrix, int | None]:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 5:
        raise ValueError(f"{path}: bad generator header {lines[0]!r}")
    k, n, gamma, dstar = (int(v) for v in head[:4])
    rows = [ln.split() for ln in lines[1:1 + k]]
    if len(rows) != k or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {k} rows of {n} integers")
    return GeneratorMatrix(np.array(rows, dtype=np.int64), gamma, dstar), _parse_seed(head[4])
