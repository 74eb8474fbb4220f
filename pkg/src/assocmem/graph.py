"""Bipartite neural graph: degree statistics, backward weights and expander tools."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class NeuralGraph:
    """Rows of ``W`` are constraint neurons, columns are pattern neurons.

    An edge exists wherever ``W[i, j] != 0``.
    """

    W: np.ndarray
    Q: int
    seed: int | None = None
    theta_final: float = 0.0
    # derived matrices reused across recall trials; W is treated as immutable
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2:
            raise ValueError("weight matrix must be 2-d")
        if self.W.shape[0] and not np.all(np.any(self.W != 0, axis=1)):
            bad = np.flatnonzero(~np.any(self.W != 0, axis=1))
            raise ValueError(f"constraint rows {bad.tolist()} have no edges")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def support(self) -> np.ndarray:
        return self.W != 0

    @property
    def pattern_degrees(self) -> np.ndarray:
        return self.support.sum(axis=0)

    @property
    def constraint_degrees(self) -> np.ndarray:
        return self.support.sum(axis=1)

    @property
    def num_edges(self) -> int:
        return int(self.support.sum())

    def neighborhoods(self) -> list[int]:
        """Constraint neighbourhood of every pattern node as a bitmask."""
        masks = []
        for col in self.support.T:
            mask = 0
            for i in np.flatnonzero(col):
                mask |= 1 << int(i)
            masks.append(mask)
        return masks


@dataclass
class DegreeDistribution:
    lam: dict[int, float]
    rho: dict[int, float]
    dbar: float

    def lam_poly(self, z):
        return sum(f * np.power(z, d - 1) for d, f in self.lam.items())

    def rho_poly(self, z):
        return sum(f * np.power(z, d - 1) for d, f in self.rho.items())


def _edge_fractions(degrees) -> dict[int, float]:
    degrees = np.asarray(degrees)
    total = degrees.sum()
    out = {}
    for d in np.unique(degrees[degrees > 0]):
        out[int(d)] = float(d * np.count_nonzero(degrees == d) / total)
    return out


def degree_distributions(g: NeuralGraph) -> DegreeDistribution:
    """Edge-perspective degree distributions and the mean pattern degree."""
    if g.num_edges == 0:
        raise ValueError("degree distribution of an empty graph is undefined")
    pdeg = g.pattern_degrees
    return DegreeDistribution(_edge_fractions(pdeg), _edge_fractions(g.constraint_degrees),
                              float(pdeg.mean()))


def sparsity_measure(w) -> float:
    """Fraction of nonzero entries, ``kappa / n``."""
    w = np.asarray(w)
    return float(np.count_nonzero(w) / w.size) if w.size else 0.0


@dataclass
class BackwardWeights:
    Wb: np.ndarray
    mode: str


def backward_weights(g: NeuralGraph, mode: str = "sign") -> BackwardWeights:
    if mode == "sign":
        return BackwardWeights(np.sign(g.W), mode)
    if mode == "symmetric":
        return BackwardWeights(g.W.copy(), mode)
    raise ValueError(f"unknown backward-weight mode {mode!r}")


# -- expanders ----------------------------------------------------------------

class BudgetExceeded(RuntimeError):
    pass


def regular_degree(g: NeuralGraph) -> int:
    degs = np.unique(g.pattern_degrees)
    if len(degs) != 1:
        raise ValueError(f"pattern side is not regular (degrees {degs.tolist()})")
    return int(degs[0])


def is_expander(g: NeuralGraph, alpha: float, beta: float, max_subset: int = 3) -> bool:
    """Exhaustive ``(alpha n, beta d_p)`` expansion check.

    Every pattern subset ``P`` with ``1 <= |P| <= floor(alpha n)`` must satisfy
    ``|N(P)| > beta * d_p * |P|``.
    """
    dp = regular_degree(g)
    size = math.floor(alpha * g.n)
    if size < 1:
        raise ValueError(f"alpha*n = {alpha * g.n} < 1: nothing to check")
    if size > max_subset:
        raise BudgetExceeded(f"floor(alpha n) = {size} exceeds the subset budget {max_subset}")
    nbrs = g.neighborhoods()
    for s in range(1, size + 1):
        bound = beta * dp * s
        for P in itertools.combinations(nbrs, s):
            union = 0
            for mask in P:
                union |= mask
            if union.bit_count() <= bound:
                return False
    return True


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def expansion_lower_bound(n: int, dp: int, dc: int, alpha: float) -> float:
    """Neighbour-count lower bound for ``alpha n`` nodes of a random regular graph."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    first = (dp / dc) * (1 - (1 - alpha) ** dc)
    second = math.sqrt(2 * dc * alpha * binary_entropy(alpha) / math.log2(math.e))
    return n * (first - second)


def min_distance_bound(dp: int, beta: float, alpha: float, n: int) -> int | None:
    """``floor(alpha n) + 1`` when ``beta > 1/2 + 1/(4 d_p)``, else ``None``."""
    if beta > 0.5 + 1 / (4 * dp):
        return math.floor(alpha * n) + 1
    return None


# -- synthetic graphs ---------------------------------------------------------

def random_regular_support(n: int, m: int, dp: int, dc: int, rng, max_overlap: int | None = None,
                           max_tries: int = 1000) -> np.ndarray:
    """Random simple ``(d_p, d_c)``-regular bipartite support, as an ``m x n`` bool matrix.

    Columns are filled one at a time, drawing constraint nodes without
    replacement in proportion to their remaining capacity. With ``max_overlap`` set, any two pattern nodes share at most that many
    constraint nodes (built column by column, restarting on dead ends).
    """
    if n * dp != m * dc:
        raise ValueError(f"n*d_p = {n * dp} != m*d_c = {m * dc}")
    if dp > m:
        raise ValueError("d_p exceeds m")
    for _ in range(max_tries):
        S = _regular_attempt(n, m, dp, dc, rng, max_overlap)
        if S is not None:
            return S
    raise RuntimeError(f"no ({dp},{dc})-regular graph found in {max_tries} tries")


def _regular_attempt(n, m, dp, dc, rng, max_overlap):
    S = np.zeros((m, n), dtype=bool)
    cap = np.full(m, dc)
    for j in range(n):
        avail = np.flatnonzero(cap)
        if len(avail) < dp:
            return None
        order = rng.choice(avail, size=len(avail), replace=False, p=cap[avail] / cap[avail].sum())
        if max_overlap is None:
            chosen = [int(c) for c in order[:dp]]
        else:
            chosen = []
            for c in order:
                trial = chosen + [int(c)]
                if j and S[trial, :j].sum(axis=0).max() > max_overlap:
                    continue
                chosen = trial
                if len(chosen) == dp:
                    break
        if len(chosen) < dp:
            return None
        S[chosen, j] = True
        cap[chosen] -= 1
    return S


def null_weights(support: np.ndarray, rng, patterns=None) -> np.ndarray:
    """Random real weights on ``support`` whose rows are orthogonal to ``patterns``.

    Each row is drawn uniformly (Gaussian) from the null space of the patterns
    restricted to that row's support.
    """
    support = np.asarray(support, dtype=bool)
    m, n = support.shape
    P = np.zeros((0, n)) if patterns is None else np.atleast_2d(np.asarray(patterns, dtype=float))
    W = np.zeros((m, n))
    for i in range(m):
        cols = np.flatnonzero(support[i])
        A = P[:, cols]
        if A.shape[0]:
            _, s, vt = np.linalg.svd(A)
            r = int(np.sum(s > 1e-10 * max(s.max(initial=0), 1)))
            basis = vt[r:]
        else:
            basis = np.eye(len(cols))
        if basis.shape[0] == 0:
            raise ValueError(f"row {i}: no nonzero weights orthogonal to the patterns")
        for _ in range(100):
            v = rng.standard_normal(basis.shape[0]) @ basis
            if np.all(np.abs(v) > 1e-3):
                break
        else:
            raise ValueError(f"row {i}: could not draw weights with full support")
        W[i, cols] = v
    return W


def sign_weights(support: np.ndarray, rng) -> np.ndarray:
    """+-1 weights on ``support``, as balanced as the row degree allows."""
    support = np.asarray(support, dtype=bool)
    W = np.zeros(support.shape)
    for i, row in enumerate(support):
        cols = np.flatnonzero(row)
        signs = np.where(np.arange(len(cols)) % 2 == 0, 1.0, -1.0)
        W[i, cols] = rng.permutation(signs)
    return W


def null_patterns(g: NeuralGraph, Q: int | None = None, tol: float = 1e-9,
                  chunk: int = 1 << 16) -> np.ndarray:
    """All ``x`` in ``{0..Q-1}^n`` with ``W x = 0`` (brute force, desk scale)."""
    Q = g.Q if Q is None else Q
    n = g.n
    total = Q ** n
    if total > 50_000_000:
        raise BudgetExceeded(f"{total} candidate patterns")
    powers = Q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    found = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        X = (idx[:, None] // powers) % Q
        ok = np.all(np.abs(X @ g.W.T) <= tol, axis=1)
        found.append(X[ok])
    return np.concatenate(found) if found else np.zeros((0, n), dtype=np.int64)


def min_hamming_distance(X) -> int | None:
    X = np.asarray(X)
    best = None
    for i in range(len(X) - 1):
        d = np.count_nonzero(X[i + 1:] != X[i], axis=1).min()
        best = int(d) if best is None else min(best, int(d))
    return best


# -- text formats -------------------------------------------------------------

def write_graph(path, g: NeuralGraph) -> None:
    seed = "-" if g.seed is None else str(int(g.seed))
    lines = [f"{g.m} {g.n} {g.Q} {seed} {float(g.theta_final)!r}"]
    for row in g.W:
        lines.append(" ".join("0" if v == 0 else repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> NeuralGraph:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 5:
        raise ValueError(f"{path}: bad weights header {lines[0]!r}")
    m, n, Q = int(head[0]), int(head[1]), int(head[2])
    seed = None if head[3] == "-" else int(head[3])
    rows = [ln.split() for ln in lines[1:1 + m]]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {m} rows of {n} weights")
    W = np.array(rows, dtype=float).reshape(m, n)
    return NeuralGraph(W, Q, seed, float(head[4]))


def write_edge_list(path, g: NeuralGraph) -> None:
    dp = regular_degree(g)
    dcs = np.unique(g.constraint_degrees)
    dc = int(dcs[0]) if len(dcs) == 1 else -1
    lines = [f"{g.n} {g.m} {dp} {dc}"]
    for i, j in zip(*np.nonzero(g.W.T)):
        lines.append(f"{i} {j} {float(g.W[j, i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, Q: int = 2) -> tuple[NeuralGraph, int, int]:
    """Load ``n m d_p d_c`` + ``pattern constraint weight`` lines; degrees are checked."""
    lines = [ln for ln in Path(path).read_text().split("\n") if ln.strip()]
    n, m, dp, dc = (int(v) for v in lines[0].split())
    W = np.zeros((m, n))
    for ln in lines[1:]:
        p, c, w = ln.split()
        W[int(c), int(p)] = float(w)
    g = NeuralGraph(W, Q)
    if not np.all(g.pattern_degrees == dp):
        raise ValueError(f"{path}: pattern degrees differ from d_p={dp}")
    if dc >= 0 and not np.all(g.constraint_degrees == dc):
        raise ValueError(f"{path}: constraint degrees differ from d_c={dc}")
    return g, dp, dc
