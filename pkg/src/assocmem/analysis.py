"""First-iteration error probabilities for majority-vote recall.

Error counts are pushed through the average neighbourhood size
``S(e) = m (1 - (1 - dbar/m)^e)`` and binomial tails over the pattern-node
degree distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import DegreeDistribution


@dataclass(frozen=True)
class AnalysisInput:
    dd: DegreeDistribution
    m: int
    n: int
    phi: float
    e0: int

    def __post_init__(self):
        if not 0 <= self.e0 <= self.n:
            raise ValueError(f"need 0 <= e0 <= n, got e0={self.e0}, n={self.n}")
        if not 0 < self.phi <= 1:
            raise ValueError(f"phi must lie in (0, 1], got {self.phi}")


@dataclass(frozen=True)
class ErrorBoundReport:
    pe1: float
    pe2: float
    pb: float
    pe_block: float
    pE_bound: float


def neighborhood_size(e: int, dbar: float, m: int) -> float:
    if e < 0 or not 0 < dbar <= m:
        raise ValueError(f"need e >= 0 and 0 < dbar <= m (e={e}, dbar={dbar}, m={m})")
    return m * (1 - (1 - dbar / m) ** e)


def binomial_tail(d: int, start: int, q: float) -> float:
    """``P[Bin(d, q) >= start]``, summed in log space."""
    start = max(start, 0)
    if start > d:
        return 0.0
    if start == 0:
        return 1.0
    if q <= 0:
        return 0.0
    if q >= 1:
        return 1.0
    lq, lr = math.log(q), math.log1p(-q)
    lgd = math.lgamma(d + 1)
    total = 0.0
    for i in range(start, d + 1):
        total += math.exp(lgd - math.lgamma(i + 1) - math.lgamma(d - i + 1) + i * lq + (d - i) * lr)
    return min(total, 1.0)


def _ceil(v: float) -> int:
    # guards products such as 0.6 * 5 = 3.0000000000000004
    return math.ceil(v - 1e-9)


def p1x(dx: int, S: float, m: int, phi: float) -> float:
    """Probability that a clean degree-``dx`` node sees at least ``phi dx`` violated neighbours."""
    if not 0 <= S <= m:
        raise ValueError(f"need 0 <= S <= m, got S={S}")
    return binomial_tail(dx, _ceil(phi * dx), S / m)


def pe1(dd: DegreeDistribution, S: float, m: int, phi: float) -> float:
    return float(sum(f * p1x(d, S, m, phi) for d, f in dd.lam.items()))


def p2x(dx: int, S_star: float, m: int) -> float:
    if not 0 <= S_star <= m:
        raise ValueError(f"need 0 <= S* <= m, got {S_star}")
    return binomial_tail(dx, _ceil(dx / 2), S_star / m)


def p2x_and_pe2(dd: DegreeDistribution, e0: int, dbar: float, m: int) -> float:
    """Bound on the chance that an erroneous node shares half its neighbours with other errors."""
    if e0 < 1:
        raise ValueError("e0 must be >= 1")
    S_star = neighborhood_size(e0 - 1, dbar, m)
    return float(sum(f * p2x(d, S_star, m) for d, f in dd.lam.items()))


def _check_prob(name, v):
    assert 0.0 <= v <= 1.0, f"{name} = {v} outside [0, 1]"
    return v


def block_error(pb: float, n: int) -> float:
    """Chance that at least one of ``n`` independent bits is wrong."""
    return 1 - (1 - pb) ** n


def error_bound(ai: AnalysisInput) -> ErrorBoundReport:
    dd, m, n, e0 = ai.dd, ai.m, ai.n, ai.e0
    S = neighborhood_size(e0, dd.dbar, m)
    e1 = _check_prob("pe1", pe1(dd, S, m, ai.phi))
    e2 = _check_prob("pe2", p2x_and_pe2(dd, e0, dd.dbar, m)) if e0 >= 1 else 0.0
    pb = _check_prob("pb", (n - e0) / n * e1 + e0 / n * e2)
    pe = _check_prob("pe", block_error(pb, n))
    return ErrorBoundReport(e1, e2, pb, pe, pe)


def error_bound_trajectory(ai: AnalysisInput, iterations: int) -> list[ErrorBoundReport]:
    """Diagnostic: feed ``round(n * P_b)`` back in as the next error count."""
    out = []
    e = ai.e0
    for _ in range(iterations):
        r = error_bound(AnalysisInput(ai.dd, ai.m, ai.n, ai.phi, e))
        out.append(r)
        e = min(ai.n, int(round(ai.n * r.pb)))
    return out


# -- Monte Carlo check of the neighbourhood law -------------------------------

def fixed_degree(d: int):
    def sample(rng, size):
        return np.full(size, d, dtype=np.int64)
    sample.mean = float(d)
    return sample


def uniform_degrees(lo: int, hi: int):
    """Degrees uniform on ``lo..hi`` inclusive."""
    def sample(rng, size):
        return rng.integers(lo, hi + 1, size=size)
    sample.mean = (lo + hi) / 2
    return sample


def empirical_degrees(degrees):
    degrees = np.asarray(degrees, dtype=np.int64)

    def sample(rng, size):
        return rng.choice(degrees, size=size)
    sample.mean = float(degrees.mean())
    return sample


def monte_carlo_neighborhood(n: int, m: int, sampler, trials: int, rng) -> list[tuple[int, float]]:
    """Average ``|N(E_e)|`` after attaching ``e = 1..n`` random pattern nodes.

    Each node draws its degree from ``sampler`` and connects to that many
    distinct constraint nodes chosen uniformly; nodes are independent.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    covered = np.zeros((trials, m), dtype=bool)
    out = []
    for e in range(1, n + 1):
        d = np.minimum(sampler(rng, trials), m)
        order = np.argsort(rng.random((trials, m)), axis=1)
        picked = np.zeros((trials, m), dtype=bool)
        np.put_along_axis(picked, order, np.arange(m) < d[:, None], axis=1)
        covered |= picked
        out.append((e, float(covered.sum(axis=1).mean())))
    return out
