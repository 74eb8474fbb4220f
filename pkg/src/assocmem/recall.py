"""Iterative noise removal on the learned graph.

Constraint checks use the real weights; feedback to pattern neurons uses the
backward weights (signs, or the weights themselves in the L1 variant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NeuralGraph

VARIANTS = ("WTA", "MV", "MV_L1")


@dataclass(frozen=True)
class RecallConfig:
    phi: float = 1.0
    tmax: int = 20
    variant: str = "MV"
    zero_tol: float = 1e-9

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.phi <= 1:
            raise ValueError(f"phi must lie in (0, 1], got {self.phi}")
        if self.tmax < 1:
            raise ValueError("tmax must be >= 1")


def tmax_for(errors: int, factor: int = 20) -> int:
    return max(1, factor * errors)


@dataclass
class RecallOutcome:
    x_out: np.ndarray
    converged: bool
    iterations: int
    x_first: np.ndarray
    bit_errors_first_iter: int | None = None
    bit_errors_final: int | None = None


def inject_noise(x, e: int, Q: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Add +-1 to ``e`` distinct random positions, then clip to ``[0, Q-1]``."""
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[0]
    if not 0 <= e <= n:
        raise ValueError(f"need 0 <= e <= n, got e={e}, n={n}")
    z = np.zeros(n, dtype=np.int64)
    pos = rng.choice(n, size=e, replace=False)
    z[pos] = rng.choice(np.array([-1, 1]), size=e)
    return np.clip(x + z, 0, Q - 1), z


def _matrix(w):
    return getattr(w, "Wb", w)


def forward_iteration(W, x, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``h = W x`` and ``y = -sign(h)``, treating ``|h| <= tol`` as zero."""
    h = _matrix(W) @ np.asarray(x, dtype=float)
    y = np.where(h < -tol, 1, np.where(h > tol, -1, 0))
    return h, y


def feedback_norms(Wb, norm: str = "L0") -> np.ndarray:
    Wb = _matrix(Wb)
    if norm == "L0":
        return np.count_nonzero(Wb, axis=0).astype(float)
    if norm == "L1":
        return np.abs(Wb).sum(axis=0)
    raise ValueError(f"unknown norm {norm!r}")


def backward_feedback(Wb, y, norm: str = "L0", D=None) -> tuple[np.ndarray, np.ndarray]:
    Wb = _matrix(Wb)
    D = feedback_norms(Wb, norm) if D is None else D
    y = np.asarray(y, dtype=float)
    num1 = Wb.T @ y
    num2 = np.abs(Wb).T @ np.abs(y)
    safe = np.where(D > 0, D, 1.0)
    g1 = np.where(D > 0, num1 / safe, 0.0)
    g2 = np.where(D > 0, num2 / safe, 0.0)
    return g1, g2


def _prepared(g: NeuralGraph, variant: str):
    key = ("recall", variant == "MV_L1")
    if key not in g._cache:
        Wb = g.W if variant == "MV_L1" else np.sign(g.W)
        g._cache[key] = (Wb, feedback_norms(Wb, "L1" if variant == "MV_L1" else "L0"))
    return g._cache[key]


def _errors(x, ref):
    return None if ref is None else int(np.count_nonzero(x != ref))


def _decode(g: NeuralGraph, x0, cfg: RecallConfig, reference, wta: bool) -> RecallOutcome:
    W = g.W
    Wb, D = _prepared(g, cfg.variant)
    hi = g.Q - 1
    x = np.array(x0, dtype=np.int64)
    x_first = None
    it = 0
    converged = False
    while True:
        _, y = forward_iteration(W, x, cfg.zero_tol)
        if not y.any():
            converged = True
            break
        if it >= cfg.tmax:
            break
        g1, g2 = backward_feedback(Wb, y, D=D)
        if wta:
            j = int(np.argmax(g2))
            s = int(np.sign(g1[j]))
            if s:
                x[j] = min(max(x[j] + s, 0), hi)
        else:
            if cfg.phi >= 1:
                sel = g2 >= 1 - 1e-12
            else:
                sel = g2 > cfg.phi + 1e-12
            x[sel] = np.clip(x[sel] + np.sign(g1[sel]).astype(np.int64), 0, hi)
        it += 1
        if it == 1:
            x_first = x.copy()
    if x_first is None:
        x_first = x.copy()
    return RecallOutcome(x, converged, it, x_first, _errors(x_first, reference), _errors(x, reference))


def wta_recall(g: NeuralGraph, x0, cfg: RecallConfig, reference=None) -> RecallOutcome:
    """Each round flips the single neuron with the largest feedback fraction (lowest index on ties)."""
    if cfg.variant != "WTA":
        raise ValueError("wta_recall needs variant='WTA'")
    return _decode(g, x0, cfg, reference, wta=True)


def mv_recall(g: NeuralGraph, x0, cfg: RecallConfig, reference=None) -> RecallOutcome:
    """Each round updates every neuron whose feedback fraction exceeds ``phi`` (``>= 1`` when ``phi = 1``)."""
    if cfg.variant not in ("MV", "MV_L1"):
        raise ValueError("mv_recall needs variant 'MV' or 'MV_L1'")
    return _decode(g, x0, cfg, reference, wta=False)


def recall(g: NeuralGraph, x0, cfg: RecallConfig, reference=None) -> RecallOutcome:
    if cfg.variant == "WTA":
        return wta_recall(g, x0, cfg, reference)
    return mv_recall(g, x0, cfg, reference)
