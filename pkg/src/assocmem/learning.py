"""Sparse null-space learning.

Each constraint vector ``w`` is learned by stochastic descent on
``sum_mu (x_mu . w)^2`` with a thresholded penalty that pushes small entries to
zero. All ``m`` constraints run in lock-step as one vectorized batch; every row
owns its own random stream, so results do not depend on how rows are batched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import NeuralGraph


class ConfigError(ValueError):
    """Invalid learning configuration (including a violated step-size guard)."""


class NotConvergedError(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class LearningConfig:
    alpha0: float = 1.5
    eta: float = 1.0
    theta0: float = 0.031
    epsilon: float = 1e-3
    max_passes: int = 1000
    m: int | None = None
    # alpha_t = alpha0 * tau / (tau + t - 1); tau = 1 gives alpha0 / t
    decay_passes: float = 300.0
    init_density: float = 0.2
    dedup_threshold: float = 0.95
    max_retries: int = 3
    polish: bool = True

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ConfigError(f"alpha0 must be > 0, got {self.alpha0}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if not self.theta0 > 0:
            raise ConfigError(f"theta0 must be > 0, got {self.theta0}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_passes < 1:
            raise ConfigError("max_passes must be >= 1")
        if not self.decay_passes >= 1:
            raise ConfigError("decay_passes must be >= 1")
        if not 0 < self.init_density <= 1:
            raise ConfigError("init_density must lie in (0, 1]")
        if self.m is not None and self.m < 0:
            raise ConfigError("m must be non-negative")

    def decay(self, t: int) -> float:
        return self.decay_passes / (self.decay_passes + t - 1)

    def alpha(self, t: int, scale: float = 1.0) -> float:
        """Step size of pass ``t`` (1-based) for data with mean squared norm ``scale``."""
        return self.alpha0 * self.decay(t) / scale

    def theta(self, t: int) -> float:
        return self.theta0 * self.decay(t)


def check_guard(alpha_t: float, eta: float) -> None:
    if not 2 * alpha_t * eta < 1:
        raise ConfigError(f"step-size guard violated: 2*alpha*eta = {2 * alpha_t * eta:.4g} >= 1")


def project(x, w) -> float:
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    if x.shape != w.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {w.shape}")
    return float(x @ w)


def sparsity_gradient(w, theta_t: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.where(np.abs(w) <= theta_t, w, 0.0)


def learning_step(w, x, alpha_t: float, eta: float, theta_t: float) -> np.ndarray:
    check_guard(alpha_t, eta)
    w = np.asarray(w, dtype=float)
    ww = w @ w
    if not ww > 0:
        raise ValueError("iterate has zero norm")
    y = project(x, w)
    return w - alpha_t * (y * (np.asarray(x, dtype=float) - (y / ww) * w)
                          + eta * sparsity_gradient(w, theta_t))


def residual_energy(X, w) -> float:
    X = np.asarray(X, dtype=float)
    return float(np.sum((X @ np.asarray(w, dtype=float)) ** 2))


def _data(X) -> np.ndarray:
    X = getattr(X, "X", X)
    return np.atleast_2d(np.asarray(X, dtype=float))


def sparse_init(n: int, density: float, rng) -> np.ndarray:
    w = np.where(rng.random(n) < density, rng.uniform(-1, 1, n), 0.0)
    if not np.any(w):
        w[rng.integers(n)] = rng.uniform(0.5, 1) * rng.choice([-1, 1])
    return w / np.linalg.norm(w)


def prune(W, theta: float) -> np.ndarray:
    """Zero entries with ``|w| <= theta`` and normalize each row (zero rows stay zero)."""
    W = np.atleast_2d(np.array(W, dtype=float))
    W[np.abs(W) <= theta] = 0.0
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    return np.divide(W, norms, out=np.zeros_like(W), where=norms > 0)


def polish(X, w, theta: float, rounds: int = 50) -> tuple[np.ndarray, bool]:
    """Project ``w`` onto the exact null space of ``X`` restricted to its support.

    Entries that drop to ``<= theta / 2`` are pruned and the projection is repeated.
    Returns ``(w, False)`` unchanged if the support runs out of null directions.
    """
    X = np.asarray(X, dtype=float)
    v = np.array(w, dtype=float)
    for _ in range(rounds):
        S = np.flatnonzero(v)
        if len(S) == 0:
            break
        A = X[:, S]
        if A.size:
            _, s, vt = np.linalg.svd(A, full_matrices=False)
            r = int(np.sum(s > s.max(initial=0) * max(A.shape) * 1e-12))
            vs = v[S] - vt[:r].T @ (vt[:r] @ v[S])
        else:
            vs = v[S]
        nrm = np.linalg.norm(vs)
        if nrm < 1e-6:
            break
        new = np.zeros_like(v)
        new[S] = vs / nrm
        small = np.abs(new) <= theta / 2
        if not np.any(small & (new != 0)):
            return new, True
        new[small] = 0.0
        v = new
    return np.asarray(w, dtype=float), False


@dataclass
class ConstraintResult:
    w: np.ndarray
    converged: bool
    passes: int
    residual: float
    theta_final: float
    polished: bool = False


def _learn_batch(X: np.ndarray, rngs: list, cfg: LearningConfig) -> list[ConstraintResult]:
    C, n = X.shape
    b = len(rngs)
    W = np.stack([sparse_init(n, cfg.init_density, r) for r in rngs]) if b else np.zeros((0, n))
    out: list[ConstraintResult | None] = [None] * b
    res0 = np.sum((X @ W.T) ** 2, axis=0) if C else np.zeros(b)
    for i in np.flatnonzero(res0 <= cfg.epsilon):
        out[i] = ConstraintResult(W[i].copy(), True, 0, float(res0[i]), cfg.theta(1))
    active = np.flatnonzero(res0 > cfg.epsilon)
    scale = float(np.mean(np.sum(X ** 2, axis=1))) if C else 1.0
    Wa = W[active]
    last = None
    for t in range(1, cfg.max_passes + 1):
        if len(active) == 0:
            break
        a, th = cfg.alpha(t, scale), cfg.theta(t)
        check_guard(a, cfg.eta)
        order = np.stack([rngs[i].permutation(C) for i in active])
        for s in range(C):
            x = X[order[:, s]]
            y = np.einsum("ij,ij->i", x, Wa)
            ww = np.einsum("ij,ij->i", Wa, Wa)
            if not np.all(ww > 0):
                raise FloatingPointError("iterate norm collapsed to zero")
            pen = np.where(np.abs(Wa) <= th, Wa, 0.0)
            Wa = Wa - a * (y[:, None] * (x - (y / ww)[:, None] * Wa) + cfg.eta * pen)
        cand = prune(Wa, th)
        res = np.sum((X @ cand.T) ** 2, axis=0)
        ok = (res <= cfg.epsilon) & np.any(cand != 0, axis=1)
        for j in np.flatnonzero(ok):
            out[active[j]] = ConstraintResult(cand[j], True, t, float(res[j]), th)
        keep = ~ok
        active, Wa = active[keep], Wa[keep]
        last = (cand[keep], res[keep], t, th)
    for j, i in enumerate(active):
        cand, res, t, th = last
        out[i] = ConstraintResult(cand[j], False, t, float(res[j]), th)
    if cfg.polish:
        for r in out:
            if r.converged and r.passes > 0:
                r.w, r.polished = polish(X, r.w, r.theta_final)
                r.residual = residual_energy(X, r.w)
    return out


def learn_constraint(X, config: LearningConfig, rng) -> ConstraintResult:
    """Learn one normalized sparse ``w`` with ``sum (x.w)^2 <= epsilon``."""
    r = _learn_batch(_data(X), [rng], config)[0]
    if not r.converged:
        raise NotConvergedError(
            f"residual {r.residual:.3g} > epsilon {config.epsilon} after {r.passes} passes", r)
    return r


@dataclass
class LearningReport:
    passes: list[int]
    residuals: list[float]
    thetas: list[float]
    rank: int
    duplicates_dropped: int
    retries: int
    sparsity: list[float] = field(default_factory=list)


def learn_graph(X, config: LearningConfig, rng, Q: int | None = None,
                seed: int | None = None) -> tuple[NeuralGraph, LearningReport]:
    """Learn ``m`` constraints (``config.m``, default ``n - k``) as one graph.

    Near-duplicate rows are re-learned from fresh starts up to ``max_retries``
    times; any still duplicated afterwards are dropped.
    """
    spec = getattr(X, "spec", None)
    Xd = _data(X)
    n = Xd.shape[1]
    m = config.m if config.m is not None else (spec.m if spec is not None else None)
    if m is None:
        raise ConfigError("number of constraints m is unknown")
    if Q is None:
        Q = spec.Q if spec is not None else int(Xd.max(initial=1)) + 1
    results = _learn_batch(Xd, list(rng.spawn(m)), config)
    retries = 0
    while True:
        bad = [i for i, r in enumerate(results) if not r.converged]
        rough = [i for i, r in enumerate(results)
                 if config.polish and r.passes > 0 and not r.polished]
        dup = _duplicates(results, config.dedup_threshold)
        redo = sorted(set(bad) | set(rough) | set(dup))
        if not redo or retries >= config.max_retries:
            break
        retries += 1
        fresh = _learn_batch(Xd, list(rng.spawn(len(redo))), config)
        for i, r in zip(redo, fresh):
            results[i] = r
    bad = [i for i, r in enumerate(results) if not r.converged]
    if bad:
        worst = max(results[i].residual for i in bad)
        raise NotConvergedError(
            f"{len(bad)} of {m} constraints did not converge (worst residual {worst:.3g})", results)
    dup = set(_duplicates(results, config.dedup_threshold))
    kept = [r for i, r in enumerate(results) if i not in dup]
    W = np.stack([r.w for r in kept]) if kept else np.zeros((0, n))
    theta_final = min((r.theta_final for r in kept), default=0.0)
    g = NeuralGraph(W, Q, seed, theta_final)
    rank = int(np.linalg.matrix_rank(W)) if kept else 0
    report = LearningReport([r.passes for r in kept], [r.residual for r in kept],
                            [r.theta_final for r in kept], rank, len(dup), retries,
                            [float(np.count_nonzero(r.w) / n) for r in kept])
    return g, report


def _duplicates(results, threshold: float) -> list[int]:
    """Indices of rows whose |cosine| with an earlier kept row exceeds ``threshold``."""
    kept: list[np.ndarray] = []
    dup = []
    for i, r in enumerate(results):
        if not r.converged:
            continue
        w = r.w / np.linalg.norm(r.w)
        if any(abs(w @ k) > threshold for k in kept):
            dup.append(i)
        else:
            kept.append(w)
    return dup


def null_space_basis(X, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (rows) of ``{w : X w = 0}``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    if X.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(X)
    r = int(np.sum(s > tol * max(s.max(initial=0), 1)))
    return vt[r:]


__all__ = [
    "ConfigError", "NotConvergedError", "LearningConfig", "check_guard", "project",
    "sparsity_gradient", "learning_step", "residual_energy", "sparse_init", "prune",
    "polish", "ConstraintResult", "learn_constraint", "LearningReport", "learn_graph",
    "null_space_basis",
]
