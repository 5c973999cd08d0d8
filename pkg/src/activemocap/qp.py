"""Dense box-constrained QP solver.

Solves ``min 0.5 x'Px + q'x  s.t.  l <= Ax <= u`` with the ADMM operator
splitting used by OSQP (fixed penalty, cached factorization), followed by an
active-set polish that solves the equality-constrained KKT system exactly.
Problems that share ``P`` and ``A`` (the MPC case: only ``q``, ``l``, ``u``
change from tick to tick) reuse one factorization and can be solved in a
batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class QPError(RuntimeError):
    def __init__(self, msg: str, residuals: dict | None = None):
        super().__init__(msg)
        self.residuals = residuals or {}


class QPInfeasible(QPError):
    pass


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    const: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.l > self.u + 1e-12):
            raise QPInfeasible("QP infeasible: lower bound exceeds upper bound")

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.const)


@dataclass(frozen=True)
class SolverSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    max_iter: int = 4000
    tol: float = 1e-6
    check_every: int = 10
    polish: bool = True


class _Factor:
    """Cached ``(P + sigma I + rho A'A)^-1`` for one (P, A, settings) triple."""

    def __init__(self, P: np.ndarray, A: np.ndarray, s: SolverSettings):
        n = P.shape[0]
        self.P = P
        self.A = A
        self.At = np.ascontiguousarray(A.T)
        K = P + s.sigma * np.eye(n) + s.rho * self.At @ A
        self.Minv = np.linalg.inv(K)
        self.MinvAt = self.Minv @ self.At


_CACHE: dict = {}


def _factor(P: np.ndarray, A: np.ndarray, s: SolverSettings) -> _Factor:
    key = (P.shape, A.shape, P.tobytes(), A.tobytes(), s.rho, s.sigma)
    f = _CACHE.get(key)
    if f is None:
        if len(_CACHE) > 64:
            _CACHE.clear()
        f = _Factor(P, A, s)
        _CACHE[key] = f
    return f


def kkt_residuals(prob: QpProblem, x: np.ndarray, y: np.ndarray) -> dict:
    """Primal, dual and complementarity residuals (infinity norms).

    ``y`` follows the convention ``Px + q + A'y = 0`` with ``y < 0`` on
    active lower bounds and ``y > 0`` on active upper bounds.
    """
    Ax = prob.A @ x
    prim = float(np.max(np.maximum(prob.l - Ax, 0.0) + np.maximum(Ax - prob.u, 0.0), initial=0.0))
    dual = float(np.max(np.abs(prob.P @ x + prob.q + prob.A.T @ y), initial=0.0))
    yl, yu = np.minimum(y, 0.0), np.maximum(y, 0.0)
    lo = np.where(np.isfinite(prob.l), Ax - prob.l, 0.0)
    hi = np.where(np.isfinite(prob.u), prob.u - Ax, 0.0)
    comp = float(np.max(np.abs(yl * lo) + np.abs(yu * hi), initial=0.0))
    return {"primal": prim, "dual": dual, "complementarity": comp}


def _polish(prob: QpProblem, x: np.ndarray, y: np.ndarray, tol: float):
    """Exact solve on the active set guessed from the ADMM iterate."""
    Ax = prob.A @ x
    scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
    lower = (y < -1e-9 * scale) | (Ax - prob.l < 1e-7)
    upper = ~lower & ((y > 1e-9 * scale) | (prob.u - Ax < 1e-7))
    act = np.flatnonzero(lower | upper)
    n, m = prob.P.shape[0], act.size
    Aa = prob.A[act]
    b = np.where(lower[act], prob.l[act], prob.u[act])
    K = np.zeros((n + m, n + m))
    K[:n, :n] = prob.P
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    rhs = np.concatenate([-prob.q, b])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    xp = sol[:n]
    yp = np.zeros_like(y)
    yp[act] = sol[n:]
    # lower-active multipliers must be <= 0, upper-active >= 0
    if np.any(yp[lower] > tol) or np.any(yp[upper] < -tol):
        return None
    r = kkt_residuals(prob, xp, yp)
    if max(r.values()) > tol:
        return None
    return xp, yp


def solve_qp(prob: QpProblem, tol: float = 1e-6, settings: SolverSettings = SolverSettings(), warm: tuple | None = None) -> np.ndarray:
    """Solve one problem; see :func:`solve_qp_batch`."""
    x, _ = solve_qp_batch([prob], tol, settings, [warm] if warm is not None else None)[0]
    return x


def solve_qp_batch(probs, tol: float = 1e-6, settings: SolverSettings = SolverSettings(), warms=None):
    """Solve problems sharing ``P`` and ``A``. Returns ``[(x, y), ...]``.

    Raises :class:`QPInfeasible` or :class:`QPError` for the first problem that
    fails; callers that need per-problem fallbacks should solve one at a time.
    """
    s = settings
    P, A = probs[0].P, probs[0].A
    f = _factor(P, A, s)
    B = len(probs)
    n, m = A.shape[1], A.shape[0]
    Q = np.stack([p.q for p in probs])
    L = np.stack([p.l for p in probs])
    U = np.stack([p.u for p in probs])
    if warms is not None:
        X = np.stack([w[0] for w in warms]).astype(float)
        Y = np.stack([w[1] for w in warms]).astype(float)
        Z = np.clip(X @ f.At, L, U)
    else:
        X = np.zeros((B, n))
        Z = np.clip(np.zeros((B, m)), L, U)
        Y = np.zeros((B, m))
    rho, sig, alpha = s.rho, s.sigma, s.alpha
    done = np.zeros(B, dtype=bool)
    results: list = [None] * B
    Yprev = Y.copy()
    for it in range(1, s.max_iter + 1):
        Xt = (sig * X - Q) @ f.Minv + (rho * Z - Y) @ f.MinvAt.T
        Zt = Xt @ f.At
        X = alpha * Xt + (1 - alpha) * X
        Zr = alpha * Zt + (1 - alpha) * Z
        Zn = np.clip(Zr + Y / rho, L, U)
        Y = Y + rho * (Zr - Zn)
        Z = Zn
        if it % s.check_every and it != s.max_iter:
            continue
        AX = X @ f.At
        rp = np.max(np.abs(AX - Z), axis=1)
        rd = np.max(np.abs(X @ P + Q + Y @ A), axis=1)
        for b in np.flatnonzero(~done):
            prob = probs[b]
            if rp[b] < tol and rd[b] < tol:
                done[b] = True
                results[b] = _finish(prob, X[b], Y[b], tol, s)
                continue
            dy = Y[b] - Yprev[b]
            ndy = float(np.max(np.abs(dy)))
            if ndy > 1e-3 and it > 50:
                cert = float(np.max(np.abs(A.T @ dy)))
                ub = np.where(np.isfinite(prob.u), prob.u, 0.0) @ np.maximum(dy, 0.0)
                lb = np.where(np.isfinite(prob.l), prob.l, 0.0) @ np.minimum(dy, 0.0)
                if cert < 1e-5 * ndy and ub + lb < -1e-5 * ndy:
                    raise QPInfeasible("QP infeasible", {"primal": float(rp[b]), "dual": float(rd[b])})
        Yprev = Y.copy()
        if done.all():
            break
    for b in np.flatnonzero(~done):
        # iteration cap: accept only if the polish recovers an exact solution
        pol = _polish(probs[b], X[b], Y[b], tol) if s.polish else None
        if pol is None:
            raise QPError(
                "QP iteration cap exceeded",
                {"primal": float(rp[b]), "dual": float(rd[b]), "iterations": s.max_iter},
            )
        results[b] = pol
    return results


def _finish(prob, x, y, tol, s):
    if s.polish:
        pol = _polish(prob, x, y, tol)
        if pol is not None:
            return pol
    return x, y
