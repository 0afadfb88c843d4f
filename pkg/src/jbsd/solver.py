"""Riemannian gradient descent for low-rank Hankel demixing.

Each user's lift ``Z_k`` lives on the rank-``r`` manifold.  One iteration

1. forms the shared residual ``e = sum_k A_k G*(Z_k) - D y``;
2. for every user, projects ``G_k = G(A_k* e) + (I - G G*) Z_k`` onto the
   tangent space at ``Z_k``;
3. steps ``W_k = Z_k - alpha P_T(G_k)`` and retracts by truncated SVD.

Since ``Z_k`` is already in its tangent space, ``P_T(G_k) = Z_k + P_T(G(M_k))``
with ``M_k = A_k* e - G* Z_k``, so the step only needs ``U^H G(M_k)`` and
``G(M_k) V`` (two FFT correlations) and a ``2r x 2r`` SVD.  No dense
``s n1 x n2`` matrix is formed after initialization.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .hankel_ops import (
    LiftShape,
    apply_D,
    apply_G,
    apply_G_adjoint,
    fast_lift_products,
    lowrank_hankel_adjoint,
)
from .manifold import LowRankLift, TangentVector, retract, tangent_project, truncated_svd
from .sensing import MeasurementSet, measure, measure_adjoint_k

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "IterateState",
    "IterationTrace",
    "SolveResult",
    "DivergenceError",
    "initialize",
    "state_from_lifts",
    "residual",
    "riemannian_gradient_k",
    "riemannian_gradients",
    "rgd_step",
    "exact_line_search_alpha",
    "objective",
    "solve",
    "unlift",
    "lift_truth",
    "relative_error",
]

DIVERGENCE_RATIO = 1e6
ALPHA_THEORY_RANGE = (7 / 8, 1.0)


class DivergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverConfig:
    """Solver settings.

    ``step`` is ``"fixed"`` or ``"linesearch"``.  ``tol_truth`` is only used
    when ground truth is passed to :func:`solve`.
    """

    rank: int
    step: str = "fixed"
    alpha: float = 1.0
    max_iters: int = 2000
    tol_residual: float = 1e-4
    tol_truth: float = 1e-4
    theory_mode: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.step not in ("fixed", "linesearch"):
            raise ValueError(f"unknown step policy {self.step!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        lo, hi = ALPHA_THEORY_RANGE
        if self.theory_mode and self.step == "fixed" and not lo <= self.alpha <= hi:
            raise ValueError(f"theory mode needs alpha in [7/8, 1], got {self.alpha}")


@dataclass
class IterateState:
    lifts: list[LowRankLift]
    shape: LiftShape
    t: int = 0
    # G*(Z_k) per user and the shared residual; valid only together
    unlifted: np.ndarray | None = None
    e: np.ndarray | None = None
    Dy: np.ndarray | None = None
    alpha: float = float("nan")

    @property
    def residual_valid(self):
        return self.e is not None


@dataclass
class IterationTrace:
    residual: list = field(default_factory=list)
    rel_error: list = field(default_factory=list)
    distance: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    time: list = field(default_factory=list)
    rank_collapse: list = field(default_factory=list)

    def append(self, **row):
        for key, value in row.items():
            getattr(self, key).append(value)

    def __len__(self):
        return len(self.residual)

    def as_dict(self):
        return {k: list(v) for k, v in self.__dict__.items()}


@dataclass
class SolveResult:
    lifts: list[LowRankLift]
    signals: np.ndarray
    trace: IterationTrace
    status: str
    n_iter: int


def _weights(shape):
    return shape.weights.astype(float)


def _unlifted(lift, shape):
    """``G*(Z)`` for a factored lift."""
    return apply_D(lowrank_hankel_adjoint(lift.U, lift.S, lift.V, shape), _weights(shape), inverse=True)


def unlift(lift, shape):
    """Signal estimate ``D^{-1} G*(Z)``."""
    if isinstance(lift, LowRankLift):
        gz = _unlifted(lift, shape)
    else:
        gz = apply_G_adjoint(lift, shape)
    return apply_D(gz, _weights(shape), inverse=True)


def lift_truth(truth_signals, shape):
    """Ground-truth lifts ``G D X = H X`` as dense arrays."""
    from .hankel_ops import hankel_lift
    return [hankel_lift(X, shape) for X in truth_signals]


def relative_error(estimates, truth_signals):
    """``sqrt(sum_k ||Xhat_k - X_k||^2 / sum_k ||X_k||^2)``."""
    estimates = np.asarray(estimates)
    truth_signals = np.asarray(truth_signals)
    return float(np.linalg.norm(estimates - truth_signals) / np.linalg.norm(truth_signals))


def _refresh(state, m):
    """Recompute ``G*(Z_k)`` and the shared residual."""
    shape = state.shape
    state.unlifted = np.stack([_unlifted(Z, shape) for Z in state.lifts])
    if state.Dy is None:
        state.Dy = apply_D(m.y, _weights(shape))
    state.e = measure(state.unlifted, m.B) - state.Dy
    return state


def state_from_lifts(lifts, m, t=0):
    return _refresh(IterateState(list(lifts), m.shape, t=t), m)


def initialize(m, cfg):
    """Spectral start ``Z_k = P_r(G(A_k*(D y)))``."""
    shape = m.shape
    if cfg.rank > min(shape.lifted_shape):
        raise ValueError(f"rank {cfg.rank} exceeds lifted dimensions {shape.lifted_shape}")
    Dy = apply_D(m.y, _weights(shape))
    lifts = [truncated_svd(apply_G(measure_adjoint_k(Dy, Bk), shape), cfg.rank) for Bk in m.B]
    state = IterateState(lifts, shape, Dy=Dy)
    return _refresh(state, m)


def residual(state, m):
    """``e = sum_k A_k G*(Z_k) - D y``; refreshes the cache if stale."""
    if not state.residual_valid:
        _refresh(state, m)
    return state.e


def riemannian_gradient_k(state, m, k):
    """Tangent vector ``P_T(G_k)`` at ``Z_k``."""
    if not state.residual_valid:
        raise RuntimeError("residual cache is stale; call residual() first")
    shape = state.shape
    Z = state.lifts[k]
    M = measure_adjoint_k(state.e, m.B[k]) - state.unlifted[k]
    Q = apply_D(M, _weights(shape), inverse=True)
    xi = tangent_project(fast_lift_products(Q, Z.U, Z.V, shape), Z)
    # Z itself lies in the tangent space: Z = U (V S)^H
    return TangentVector(Z, xi.A + Z.V * Z.S, xi.B)


def riemannian_gradients(state, m):
    return [riemannian_gradient_k(state, m, k) for k in range(len(state.lifts))]


def _tangent_unlifted(xi, shape):
    """``G*(U A^H + B V^H)``."""
    U, V = xi.base.U, xi.base.V
    L = np.hstack([U, xi.B])
    R = np.hstack([xi.A, V])
    return apply_D(lowrank_hankel_adjoint(L, np.ones(L.shape[1]), R, shape), _weights(shape), inverse=True)


def _tangent_sqnorm(xi):
    # U^H B = 0 for vectors built by tangent_project, so the two terms are orthogonal
    return float(np.linalg.norm(xi.A) ** 2 + np.linalg.norm(xi.B) ** 2)


def exact_line_search_alpha(state, m, grads, fallback=1.0):
    """Minimizer of the quadratic ``alpha -> f(Z - alpha * grads)``."""
    shape = state.shape
    num = 0.0
    hankel_defect = 0.0
    unl = []
    for g in grads:
        sq = _tangent_sqnorm(g)
        gu = _tangent_unlifted(g, shape)
        num += sq
        hankel_defect += max(sq - np.linalg.norm(gu) ** 2, 0.0)
        unl.append(gu)
    denom = np.linalg.norm(measure(np.stack(unl), m.B)) ** 2 + hankel_defect
    if denom <= 1e-30:
        return fallback
    return float(num / denom)


def objective(lifts, m, shape=None):
    """Objective value on factored or dense lifts.

    ``0.5 ||sum_k A_k G*(Z_k) - D y||^2 + 0.5 sum_k ||(I - G G*) Z_k||^2``.
    """
    shape = m.shape if shape is None else shape
    w = _weights(shape)
    unl, defect = [], 0.0
    for Z in lifts:
        if isinstance(Z, LowRankLift):
            gz = _unlifted(Z, shape)
            sq = Z.fro_norm ** 2
        else:
            gz = apply_G_adjoint(Z, shape)
            sq = np.linalg.norm(Z) ** 2
        unl.append(gz)
        defect += sq - np.linalg.norm(gz) ** 2
    e = measure(np.stack(unl), m.B) - apply_D(m.y, w)
    return 0.5 * float(np.linalg.norm(e) ** 2) + 0.5 * float(defect)


def rgd_step(state, m, cfg, trace=None):
    """One RGD iteration; returns the new state (input is not modified)."""
    residual(state, m)
    grads = riemannian_gradients(state, m)
    if cfg.step == "linesearch":
        alpha = exact_line_search_alpha(state, m, grads, fallback=cfg.alpha)
    else:
        alpha = cfg.alpha
    # xi = P_T(G_k) - Z_k, so W = (1 - alpha) Z - alpha xi
    lifts = []
    for Z, g in zip(state.lifts, grads):
        xi = TangentVector(Z, g.A - Z.V * Z.S, g.B)
        lifts.append(retract(xi, cfg.rank, scale=1.0 - alpha, step=-alpha))
    new = IterateState(lifts, state.shape, t=state.t + 1, Dy=state.Dy)
    _refresh(new, m)
    if not (np.all(np.isfinite(new.e)) and all(np.all(np.isfinite(Z.S)) for Z in lifts)):
        raise DivergenceError(f"non-finite iterate at t={new.t}", trace)
    new.alpha = alpha
    return new


def _distance_sq(lift, Zt_sq, X_true, shape):
    """``||Z - H(X)||_F^2`` via ``||Z||^2 + ||H X||^2 - 2 Re <Z, H X>``."""
    UhHX, _ = fast_lift_products(X_true, lift.U, lift.V, shape)
    cross = np.real(np.sum(lift.S * np.einsum("qj,jq->q", UhHX, lift.V)))
    return max(lift.fro_norm ** 2 + Zt_sq - 2 * cross, 0.0)


def solve(m, cfg, truth=None, init=None, callback=None):
    """Run RGD until convergence, divergence or ``cfg.max_iters``.

    Parameters
    ----------
    m : MeasurementSet
    cfg : SolverConfig
    truth : array of shape (K, s, n) or ChannelGroundTruth, optional
        When given, stops on relative signal error ``<= cfg.tol_truth``;
        otherwise on relative residual and relative iterate change both
        ``<= cfg.tol_residual``.
    init : IterateState, optional
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.

    Returns
    -------
    SolveResult
    """
    shape = m.shape
    X_true = None
    if truth is not None:
        X_true = np.asarray(truth.signals if hasattr(truth, "signals") else truth)
        w = _weights(shape)
        true_sq = [float(np.sum(w * np.sum(np.abs(X) ** 2, axis=0))) for X in X_true]
    state = initialize(m, cfg) if init is None else init
    residual(state, m)
    trace = IterationTrace()
    dy_norm = max(float(np.linalg.norm(state.Dy)), np.finfo(float).tiny)

    def estimates(st):
        return apply_D(st.unlifted, _weights(shape), inverse=True)

    def record(st, alpha, elapsed):
        res = float(np.linalg.norm(st.e)) / dy_norm
        row = dict(residual=res, alpha=alpha, time=elapsed,
                   rank_collapse=any(Z.collapsed() for Z in st.lifts))
        err = None
        if X_true is not None:
            err = relative_error(estimates(st), X_true)
            dist = sum(_distance_sq(Z, sq, X, shape) for Z, sq, X in zip(st.lifts, true_sq, X_true))
            row.update(rel_error=err, distance=float(dist))
        trace.append(**row)
        return res, err

    res, err = record(state, float("nan"), 0.0)
    status = "max_iters"
    prev = estimates(state)
    if (err is not None and err <= cfg.tol_truth) or (err is None and res == 0.0):
        status = "converged"
    while status == "max_iters" and state.t < cfg.max_iters:
        t0 = time.perf_counter()
        try:
            state = rgd_step(state, m, cfg, trace)
        except DivergenceError:
            status = "diverged"
            break
        elapsed = time.perf_counter() - t0
        res, err = record(state, state.alpha, elapsed)
        if trace.rank_collapse[-1]:
            logger.debug("rank collapse at iteration %d", state.t)
        if callback is not None:
            callback(state)
        if res > DIVERGENCE_RATIO:
            status = "diverged"
            break
        if X_true is not None:
            if err <= cfg.tol_truth:
                status = "converged"
        else:
            cur = estimates(state)
            change = np.linalg.norm(cur - prev) / max(np.linalg.norm(cur), np.finfo(float).tiny)
            prev = cur
            if res <= cfg.tol_residual and change <= cfg.tol_residual:
                status = "converged"
    return SolveResult(state.lifts, estimates(state), trace, status, state.t)
