"""Fixed-rank manifold primitives on factored ``U diag(S) V^H`` points."""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LowRankLift",
    "TangentVector",
    "truncated_svd",
    "tangent_project",
    "tangent_project_dense",
    "retract",
    "retract_dense",
    "lowrank_norms_and_gaps",
    "condition_number",
]

RANK_COLLAPSE_RTOL = 1e-14


@dataclass
class LowRankLift:
    """Compact SVD ``U diag(S) V^H`` of a rank-``r`` lifted matrix."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.S.shape[0]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def to_dense(self):
        return (self.U * self.S) @ self.V.conj().T

    @property
    def fro_norm(self):
        return float(np.linalg.norm(self.S))

    def collapsed(self, rtol=RANK_COLLAPSE_RTOL):
        """True when the smallest kept singular value is numerically zero."""
        return self.rank > 0 and self.S[-1] <= rtol * max(self.S[0], np.finfo(float).tiny)

    @classmethod
    def from_dense(cls, Z, r):
        return truncated_svd(Z, r)


@dataclass
class TangentVector:
    """Tangent vector ``U A^H + B V^H`` at ``base``."""

    base: LowRankLift
    A: np.ndarray
    B: np.ndarray

    def to_dense(self):
        return self.base.U @ self.A.conj().T + self.B @ self.base.V.conj().T

    def inner(self, other):
        """Real inner product with a dense matrix or another tangent vector."""
        if isinstance(other, TangentVector):
            other = other.to_dense()
        # <U A^H + B V^H, W> = <A, W^H U> + <B, W V>
        U, V = self.base.U, self.base.V
        return float(np.real(np.vdot(self.A, other.conj().T @ U) + np.vdot(self.B, other @ V)))

    def norm(self):
        return float(np.linalg.norm(self.to_dense()))


def truncated_svd(Z, r):
    Z = np.asarray(Z)
    if not 0 <= r <= min(Z.shape):
        raise ValueError(f"rank {r} exceeds matrix dimensions {Z.shape}")
    U, S, Vh = np.linalg.svd(Z, full_matrices=False)
    return LowRankLift(U[:, :r], S[:r], Vh[:r].conj().T)


def tangent_project(Y, base):
    """Project ``Y`` onto the tangent space at ``base``.

    ``Y`` is either a dense array or a pair ``(U^H Y, Y V)`` of precomputed
    products, which is all the projection needs.  The returned representation
    satisfies ``U^H B = 0`` so that ``U A^H`` carries the ``U U^H Y V V^H`` term.
    """
    U, V = base.U, base.V
    if isinstance(Y, tuple):
        UhY, YV = Y
    else:
        Y = np.asarray(Y)
        if Y.shape != base.shape:
            raise ValueError(f"Y has shape {Y.shape}, expected {base.shape}")
        UhY, YV = U.conj().T @ Y, Y @ V
    C = UhY @ V
    A = UhY.conj().T
    B = YV - U @ C
    return TangentVector(base, A, B)


def tangent_project_dense(Y, base):
    """Literal ``UU^H Y + Y VV^H - UU^H Y VV^H``; reference path for tests."""
    PU = base.U @ base.U.conj().T
    PV = base.V @ base.V.conj().T
    return PU @ Y + Y @ PV - PU @ Y @ PV


def _complement_qr(Q0, M):
    """Orthonormal ``Q`` with ``Q0^H Q = 0`` and ``M = Q R``, for ``M`` already orthogonal to ``Q0``.

    Factoring ``[Q0, M]`` jointly keeps ``Q`` orthogonal to ``Q0`` even when ``M``
    is (numerically) zero.
    """
    k = Q0.shape[1]
    Q, R = np.linalg.qr(np.hstack([Q0, M]))
    return Q[:, k:], R[k:, k:]


def retract(xi, r=None, scale=1.0, step=1.0):
    """Best rank-``r`` approximation of ``scale * base + step * xi``.

    Works on the ``2r x 2r`` core: with ``xi = U A^H + B V^H``, split
    ``A = V C^H + A_perp`` and ``B = U E + B_perp``, QR-factor the perpendicular
    parts, and SVD the small core.  Cost ``O(r^2 (m + n) + r^3)``.
    """
    base = xi.base
    r = base.rank if r is None else r
    U, S, V = base.U, base.S, base.V
    m, n = base.shape
    if not 0 <= r <= min(m, n):
        raise ValueError(f"rank {r} exceeds matrix dimensions {(m, n)}")
    A, B = xi.A, xi.B
    VhA = V.conj().T @ A  # (r, r) = C^H
    UhB = U.conj().T @ B
    A_perp = A - V @ VhA
    B_perp = B - U @ UhB
    Q1, R1 = _complement_qr(U, B_perp)
    Q2, R2 = _complement_qr(V, A_perp)
    k = S.shape[0]
    core = np.zeros((Q1.shape[1] + k, Q2.shape[1] + k), dtype=np.result_type(A, B, U, complex))
    core[:k, :k] = scale * np.diag(S) + step * (VhA.conj().T + UhB)
    core[:k, k:] = step * R2.conj().T
    core[k:, :k] = step * R1
    Uc, Sc, Vch = np.linalg.svd(core)
    r = min(r, Sc.shape[0])
    Unew = np.hstack([U, Q1]) @ Uc[:, :r]
    Vnew = np.hstack([V, Q2]) @ Vch[:r].conj().T
    return LowRankLift(Unew, Sc[:r], Vnew)


def retract_dense(W, r):
    """Dense truncated-SVD retraction; reference path for tests."""
    return truncated_svd(W, r)


def lowrank_norms_and_gaps(Z):
    """Singular-value summary of one lift."""
    S = np.asarray(Z.S if isinstance(Z, LowRankLift) else Z, dtype=float)
    return {
        "sigma_1": float(S[0]),
        "sigma_r": float(S[-1]),
        "singular_values": S.tolist(),
        "condition": float(S[0] / S[-1]) if S[-1] > 0 else np.inf,
    }


def condition_number(lifts):
    """``max_k sigma_1(Z_k) / min_k sigma_r(Z_k)`` over a list of lifts."""
    summaries = [lowrank_norms_and_gaps(Z) for Z in lifts]
    top = max(d["sigma_1"] for d in summaries)
    bottom = min(d["sigma_r"] for d in summaries)
    return top / bottom if bottom > 0 else np.inf
