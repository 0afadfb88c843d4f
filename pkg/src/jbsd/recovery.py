"""Channel parameters from recovered lifts, plus incoherence diagnostics.

Delays come from a block (multiple-measurement) MUSIC pseudospectrum on the
column space of the lift: for a lift of ``X = sum_p d_p h a_p^T`` the left
singular space is spanned by ``a_{n1}(tau_p) kron h``, so ``tau_p`` is where
the subspace ``{a_{n1}(tau) kron v}`` touches it.  Gains follow from a
least-squares fit on the estimated steering vectors and a rank-one split.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft
from scipy.optimize import minimize_scalar

from .hankel_ops import LiftShape, apply_G, apply_G_adjoint
from .manifold import LowRankLift, tangent_project_dense, truncated_svd
from .sensing import measure, measure_adjoint_k, steering_matrix, wrap_distance

__all__ = [
    "Pseudospectrum",
    "RecoveredChannel",
    "RecoveryError",
    "IncoherenceDiagnostics",
    "music_spectrum",
    "estimate_delays",
    "recover_gains",
    "recover_channel",
    "incoherence_mu0",
    "incoherence_mu1",
    "estimate_trip",
    "match_delays",
]

DEFAULT_GRID_FACTOR = 16
ILL_CONDITIONED = 1e8


class RecoveryError(RuntimeError):
    """Raised when fewer peaks than requested paths are found."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class Pseudospectrum:
    grid: np.ndarray
    values: np.ndarray
    # left factor and lift layout, kept for off-grid refinement
    U: np.ndarray | None = field(default=None, repr=False)
    s: int = 1

    @property
    def n1(self):
        return self.U.shape[0] // self.s

    def denominator(self, tau):
        """``sigma_min^2`` of the noise-subspace projection at off-grid ``tau``."""
        return _music_denominator(self.U, self.s, np.atleast_1d(tau))


@dataclass
class RecoveredChannel:
    """Per-user estimates; ``h`` has unit norm and a real positive leading entry."""

    taus: np.ndarray
    amps: np.ndarray
    h: np.ndarray
    residual: float
    ls_residual: float = 0.0
    conditioning: float = 1.0
    warnings: list = field(default_factory=list)

    def reconstruct(self, n):
        return np.outer(self.h, steering_matrix(self.taus, n) @ self.amps)


def _left_factor(Z, r=None):
    if isinstance(Z, LowRankLift):
        return Z.U if r is None else Z.U[:, :r]
    Z = np.asarray(Z)
    if r is None:
        raise ValueError("rank is required for a dense lift")
    return truncated_svd(Z, r).U


def _music_denominator(U, s, taus):
    # residual of (a kron I_s) off the signal subspace, formed explicitly: the
    # shortcut n1 - lambda_max loses everything below eps * n1 to cancellation
    n1 = U.shape[0] // s
    out = np.empty(len(taus))
    eye = np.eye(s)
    for i, tau in enumerate(taus):
        A = np.kron(np.exp(-2j * np.pi * tau * np.arange(n1))[:, None], eye)
        R = A - U @ (U.conj().T @ A)
        out[i] = np.linalg.svd(R, compute_uv=False)[-1] ** 2
    return np.maximum(out, n1 * np.finfo(float).eps ** 2)


def music_spectrum(Z, grid_size=None, s=1, r=None):
    """Pseudospectrum ``J(tau) = 1 / sigma_min^2(W^H (a_{n1}(tau) kron I_s))``.

    ``W`` spans the orthogonal complement of the left singular space; the
    identity ``sigma_min^2 = n1 - lambda_max(M^H M)`` with ``M = U^H (a kron I_s)``
    avoids forming ``W``.  On the uniform grid ``M`` is an FFT of the blocks of ``U``.

    Parameters
    ----------
    Z : LowRankLift or ndarray
    grid_size : int, optional
        Number of grid points on ``[0, 1)``; defaults to ``16 n``.
    s : int
        Block size (rows per block of the lift).
    r : int, optional
        Model order; required when ``Z`` is dense.
    """
    U = _left_factor(Z, r)
    rows, r = U.shape
    if rows % s:
        raise ValueError(f"lift has {rows} rows, not a multiple of s={s}")
    n1 = rows // s
    if r >= rows:
        raise ValueError(f"rank {r} leaves no noise subspace in dimension {rows}")
    n = n1 + Z.shape[1] - 1
    grid_size = DEFAULT_GRID_FACTOR * n if grid_size is None else int(grid_size)
    if grid_size < max(4 * n, n1):
        raise ValueError(f"grid_size must be >= 4n = {4 * n}, got {grid_size}")
    U3 = U.reshape(n1, s, r)
    # sum_j conj(U[j, p, q]) e^{-2 pi i j m / N}
    M = sp_fft.fft(U3.conj(), grid_size, axis=0)  # (N, s, r)
    gram = np.einsum("mpq,mcq->mpc", M.conj(), M)
    lam = np.linalg.eigvalsh(gram)[:, -1]
    denom = np.maximum(n1 - lam, n1 * np.finfo(float).eps ** 2)
    return Pseudospectrum(np.arange(grid_size) / grid_size, 1.0 / denom, U=U, s=s)


def _local_maxima(values):
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    return np.flatnonzero((values > left) & (values >= right))


def estimate_delays(spec, r, polish=True):
    """Pick the ``r`` largest local maxima and refine them off-grid.

    Each grid peak is refined by a parabola through ``log J`` at the three
    neighbouring grid points; when the spectrum carries its left factor, the
    estimate is then polished by a bounded scalar minimization of the MUSIC
    denominator within one grid cell.  Ties in peak height go to the smaller
    delay.  Returns delays sorted ascending.
    """
    if r == 0:
        return np.empty(0)
    values = np.asarray(spec.values, dtype=float)
    N = values.shape[0]
    h = 1.0 / N
    peaks = _local_maxima(values)
    order = sorted(peaks, key=lambda i: (-values[i], spec.grid[i]))
    chosen = order[:r]
    logv = np.log(values)
    taus = []
    for i in chosen:
        lm, l0, lp = logv[(i - 1) % N], logv[i], logv[(i + 1) % N]
        curv = lm - 2 * l0 + lp
        offset = 0.5 * (lm - lp) / curv if curv < 0 else 0.0
        tau = spec.grid[i] + np.clip(offset, -0.5, 0.5) * h
        if polish and spec.U is not None:
            center = spec.grid[i]
            # search over the offset: the bounded method's tolerance scales with |x|
            res = minimize_scalar(
                lambda d: float(spec.denominator((center + d) % 1.0)[0]),
                bounds=(-h, h),
                method="bounded",
                options={"xatol": 1e-14},
            )
            if res.fun <= spec.denominator(tau % 1.0)[0]:
                tau = center + res.x
        taus.append(tau % 1.0)
    taus = np.sort(np.asarray(taus))
    if len(chosen) < r:
        raise RecoveryError(f"found {len(chosen)} peaks, need {r}", partial=taus)
    return taus


def _phase_normalize(h):
    nz = np.flatnonzero(np.abs(h) > 0)
    if nz.size == 0:
        return h, 1.0
    c = np.conj(h[nz[0]]) / np.abs(h[nz[0]])
    out = h * c
    out[nz[0]] = abs(h[nz[0]])  # exactly real, not just to roundoff
    return out, c


def recover_gains(X_hat, taus):
    """Least-squares path vectors ``g_p`` then a rank-one split ``g_p = d_p h``.

    Parameters
    ----------
    X_hat : ndarray, shape (s, n)
    taus : array_like, shape (r,)

    Returns
    -------
    RecoveredChannel
    """
    X_hat = np.asarray(X_hat, dtype=complex)
    taus = np.asarray(taus, dtype=float)
    s, n = X_hat.shape
    notes = []
    A = steering_matrix(taus, n)
    cond = float(np.linalg.cond(A)) if taus.size else 1.0
    if cond > ILL_CONDITIONED:
        msg = f"steering matrix is ill-conditioned (cond={cond:.3g})"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    G = np.linalg.lstsq(A, X_hat.T, rcond=None)[0].T  # (s, r)
    norm = np.linalg.norm(X_hat)
    ls_res = float(np.linalg.norm(X_hat - G @ A.T) / norm) if norm > 0 else 0.0
    if not np.any(G):
        return RecoveredChannel(taus, np.zeros(taus.size, dtype=complex),
                                np.eye(s, 1).ravel().astype(complex), 0.0, ls_res, cond, notes)
    u, sig, vh = np.linalg.svd(G, full_matrices=False)
    h, c = _phase_normalize(u[:, 0])
    amps = sig[0] * np.conj(c) * vh[0]
    rec = np.outer(h, A @ amps)
    res = float(np.linalg.norm(X_hat - rec) / norm) if norm > 0 else 0.0
    return RecoveredChannel(taus, amps, h, res, ls_res, cond, notes)


def recover_channel(lift, shape, r, grid_size=None, X_hat=None):
    """Delays and gains for one user from its recovered lift."""
    from .solver import unlift
    spec = music_spectrum(lift, grid_size, s=shape.s, r=r)
    taus = estimate_delays(spec, r)
    if X_hat is None:
        X_hat = unlift(lift, shape)
    return recover_gains(X_hat, taus)


def match_delays(estimated, true):
    """Wrap distance from each true delay to its closest estimate."""
    estimated = np.asarray(estimated, dtype=float)
    return np.array([wrap_distance(estimated, t).min() for t in np.asarray(true, dtype=float)])


# -- incoherence and restricted isometry diagnostics --------------------------

@dataclass
class IncoherenceDiagnostics:
    mu0: float
    mu1: float
    trip_estimate: float | None = None


def incoherence_mu0(B):
    """Smallest ``mu0`` with ``max_p |b[p]| <= sqrt(mu0)`` over all codebook rows."""
    return float(np.max(np.abs(np.asarray(B)) ** 2))


def incoherence_mu1(lifts, shape, r=None):
    """Smallest ``mu1`` with block-row and row norms of the singular factors ``<= mu1 r / n``.

    ``lifts`` is one lift or a list (factored or dense); the maximum over users
    is returned.
    """
    if isinstance(lifts, LowRankLift) or (isinstance(lifts, np.ndarray) and lifts.ndim == 2):
        lifts = [lifts]
    worst = 0.0
    for Z in lifts:
        if not isinstance(Z, LowRankLift):
            Z = truncated_svd(Z, r)
        rank = Z.rank
        U3 = Z.U.reshape(shape.n1, shape.s, rank)
        block = np.sum(np.abs(U3) ** 2, axis=(1, 2)).max()
        row = np.sum(np.abs(Z.V) ** 2, axis=1).max()
        worst = max(worst, shape.n * max(block, row) / rank)
    return float(worst)


def _sensing_gram(B):
    """``A* A`` on a stack of signals: user ``k`` gets ``A_k*(sum_l A_l X_l)``."""
    def gram(Xs):
        y = measure(Xs, B)
        return np.stack([measure_adjoint_k(y, Bk) for Bk in B])
    return gram


def estimate_trip(B, bases, shape, r=None, power_iters=200, rtol=1e-6, rng=None, gram=None,
                  max_size=1 << 16):
    """Power-iteration estimate of ``||P_T G (A*A - I) G* P_T||``.

    Parameters
    ----------
    B : ndarray, shape (K, n, s)
        Codebooks defining ``A``.
    bases : list of LowRankLift or dense lifts
        Tangent-space base points, one per user.
    shape : LiftShape
    r : int, optional
        Rank of the tangent spaces; needed only for dense bases.
    power_iters : int
    gram : callable, optional
        Replacement for ``A* A`` acting on a ``(K, s, n)`` stack; used to inject
        an exact isometry in tests.

    Returns
    -------
    float
        Last estimate; a ``RuntimeWarning`` is issued if the iteration did not
        settle to ``rtol``.
    """
    if shape.s * shape.n1 * shape.n2 > max_size:
        raise ValueError("instance too large for the dense diagnostic")
    rng = np.random.default_rng(0) if rng is None else rng
    gram = _sensing_gram(B) if gram is None else gram
    bases = [Z if isinstance(Z, LowRankLift) else truncated_svd(Z, r) for Z in bases]

    def op(Ys):
        Ys = [tangent_project_dense(Y, Z) for Y, Z in zip(Ys, bases)]
        Xs = np.stack([apply_G_adjoint(Y, shape) for Y in Ys])
        Xs = gram(Xs) - Xs
        return [tangent_project_dense(apply_G(X, shape), Z) for X, Z in zip(Xs, bases)]

    m, n2 = shape.lifted_shape
    Ys = [tangent_project_dense(rng.standard_normal((m, n2)) + 1j * rng.standard_normal((m, n2)), Z)
          for Z in bases]
    est, prev = 0.0, np.inf
    for _ in range(power_iters):
        nrm = np.sqrt(sum(np.linalg.norm(Y) ** 2 for Y in Ys))
        if nrm == 0:
            return 0.0
        Ys = [Y / nrm for Y in Ys]
        Ys = op(Ys)
        est = float(np.sqrt(sum(np.linalg.norm(Y) ** 2 for Y in Ys)))
        if abs(est - prev) <= rtol * max(est, np.finfo(float).tiny):
            return est
        prev = est
    warnings.warn(f"power iteration did not settle in {power_iters} steps", RuntimeWarning,
                  stacklevel=2)
    return est
