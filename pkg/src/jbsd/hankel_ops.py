"""Vectorized Hankel lift and its weighted, normalized variants.

A signal matrix ``X`` has shape ``(s, n)``; column ``x_j`` is a length-``s``
vector.  Its lift ``H(X)`` has shape ``(s * n1, n2)`` with ``n1 + n2 = n + 1``
and block ``(j, l)`` (rows ``j*s:(j+1)*s``, column ``l``) equal to ``x_{j+l}``.

``D`` scales column ``i`` by ``sqrt(w_i)`` where ``w_i`` counts the blocks on
anti-diagonal ``i``; ``G = H D^{-1}`` is then an isometry onto the Hankel
subspace, so ``G* G = I``.

Factor matrices with ``s * n1`` rows are handled in a ``(n1, s, r)`` block view
so that every product with a lifted matrix reduces to batched 1-D
correlations, evaluated by FFT in ``O(s r n log n)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

__all__ = [
    "LiftShape",
    "weight_vector",
    "hankel_lift",
    "hankel_adjoint",
    "apply_D",
    "apply_G",
    "apply_G_adjoint",
    "project_hankel",
    "fast_lift_products",
    "lowrank_hankel_adjoint",
]


@dataclass(frozen=True)
class LiftShape:
    """Dimensions of a vectorized Hankel lift.

    Parameters
    ----------
    n : int
        Number of samples (columns of the signal matrix).
    s : int
        Subspace dimension (rows of the signal matrix).
    n1 : int, optional
        Number of block rows.  Defaults to ``ceil((n + 1) / 2)``.
    """

    n: int
    s: int = 1
    n1: int | None = None

    def __post_init__(self):
        if int(self.n) < 1 or int(self.s) < 1:
            raise ValueError(f"n and s must be >= 1, got n={self.n}, s={self.s}")
        n1 = -(-(self.n + 1) // 2) if self.n1 is None else int(self.n1)
        if not 1 <= n1 <= self.n:
            raise ValueError(f"n1 must lie in [1, {self.n}], got {n1}")
        object.__setattr__(self, "n1", n1)

    @property
    def n2(self) -> int:
        return self.n + 1 - self.n1

    @property
    def lifted_shape(self) -> tuple[int, int]:
        return (self.s * self.n1, self.n2)

    @property
    def signal_shape(self) -> tuple[int, int]:
        return (self.s, self.n)

    @property
    def fft_len(self) -> int:
        # power of two >= n is enough: all correlations needed have lag < n
        return 1 << (self.n - 1).bit_length()

    @property
    def weights(self) -> np.ndarray:
        return weight_vector(self.n, self.n1)


def weight_vector(n, n1):
    """Anti-diagonal multiplicities ``w_i = #{(j, l): j + l = i}``.

    >>> weight_vector(5, 3).tolist()
    [1, 2, 3, 2, 1]
    """
    n, n1 = int(n), int(n1)
    if n < 1 or not 1 <= n1 <= n:
        raise ValueError(f"need 1 <= n1 <= n, got n={n}, n1={n1}")
    n2 = n + 1 - n1
    i = np.arange(n)
    return np.minimum.reduce([i + 1, np.full(n, n1), np.full(n, n2), n - i])


def _check(arr, shape, what):
    arr = np.asarray(arr)
    if arr.shape != shape:
        raise ValueError(f"{what} has shape {arr.shape}, expected {shape}")
    return arr


def _hankel_index(shape):
    return np.arange(shape.n1)[:, None] + np.arange(shape.n2)[None, :]


def hankel_lift(X, shape):
    """Form the dense lift ``H(X)`` of shape ``(s*n1, n2)``."""
    X = _check(X, shape.signal_shape, "X")
    blocks = X[:, _hankel_index(shape)]  # (s, n1, n2)
    return blocks.transpose(1, 0, 2).reshape(shape.lifted_shape)


def hankel_adjoint(Z, shape):
    """Adjoint ``H*(Z)``: column ``i`` is the sum of blocks on anti-diagonal ``i``."""
    Z = _check(Z, shape.lifted_shape, "Z")
    blocks = Z.reshape(shape.n1, shape.s, shape.n2)
    out = np.zeros(shape.signal_shape, dtype=np.result_type(Z.dtype, float))
    # n2 strided adds beat the bincount route for the sizes used here
    for l in range(shape.n2):
        out[:, l:l + shape.n1] += blocks[:, :, l].T
    return out


def apply_D(X, w, inverse=False):
    """Scale column ``i`` of ``X`` by ``sqrt(w_i)`` (or its reciprocal)."""
    X = np.asarray(X)
    w = np.asarray(w, dtype=float)
    if X.shape[-1] != w.shape[0]:
        raise ValueError(f"X has {X.shape[-1]} columns but w has length {w.shape[0]}")
    scale = np.sqrt(w)
    return X / scale if inverse else X * scale


def apply_G(X, shape):
    """``G(X) = H(D^{-1} X)``."""
    X = _check(X, shape.signal_shape, "X")
    return hankel_lift(apply_D(X, shape.weights, inverse=True), shape)


def apply_G_adjoint(Z, shape):
    """``G*(Z) = D^{-1} H*(Z)``."""
    return apply_D(hankel_adjoint(Z, shape), shape.weights, inverse=True)


def project_hankel(Z, shape):
    """Orthogonal projection ``G G*`` onto the block-Hankel subspace."""
    return apply_G(apply_G_adjoint(Z, shape), shape)


def _blocks(U, shape):
    """View an ``(s*n1, r)`` factor as ``(s, n1, r)``."""
    r = U.shape[1]
    return U.reshape(shape.n1, shape.s, r).transpose(1, 0, 2)


def fast_lift_products(Y, U, V, shape):
    """Compute ``U^H H(Y)`` and ``H(Y) V`` without forming ``H(Y)``.

    Parameters
    ----------
    Y : ndarray, shape (s, n)
    U : ndarray, shape (s*n1, r)
    V : ndarray, shape (n2, r)
    shape : LiftShape

    Returns
    -------
    UhHY : ndarray, shape (r, n2)
    HYV : ndarray, shape (s*n1, r)
    """
    Y = _check(Y, shape.signal_shape, "Y")
    U = np.asarray(U)
    V = np.asarray(V)
    if U.ndim != 2 or U.shape[0] != shape.s * shape.n1:
        raise ValueError(f"U has shape {U.shape}, expected ({shape.s * shape.n1}, r)")
    if V.ndim != 2 or V.shape[0] != shape.n2:
        raise ValueError(f"V has shape {V.shape}, expected ({shape.n2}, r)")
    if U.shape[1] != V.shape[1]:
        raise ValueError("U and V must have the same number of columns")
    L = shape.fft_len
    n1, n2 = shape.n1, shape.n2
    Yf = sp_fft.fft(Y, L, axis=1)  # (s, L)
    # (U^H H(Y))[q, l] = sum_{p, j} conj(U[p, j, q]) Y[p, j + l]
    Uf = sp_fft.fft(_blocks(U, shape), L, axis=1)  # (s, L, r)
    prod = np.einsum("pfq,pf->qf", Uf.conj(), Yf)
    UhHY = sp_fft.ifft(prod, axis=1)[:, :n2]
    # (H(Y) V)[p, j, q] = sum_l Y[p, j + l] V[l, q]
    Vf = sp_fft.fft(V.conj(), L, axis=0)  # (L, r)
    prod = Yf[:, :, None] * Vf.conj()[None, :, :]
    HYV = sp_fft.ifft(prod, axis=1)[:, :n1, :]  # (s, n1, r)
    HYV = HYV.transpose(1, 0, 2).reshape(shape.s * n1, -1)
    return UhHY, HYV


def lowrank_hankel_adjoint(U, S, V, shape):
    """``H*(U diag(S) V^H)`` by FFT convolution, never forming the product."""
    L = shape.fft_len
    Uf = sp_fft.fft(_blocks(np.asarray(U) * np.asarray(S)[None, :], shape), L, axis=1)
    Vf = sp_fft.fft(np.asarray(V).conj(), L, axis=0)
    out = sp_fft.ifft(np.einsum("pfq,fq->pf", Uf, Vf), axis=1)
    return out[:, :shape.n]
