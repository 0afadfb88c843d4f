"""scikit-learn style front ends.

``RGDDemixer`` separates superposed measurements into per-user signal
matrices; ``ChannelEstimator`` turns signal matrices into delays and gains.

>>> from jbsd.sensing import simulate_instance
>>> m, truth = simulate_instance(n=160, s=2, K=2, r=2, seed=1)
>>> demix = RGDDemixer(rank=2).fit(m.B, m.y)
>>> chan = ChannelEstimator(rank=2).fit(demix.signals_)
>>> chan.delays_.shape
(2, 2)
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .hankel_ops import LiftShape, hankel_lift
from .manifold import truncated_svd
from .recovery import DEFAULT_GRID_FACTOR, estimate_delays, music_spectrum, recover_gains
from .sensing import measure
from .solver import SolverConfig, solve
from .validation import check_codebooks, check_measurements, check_rank, check_signals

__all__ = ["RGDDemixer", "ChannelEstimator"]


class RGDDemixer(BaseEstimator):
    """Riemannian gradient descent demixer.

    Parameters
    ----------
    rank : int
        Number of paths per user (rank of each lifted matrix).
    n1 : int, optional
        Block rows of the lift; ``ceil((n + 1) / 2)`` when omitted.
    step : {"fixed", "linesearch"}
    alpha : float
        Fixed step size, also the fallback for the line search.
    max_iter : int
    tol : float
        Stopping tolerance on the relative residual and iterate change, or on
        the relative error when ``truth`` is passed to :meth:`fit`.

    Attributes
    ----------
    signals_ : ndarray, shape (K, s, n)
    lifts_ : list of LowRankLift
    n_iter_ : int
    status_ : str
    trace_ : IterationTrace
    """

    def __init__(self, rank=2, n1=None, step="fixed", alpha=1.0, max_iter=2000, tol=1e-4):
        self.rank = rank
        self.n1 = n1
        self.step = step
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, B, y, truth=None):
        """Recover the signals from codebooks ``B`` (K, n, s) and measurements ``y`` (n,)."""
        m = check_measurements(B, y, self.n1)
        rank = check_rank(self.rank, m.shape)
        cfg = SolverConfig(rank=rank, step=self.step, alpha=self.alpha, max_iters=self.max_iter,
                           tol_residual=self.tol, tol_truth=self.tol)
        if truth is not None:
            truth = check_signals(getattr(truth, "signals", truth))
        result = solve(m, cfg, truth=truth)
        self.shape_ = m.shape
        self.codebooks_ = m.B
        self.signals_ = result.signals
        self.lifts_ = result.lifts
        self.n_iter_ = result.n_iter
        self.status_ = result.status
        self.trace_ = result.trace
        return self

    def predict(self, B=None):
        """Measurements synthesized from the recovered signals."""
        check_is_fitted(self, "signals_")
        B = self.codebooks_ if B is None else check_codebooks(B)
        return measure(self.signals_, B)

    def score(self, B, y):
        """Negative relative measurement misfit (higher is better)."""
        y = np.asarray(y)
        return -float(np.linalg.norm(self.predict(B) - y) / np.linalg.norm(y))


class ChannelEstimator(TransformerMixin, BaseEstimator):
    """Delay and gain extraction from signal matrices.

    Parameters
    ----------
    rank : int
        Paths per user.
    n1 : int, optional
        Block rows of the lift used for MUSIC.
    grid_factor : int
        MUSIC grid has ``grid_factor * n`` points.

    Attributes
    ----------
    delays_ : ndarray, shape (K, rank)
    amplitudes_ : ndarray, shape (K, rank)
    coefficients_ : ndarray, shape (K, s)
    residuals_ : ndarray, shape (K,)
    """

    def __init__(self, rank=2, n1=None, grid_factor=DEFAULT_GRID_FACTOR):
        self.rank = rank
        self.n1 = n1
        self.grid_factor = grid_factor

    def _estimate(self, X):
        K, s, n = X.shape
        shape = LiftShape(n=n, s=s, n1=self.n1)
        rank = check_rank(self.rank, shape)
        out = []
        for Xk in X:
            lift = truncated_svd(hankel_lift(Xk, shape), rank)
            spec = music_spectrum(lift, self.grid_factor * n, s=s)
            out.append(recover_gains(Xk, estimate_delays(spec, rank)))
        return out

    def fit(self, X, y=None):
        """Estimate parameters of every user in ``X`` (K, s, n)."""
        X = check_signals(X)
        channels = self._estimate(X)
        self.channels_ = channels
        self.delays_ = np.stack([c.taus for c in channels])
        self.amplitudes_ = np.stack([c.amps for c in channels])
        self.coefficients_ = np.stack([c.h for c in channels])
        self.residuals_ = np.array([c.residual for c in channels])
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        """Delays per user, shape ``(K, rank)``."""
        check_is_fitted(self, "delays_")
        return np.stack([c.taus for c in self._estimate(check_signals(X))])

    def reconstruct(self):
        """Signals rebuilt from the fitted parameters."""
        check_is_fitted(self, "channels_")
        return np.stack([c.reconstruct(self.n_features_in_) for c in self.channels_])
