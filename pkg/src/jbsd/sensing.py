"""Synthetic channels, subspace codebooks and the measurement operators.

User ``k`` contributes ``X_k = sum_p d_{k,p} h_k a_{tau_{k,p}}^T`` (shape
``(s, n)``) and the receiver observes ``y[j] = sum_k b_{k,j}^H X_k[:, j]``,
where ``b_{k,j}^H`` is row ``j`` of the codebook ``B_k`` (shape ``(n, s)``).
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .hankel_ops import LiftShape

__all__ = [
    "PathParam",
    "UserChannel",
    "ChannelGroundTruth",
    "MeasurementSet",
    "steering_vector",
    "steering_matrix",
    "build_data_matrix",
    "wrap_distance",
    "min_separation",
    "sample_delays",
    "sample_channel",
    "sample_subspace",
    "sample_amplitudes",
    "sample_coefficients",
    "measure_k",
    "measure",
    "measure_adjoint_k",
    "simulate_instance",
    "dump_instance",
    "load_instance",
    "encode_complex",
    "decode_complex",
]

MAX_REJECTION_ATTEMPTS = 100_000


@dataclass(frozen=True)
class PathParam:
    tau: float
    d: complex

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"delay must lie in [0, 1), got {self.tau}")
        if self.d == 0:
            raise ValueError("path amplitude must be nonzero")


@dataclass
class UserChannel:
    """One user's paths, waveform coefficients and data matrix."""

    taus: np.ndarray
    amps: np.ndarray
    h: np.ndarray
    n: int

    @property
    def X(self):
        return build_data_matrix(self.taus, self.amps, self.h, self.n)

    @property
    def paths(self):
        return [PathParam(float(t), complex(d)) for t, d in zip(self.taus, self.amps)]


@dataclass
class ChannelGroundTruth:
    users: list[UserChannel]

    @property
    def K(self):
        return len(self.users)

    @property
    def signals(self):
        """Stacked data matrices, shape ``(K, s, n)``."""
        return np.stack([u.X for u in self.users])


@dataclass
class MeasurementSet:
    """Observed vector plus the known codebooks.

    ``B`` has shape ``(K, n, s)``; row ``j`` of ``B[k]`` is ``b_{k,j}^H``.
    """

    y: np.ndarray
    B: np.ndarray
    shape: LiftShape
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        self.B = np.asarray(self.B)
        if self.B.ndim == 2:
            self.B = self.B[None]
        K, n, s = self.B.shape
        if self.y.shape != (n,):
            raise ValueError(f"y has shape {self.y.shape}, expected ({n},)")
        if (n, s) != (self.shape.n, self.shape.s):
            raise ValueError(
                f"codebooks are {n}x{s} but lift shape is n={self.shape.n}, s={self.shape.s}")

    @property
    def K(self):
        return self.B.shape[0]


def steering_vector(tau, n):
    """``a_tau[j] = exp(-2 pi i tau j)`` for ``j = 0..n-1``."""
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"delay must lie in [0, 1), got {tau}")
    return np.exp(-2j * np.pi * tau * np.arange(n))


def steering_matrix(taus, n):
    """Columns are steering vectors, shape ``(n, len(taus))``."""
    taus = np.asarray(taus, dtype=float)
    return np.exp(-2j * np.pi * np.outer(np.arange(n), taus))


def build_data_matrix(taus, amps, h, n):
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    amps = np.atleast_1d(np.asarray(amps, dtype=complex))
    h = np.asarray(h, dtype=complex)
    if taus.size == 0:
        raise ValueError("at least one path is required")
    if taus.shape != amps.shape:
        raise ValueError("taus and amps must have the same length")
    if np.linalg.norm(h) == 0:
        raise ValueError("coefficient vector h must be nonzero")
    if np.any((taus < 0) | (taus >= 1)):
        raise ValueError("delays must lie in [0, 1)")
    signal = steering_matrix(taus, n) @ amps  # (n,)
    return np.outer(h, signal)


def wrap_distance(a, b):
    """Distance on the unit torus."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    return np.minimum(d, 1.0 - d)


def min_separation(taus):
    taus = np.sort(np.asarray(taus, dtype=float))
    if taus.size < 2:
        return np.inf
    gaps = np.diff(np.append(taus, taus[0] + 1.0))
    return float(gaps.min())


def sample_delays(r, n, rng, separated=True):
    """Uniform delays on ``[0, 1)``; rejection-sampled to a wrap gap of ``1/n``."""
    if separated and r > n:
        raise ValueError(f"cannot separate {r} delays by 1/{n}")
    for _ in range(MAX_REJECTION_ATTEMPTS):
        taus = rng.uniform(0.0, 1.0, size=r)
        sep = min_separation(taus)
        if separated and sep < 1.0 / n:
            continue
        if sep == 0.0:
            continue
        return taus
    raise RuntimeError(
        f"no admissible delays after {MAX_REJECTION_ATTEMPTS} attempts (r={r}, n={n})")


def sample_amplitudes(r, rng):
    c = rng.uniform(0.0, 1.0, size=r)
    phi = rng.uniform(0.0, 2 * np.pi, size=r)
    return (1.0 + 10.0 ** c) * np.exp(-1j * phi)


def sample_coefficients(s, rng, kind="complex"):
    if kind == "complex":
        h = rng.standard_normal(s) + 1j * rng.standard_normal(s)
    elif kind == "real":
        h = rng.standard_normal(s).astype(complex)
    else:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    return h / np.linalg.norm(h)


def sample_channel(K, r, s, n, rng, separated=True, h_kind="complex"):
    if r < 1 or K < 1:
        raise ValueError(f"K and r must be >= 1, got K={K}, r={r}")
    users = []
    for _ in range(K):
        taus = sample_delays(r, n, rng, separated)
        amps = sample_amplitudes(r, rng)
        h = sample_coefficients(s, rng, h_kind)
        users.append(UserChannel(taus, amps, h, n))
    return ChannelGroundTruth(users)


def sample_subspace(n, s, rng):
    """Codebook with i.i.d. entries uniform on ``[-sqrt(3), sqrt(3)]`` (unit variance)."""
    if n < 1 or s < 1:
        raise ValueError(f"n and s must be >= 1, got n={n}, s={s}")
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, s))


def measure_k(X, B):
    """``A_k(X)[j] = b_{k,j}^H x_j``; ``B`` rows are ``b_{k,j}^H`` already."""
    X = np.asarray(X)
    B = np.asarray(B)
    if B.shape != X.shape[::-1]:
        raise ValueError(f"codebook shape {B.shape} does not match signal shape {X.shape}")
    return np.einsum("jp,pj->j", B, X)


def measure(signals, B):
    """Superposed measurement ``sum_k A_k(X_k)``.

    ``signals`` has shape ``(K, s, n)`` and ``B`` shape ``(K, n, s)``.
    """
    signals = np.asarray(signals)
    B = np.asarray(B)
    if signals.ndim == 2:
        signals = signals[None]
    if B.ndim == 2:
        B = B[None]
    if signals.shape[0] != B.shape[0] or B.shape[1:] != signals.shape[:0:-1]:
        raise ValueError(f"signals {signals.shape} and codebooks {B.shape} disagree")
    return np.einsum("kjp,kpj->j", B, signals)


def measure_adjoint_k(v, B):
    """``A_k*(v)``: column ``j`` is ``v[j] b_{k,j}``."""
    v = np.asarray(v)
    B = np.asarray(B)
    if v.shape != (B.shape[0],):
        raise ValueError(f"v has shape {v.shape}, expected ({B.shape[0]},)")
    return B.conj().T * v[None, :]


def simulate_instance(n, s, K, r, seed, separated=True, n1=None, h_kind="complex"):
    """Draw ground truth and codebooks from one seed; returns ``(MeasurementSet, truth)``."""
    rng = np.random.default_rng(seed)
    shape = LiftShape(n=n, s=s, n1=n1)
    truth = sample_channel(K, r, s, n, rng, separated=separated, h_kind=h_kind)
    B = np.stack([sample_subspace(n, s, rng) for _ in range(K)])
    y = measure(truth.signals, B)
    meta = {"seed": seed, "separated": bool(separated), "r": r, "h_kind": h_kind}
    return MeasurementSet(y, B, shape, meta), truth


# -- JSON instance files ------------------------------------------------------

def encode_complex(a):
    """Nested lists with every complex entry written as ``[re, im]``."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(obj):
    arr = np.asarray(obj, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def dump_instance(measurements, truth=None):
    """Serialize an instance to a JSON string (floats round-trip exactly)."""
    shape = measurements.shape
    doc = {
        "format": "jbsd-instance/1",
        "shape": {"n": shape.n, "s": shape.s, "n1": shape.n1, "n2": shape.n2},
        "meta": measurements.meta,
        "y": encode_complex(measurements.y),
        "B": encode_complex(measurements.B),
    }
    if truth is not None:
        doc["truth"] = [
            {"taus": u.taus.tolist(), "amps": encode_complex(u.amps), "h": encode_complex(u.h)}
            for u in truth.users
        ]
    return json.dumps(doc)


def load_instance(text):
    doc = json.loads(text)
    sh = doc["shape"]
    shape = LiftShape(n=sh["n"], s=sh["s"], n1=sh["n1"])
    B = decode_complex(doc["B"])
    if not np.any(B.imag):
        B = B.real
    m = MeasurementSet(decode_complex(doc["y"]), B, shape, doc.get("meta", {}))
    truth = None
    if "truth" in doc:
        truth = ChannelGroundTruth([
            UserChannel(np.asarray(u["taus"], dtype=float), decode_complex(u["amps"]),
                        decode_complex(u["h"]), shape.n)
            for u in doc["truth"]
        ])
    return m, truth
