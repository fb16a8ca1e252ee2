"""Synchronous random-spreading CDMA channel with bit extending and multiplexing.

A system with K users, spectral spreading N and extending factor B is
simulated as one large random-spreading channel: user k multiplexes B_k
bits, every bit is spread over B*N chips by its own random +/-1 sequence,
and the receiver observes the matched-filter bank output ``y = S^T r``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_bits, check_square

LONG_SEQUENCE_MAX_BITS = 128


@dataclass(frozen=True)
class SystemConfig:
    """Dimensioning of one experiment.

    Parameters
    ----------
    K : int
        Number of users.
    N : int
        Spectral spreading factor (chips per unextended bit period).
    B : int
        Extending factor; each extended bit lasts B bit periods.
    multiplex : tuple of int, optional
        Bits multiplexed per user (B_k). Defaults to B for every user.
    amplitudes : tuple of float, optional
        Received amplitude of each user. Defaults to 1 for every user.
    snr_db : float
        ``10 log10(1 / sigma^2)``, i.e. SNR of a unit-amplitude user.
    sequence_mode : {"auto", "short", "long"}
        Short sequences are drawn once per sample and reused by every trial
        of that sample; long sequences are redrawn every trial. "auto" picks
        long when the total bit count is at most 128.
    n_samples : int
        Number of short-sequence samples.
    master_seed : int
        Root of every random stream.
    amplitude_bounds : (float, float)
        Admissible range for the user amplitudes.
    """

    K: int
    N: int
    B: int = 1
    multiplex: Optional[tuple] = None
    amplitudes: Optional[tuple] = None
    snr_db: float = 11.0
    sequence_mode: str = "auto"
    n_samples: int = 5
    master_seed: int = 0
    amplitude_bounds: tuple = (1e-6, 1e6)

    def __post_init__(self):
        for name in ("K", "N", "B", "n_samples"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.multiplex is not None:
            object.__setattr__(self, "multiplex", tuple(int(v) for v in self.multiplex))
            if len(self.multiplex) != self.K:
                raise ValueError("multiplex must list one count per user")
            if any(v < 0 for v in self.multiplex):
                raise ValueError("multiplex counts must be non-negative")
            if sum(self.multiplex) == 0:
                raise ValueError("no bits to send: every multiplex count is zero")
        if self.amplitudes is not None:
            object.__setattr__(self, "amplitudes", tuple(float(v) for v in self.amplitudes))
            if len(self.amplitudes) != self.K:
                raise ValueError("amplitudes must list one value per user")
            lo, hi = self.amplitude_bounds
            if not (0 < lo <= hi < np.inf):
                raise ValueError("amplitude bounds must satisfy 0 < A' <= A'' < inf")
            if any(not (lo <= a <= hi) for a in self.amplitudes):
                raise ValueError(f"amplitudes must lie in [{lo}, {hi}]")
        if self.sequence_mode not in ("auto", "short", "long"):
            raise ValueError(f"unknown sequence mode {self.sequence_mode!r}")
        if np.isnan(self.snr_db):
            raise ValueError("snr_db is NaN")

    @property
    def multiplex_counts(self):
        return self.multiplex if self.multiplex is not None else (self.B,) * self.K

    @property
    def user_amplitudes(self):
        return self.amplitudes if self.amplitudes is not None else (1.0,) * self.K

    @property
    def total_bits(self):
        return int(sum(self.multiplex_counts))

    @property
    def total_chips(self):
        return self.B * self.N

    @property
    def alpha(self):
        return sum(bk / self.B for bk in self.multiplex_counts) / self.N

    @property
    def sigma(self):
        return float(10.0 ** (-self.snr_db / 20.0))

    @property
    def mode(self):
        if self.sequence_mode != "auto":
            return self.sequence_mode
        return "long" if self.total_bits <= LONG_SEQUENCE_MAX_BITS else "short"

    @property
    def samples(self):
        return self.n_samples if self.mode == "short" else 1


class QlrsDimensions(NamedTuple):
    total_bits: int
    total_chips: int
    alpha: float
    amplitudes: np.ndarray
    user_of_bit: np.ndarray


def build_qlrs(cfg):
    """Map a QLRS system onto its equivalent large random-spreading channel.

    Bit j of user k becomes a column of its own with amplitude A_k; all
    columns share the B*N chips of one extended bit period.
    """
    counts = cfg.multiplex_counts
    user_of_bit = np.repeat(np.arange(cfg.K), counts)
    amps = np.asarray(cfg.user_amplitudes, dtype=np.float64)[user_of_bit]
    return QlrsDimensions(cfg.total_bits, cfg.total_chips, cfg.alpha, amps, user_of_bit)


def _chips(rng, total_chips, total_bits):
    if total_chips < 1 or total_bits < 1:
        raise ValueError("spreading dimensions must be positive")
    return rng.integers(0, 2, size=(total_chips, total_bits), dtype=np.int8) * 2 - 1


def gen_spreading(rng, total_chips, total_bits):
    """Random +/-1/sqrt(total_chips) spreading matrix, one unit-norm column per bit."""
    return _chips(rng, total_chips, total_bits) / np.sqrt(total_chips)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    """One realized channel. Arrays are read-only once constructed.

    ``R = S^T S`` and ``H = A R A`` are computed once at construction.
    """

    S: np.ndarray
    A: np.ndarray
    sigma: float
    R: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=np.float64))
        A = np.asarray(self.A, dtype=np.float64).reshape(-1)
        if A.shape[0] != S.shape[1]:
            raise ValueError("need one amplitude per column of S")
        if np.any(A <= 0):
            raise ValueError("amplitudes must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        R = self.R
        if R is None:
            R = S.T @ S
            R = 0.5 * (R + R.T)
        else:
            R = check_square(R, "R")
            if R.shape[0] != A.shape[0]:
                raise ValueError("R does not match the number of bits")
        object.__setattr__(self, "S", _frozen(S))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "sigma", float(self.sigma))

    @cached_property
    def H(self):
        return _frozen(self.A[:, None] * self.R * self.A[None, :])

    @property
    def total_bits(self):
        return self.S.shape[1]

    @property
    def total_chips(self):
        return self.S.shape[0]

    @classmethod
    def from_crosscorrelation(cls, R, A=None, sigma=0.0):
        """Instance realizing a given crosscorrelation matrix exactly.

        ``S`` is a square-root factor of ``R`` so that transmission and the
        geometric checks still have chips to work with.
        """
        R = check_square(R, "R")
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        w, V = np.linalg.eigh(R)
        if w.min() < -1e-9 * max(1.0, abs(w).max()):
            raise ValueError("R must be positive semidefinite")
        S = np.sqrt(np.clip(w, 0, None))[:, None] * V.T
        A = np.ones(R.shape[0]) if A is None else A
        return cls(S, A, sigma, R=R)

    @classmethod
    def orthogonal(cls, K, A=None, sigma=0.0):
        """Channel with R = I (one chip per bit)."""
        A = np.ones(K) if A is None else A
        return cls(np.eye(K), A, sigma, R=np.eye(K))


def make_instance(cfg, rng):
    """Draw the spreading matrix for ``cfg`` from ``rng``."""
    dims = build_qlrs(cfg)
    chips = _chips(rng, dims.total_chips, dims.total_bits).astype(np.float64)
    # integer Gram is exact, so the diagonal of R is exactly one
    R = (chips.T @ chips) / dims.total_chips
    S = chips / np.sqrt(dims.total_chips)
    return ChannelInstance(S, dims.amplitudes, cfg.sigma, R=R)


def gram(inst):
    """Crosscorrelation matrix R and Gram matrix H = A R A."""
    return inst.R, inst.H


@dataclass(frozen=True, eq=False)
class TransmitRecord:
    b: np.ndarray
    r: np.ndarray
    y: np.ndarray


def random_bits(rng, n):
    return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0


def transmit(inst, b, rng):
    """Send ``b`` through the channel: ``r = S A b + m``, ``y = S^T r``."""
    b = check_bits(b, inst.total_bits)
    m = inst.sigma * rng.standard_normal(inst.total_chips)
    r = inst.S @ (inst.A * b) + m
    return TransmitRecord(b, r, inst.S.T @ r)
