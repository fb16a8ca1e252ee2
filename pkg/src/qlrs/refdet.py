"""Reference multiuser detectors used as BER comparison curves.

Linear receivers (matched filter, decorrelator, MMSE), decision-feedback
receivers (MMSE-DF and matched-filter SIC) and the exhaustive maximum
likelihood search that serves as the small-system oracle. Every detector is
deterministic given ``y`` and uses sign(0) := +1.
"""

from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import _kernels
from ._validation import check_square, sign
from .base import BaseDetector

PINV_RCOND = 1e-10
GML_CAP = 20


class DetectorKind(str, Enum):
    MF = "mf"
    DECORRELATOR = "decorrelator"
    MMSE = "mmse"
    MMSE_DF = "mmse_df"
    SIC = "sic"
    GML = "gml"
    WSLAS = "wslas"
    SLAS = "slas"


def _as_vector(y):
    return np.asarray(y, dtype=np.float64)


def _amps(A, K):
    return np.ones(K) if A is None else np.broadcast_to(np.asarray(A, dtype=np.float64), (K,))


def pinv_psd(R, rcond=PINV_RCOND):
    """Pseudo-inverse of a symmetric PSD matrix; also returns its numerical rank."""
    w, V = np.linalg.eigh(R)
    keep = w > rcond * max(w.max(), 0.0)
    inv = (V[:, keep] / w[keep]) @ V[:, keep].T
    return inv, int(keep.sum())


def mf_detect(y):
    return sign(_as_vector(y))


def decorrelator_detect(y, R, return_rank=False):
    """``sign(R^+ y)``; with ``return_rank`` also report whether R was singular."""
    R = check_square(R, "R")
    inv, rank = pinv_psd(R)
    b = sign(_as_vector(y) @ inv.T)
    if return_rank:
        return b, rank < R.shape[0]
    return b


def _mmse_matrix(R, A, sigma):
    A = _amps(A, R.shape[0])
    return R + np.diag(sigma**2 / A**2)


def mmse_detect(y, R, A=None, sigma=0.0):
    """``sign((R + sigma^2 A^-2)^-1 y)``; falls back to the decorrelator at sigma = 0."""
    R = check_square(R, "R")
    if sigma == 0:
        return decorrelator_detect(y, R)
    M = _mmse_matrix(R, A, sigma)
    return sign(cho_solve(cho_factor(M), _as_vector(y).T).T)


def _order(A, K):
    # decreasing amplitude, ties in ascending index
    return np.argsort(-_amps(A, K), kind="stable")


def _df_filters(R, A, sigma):
    """Feed-forward W and feedback F for MMSE decision feedback in index order.

    With R + sigma^2 A^-2 = G G^T, G upper triangular, the MMSE estimate of
    the first undetected bit over the remaining users is proportional to
    (W y)_k - sum_{d<k} (W R A)_{kd} b_d, where W = G^{-1}.
    """
    K = R.shape[0]
    A = _amps(A, K)
    M = _mmse_matrix(R, A, sigma)
    if sigma == 0:
        M = M + np.eye(K) * 1e-12 * max(1.0, np.abs(M).max())
    L = np.linalg.cholesky(M[::-1, ::-1])
    G = L[::-1, ::-1]
    W = solve_triangular(G, np.eye(K), lower=False)
    F = np.tril((W @ R) * A[None, :], -1)
    return W, F


def _successive(Y, W, F):
    Y2 = np.atleast_2d(Y)
    ff = Y2 if W is None else Y2 @ W.T
    out = _kernels.successive(np.ascontiguousarray(ff), np.ascontiguousarray(F),
                              np.empty_like(ff))
    return out if np.ndim(Y) == 2 else out[0]


def _permuted(y, R, A, order):
    y = _as_vector(y)
    return y[..., order], R[np.ix_(order, order)], _amps(A, R.shape[0])[order]


def _unpermute(b, order):
    out = np.empty_like(b)
    out[..., order] = b
    return out


def mmse_df_detect(y, R, A=None, sigma=0.0):
    """MMSE decision feedback in decreasing-amplitude order."""
    R = check_square(R, "R")
    order = _order(A, R.shape[0])
    yp, Rp, Ap = _permuted(y, R, A, order)
    W, F = _df_filters(Rp, Ap, sigma)
    return _unpermute(_successive(yp, W, F), order)


def sic_detect(y, R, A=None):
    """Matched-filter successive interference cancellation."""
    R = check_square(R, "R")
    order = _order(A, R.shape[0])
    yp, Rp, Ap = _permuted(y, R, A, order)
    F = np.tril(Rp * Ap[None, :], -1)
    return _unpermute(_successive(yp, None, F), order)


def _index_to_bits(idx, K):
    return np.where((idx >> np.arange(K)) & 1, -1.0, 1.0)


def gml_exhaustive(y, A, H, cap=GML_CAP):
    """Global maximizer of ``2 b^T A y - b^T H b`` by enumeration.

    Ties resolve to the first vector in enumeration order (all +1 first,
    bit k set in the index meaning b_k = -1).
    """
    H = np.ascontiguousarray(check_square(H, "H"))
    K = H.shape[0]
    if K > cap:
        raise ValueError(f"exhaustive search refused: {K} bits exceeds cap {cap}")
    Ay = np.ascontiguousarray(_amps(A, K) * _as_vector(y))
    omega = _kernels.enumerate_omega(Ay, H, np.empty(1 << K))
    return _index_to_bits(int(np.argmax(omega)), K)


class MatchedFilter(BaseDetector):
    def _predict(self, Y):
        return sign(Y)


class Decorrelator(BaseDetector):
    """Zero-forcing detector; uses the pseudo-inverse when R is singular."""

    def __init__(self, rcond=PINV_RCOND):
        self.rcond = rcond

    def _fit(self, channel):
        self.pinv_, rank = pinv_psd(channel.R, self.rcond)
        self.rank_deficient_ = rank < channel.total_bits

    def _predict(self, Y):
        return sign(Y @ self.pinv_.T)


class MMSE(BaseDetector):
    def _fit(self, channel):
        if channel.sigma == 0:
            self.filter_, _ = pinv_psd(channel.R)
        else:
            self.filter_ = np.linalg.inv(_mmse_matrix(channel.R, channel.A, channel.sigma))

    def _predict(self, Y):
        return sign(Y @ self.filter_.T)


class _Successive(BaseDetector):
    def _predict(self, Y):
        yp = Y[:, self.order_]
        return _unpermute(_successive(yp, self.W_, self.F_), self.order_)


class MMSEDF(_Successive):
    """MMSE with decision feedback (decreasing-amplitude order)."""

    def _fit(self, channel):
        self.order_ = _order(channel.A, channel.total_bits)
        Rp = channel.R[np.ix_(self.order_, self.order_)]
        self.W_, self.F_ = _df_filters(Rp, channel.A[self.order_], channel.sigma)


class SIC(_Successive):
    def _fit(self, channel):
        self.order_ = _order(channel.A, channel.total_bits)
        Rp = channel.R[np.ix_(self.order_, self.order_)]
        self.W_ = None
        self.F_ = np.tril(Rp * channel.A[self.order_][None, :], -1)


class ExhaustiveGML(BaseDetector):
    def __init__(self, cap=GML_CAP):
        self.cap = cap

    def _fit(self, channel):
        if channel.total_bits > self.cap:
            raise ValueError(f"exhaustive search refused: {channel.total_bits} bits "
                             f"exceeds cap {self.cap}")

    def _predict(self, Y):
        ch = self.channel_
        return np.stack([gml_exhaustive(y, ch.A, ch.H, self.cap) for y in Y])


def make_detector(kind, **params):
    """Instantiate a detector by name (see :class:`DetectorKind`)."""
    from .las import SLASDetector, WSLASDetector

    kind = DetectorKind(kind)
    cls = {
        DetectorKind.MF: MatchedFilter,
        DetectorKind.DECORRELATOR: Decorrelator,
        DetectorKind.MMSE: MMSE,
        DetectorKind.MMSE_DF: MMSEDF,
        DetectorKind.SIC: SIC,
        DetectorKind.GML: ExhaustiveGML,
        DetectorKind.WSLAS: WSLASDetector,
        DetectorKind.SLAS: SLASDetector,
    }[kind]
    return cls(**params)
