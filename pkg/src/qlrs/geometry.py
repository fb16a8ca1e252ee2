"""Error-vector geometry of the random-spreading signal constellation.

An error vector eps in {-1, 0, +1}^K describes the competing decision
``b - 2 eps``. Two distances from the transmitted signal are used:

* ``d_gml(eps) = sqrt(eps^T H eps)``, the distance to the hyperplane that
  optimally separates ``SAb`` from ``SA(b - 2 eps)``;
* ``d_lml(eps) = eps^T (2H - A^2) eps / sqrt(eps^T H eps)``, the distance to
  the parallel hyperplane through the vertex of the local-maximum region of
  ``SA(b - 2 eps)``.

The experiments at the bottom estimate, by Monte Carlo over random chips,
how these distances behave as the system grows at fixed load.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb, log, sqrt

import numpy as np

from . import _kernels
from .las import Schedule, cascade, initial_vector
from .refdet import GML_CAP, _index_to_bits
from .streams import aux_rng

ALPHA_STAR = 0.5 - 1.0 / (4.0 * log(2.0))
INDECOMPOSABLE_CAP = 16
ENUMERATION_BUDGET = 2_000_000


class ErrorVector:
    """Entries in {-1, 0, +1} with their support I and weight w = |I|."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        e = np.asarray(entries)
        if e.ndim != 1 or not np.all(np.isin(e, (-1, 0, 1))):
            raise ValueError("error vector entries must be -1, 0 or +1")
        self.entries = e.astype(np.float64)

    @classmethod
    def unit(cls, K, k):
        e = np.zeros(K)
        e[k] = 1.0
        return cls(e)

    @classmethod
    def between(cls, b, b_other):
        """Error vector of deciding ``b_other`` when ``b`` was sent."""
        return cls((np.asarray(b) - np.asarray(b_other)) / 2)

    @property
    def support(self):
        return np.flatnonzero(self.entries)

    @property
    def weight(self):
        return int(np.count_nonzero(self.entries))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"ErrorVector({self.entries.astype(int).tolist()})"


def _entries(eps):
    e = eps.entries if isinstance(eps, ErrorVector) else np.asarray(eps, dtype=np.float64)
    if not np.any(e):
        raise ValueError("error vector has weight zero")
    return e


def _amp2(H, A):
    return np.diag(H).copy() if A is None else np.asarray(A, dtype=np.float64) ** 2


def d_gml(eps, H):
    e = _entries(eps)
    return sqrt(max(float(e @ H @ e), 0.0))


def d_lml(eps, H, A=None):
    """LML distance; ``-inf`` when ``eps^T H eps`` vanishes.

    Amplitudes default to ``sqrt(diag(H))``.
    """
    e = _entries(eps)
    q = float(e @ H @ e)
    if q <= 0.0:
        return float("-inf")
    a = float(_amp2(H, A) @ (e * e))
    return sqrt(q) * (2.0 - a / q)


def _bipartition_masks(w):
    # first w-1 members choose sides; the last member always sits in J2
    m = np.arange(1, 1 << (w - 1))
    return ((m[:, None] >> np.arange(w)) & 1).astype(np.float64)


def _cross_terms(V, Hs, masks):
    # cross[p, q] = eps1^T H eps2 for sign row p and bipartition q
    C = V[:, :, None] * Hs[None, :, :] * V[:, None, :]
    return np.einsum("qi,pij,qj->pq", masks, C, 1.0 - masks, optimize=True)


def is_indecomposable(eps, H, cap=INDECOMPOSABLE_CAP):
    """No split of the support into eps1, eps2 has ``eps1^T H eps2 >= 0``.

    Such a split gives ``d^2(eps) >= d^2(eps1) + d^2(eps2)``, i.e. eps is
    dominated by smaller error events.
    """
    e = _entries(eps)
    idx = np.flatnonzero(e)
    w = idx.size
    if w > cap:
        raise ValueError(f"weight {w} exceeds the bipartition cap {cap}")
    if w == 1:
        return True
    cross = _cross_terms(e[idx][None, :], H[np.ix_(idx, idx)], _bipartition_masks(w))
    return bool(np.all(cross[0] < 0.0))


def _indecomposable_rows(V, Hs):
    w = V.shape[1]
    if w == 1:
        return np.ones(V.shape[0], dtype=bool)
    cross = _cross_terms(V, Hs, _bipartition_masks(w))
    return np.all(cross < 0.0, axis=1)


def _sign_rows(w):
    # all sign patterns with the first entry fixed to +1
    m = np.arange(1 << (w - 1))
    rest = np.where((m[:, None] >> np.arange(w - 1)) & 1, -1.0, 1.0)
    return np.hstack([np.ones((m.size, 1)), rest])


@dataclass(frozen=True)
class AmeReport:
    """Per-user efficiency bounds over all enumerated error vectors.

    ``gml_ame`` is min d_gml^2 / A_k^2 and ``lml_ame_lb`` is
    min ([d_lml]^+ / A_k)^2 over indecomposable vectors, both clamped to
    [0, 1]; the unclamped minima and their argmins are kept alongside.
    """

    user: int
    gml_ame: float
    lml_ame_lb: float
    gml_raw: float
    lml_raw: float
    gml_argmin: np.ndarray
    lml_argmin: np.ndarray
    n_enumerated: int
    n_degenerate: int


def ame_report(H, A, k, max_weight, budget=ENUMERATION_BUDGET):
    """Exact minima over every eps with eps_k != 0 and weight <= max_weight."""
    H = np.asarray(H, dtype=np.float64)
    K = H.shape[0]
    a2 = _amp2(H, A)
    if max_weight > INDECOMPOSABLE_CAP:
        raise ValueError(f"max_weight above {INDECOMPOSABLE_CAP}")
    max_weight = min(max_weight, K)
    total = sum(comb(K - 1, w - 1) * 2 ** (w - 1) for w in range(1, max_weight + 1))
    if total > budget:
        raise ValueError(f"{total} error vectors exceed the enumeration budget {budget}")
    others = [i for i in range(K) if i != k]
    gml_best, lml_best = np.inf, np.inf
    gml_arg = lml_arg = None
    degenerate = 0
    for w in range(1, max_weight + 1):
        signs = _sign_rows(w)
        for rest in combinations(others, w - 1):
            idx = np.array((k,) + rest)
            Hs = H[np.ix_(idx, idx)]
            q = np.einsum("pi,ij,pj->p", signs, Hs, signs)
            i = int(np.argmin(q))
            if q[i] < gml_best:
                gml_best, gml_arg = q[i], (idx, signs[i])
            ok = _indecomposable_rows(signs, Hs)
            good = ok & (q > 0)
            degenerate += int(np.count_nonzero(ok & (q <= 0)))
            if np.any(good):
                a = signs[good] ** 2 @ a2[idx]
                dl = np.sqrt(q[good]) * (2.0 - a / q[good])
                j = int(np.argmin(dl))
                if dl[j] < lml_best:
                    lml_best, lml_arg = dl[j], (idx, signs[good][j])

    def _vec(arg):
        v = np.zeros(K)
        if arg is not None:
            v[arg[0]] = arg[1]
        return v

    gml_raw = gml_best / a2[k]
    lml_raw = (max(lml_best, 0.0) ** 2) / a2[k] if np.isfinite(lml_best) else 0.0
    return AmeReport(k, float(np.clip(gml_raw, 0, 1)), float(np.clip(lml_raw, 0, 1)),
                     float(gml_raw), float(lml_raw), _vec(gml_arg), _vec(lml_arg),
                     total, degenerate)


def nested_pair_violation(eps1, eps2, H):
    """True when the smaller error event is not strictly closer."""
    return d_gml(eps1, H) >= d_gml(eps2, H)


def _n_chips(K, alpha):
    return max(1, int(round(K / alpha)))


def _chip_block(rng, n, N, w):
    return (rng.integers(0, 2, size=(n, N, w), dtype=np.int8) * 2 - 1).astype(np.float64)


def _chunk(chunk, N, w, max_entries=4_000_000):
    # trials per block, keeping the chip array near max_entries floats
    return max(1, min(chunk, max_entries // (N * w)))


def _se(p, n):
    return sqrt(max(p * (1.0 - p), 0.0) / n) if n else float("nan")


def thm1_experiment(alpha, K_list, M1, M2, trials, seed=0, chunk=2000):
    """Frequency with which a nested lighter error event is not strictly closer.

    Each trial draws fresh chips for the M2 columns involved, a heavy
    error vector of weight in (M1, M2] and a nested light one of weight
    <= M1 on a subset of its support.
    """
    if not (1 <= M1 < M2):
        raise ValueError("need 1 <= M1 < M2")
    rows = []
    for K in K_list:
        if M2 > K:
            raise ValueError(f"M2 = {M2} exceeds K = {K}")
        N = _n_chips(K, alpha)
        rng = aux_rng(seed, 1, K)
        viol = 0
        done = 0
        step = _chunk(chunk, N, M2)
        while done < trials:
            n = min(step, trials - done)
            C = _chip_block(rng, n, N, M2)
            eps = np.where(rng.integers(0, 2, size=(n, M2)) == 1, 1.0, -1.0)
            w2 = rng.integers(M1 + 1, M2 + 1, size=n)
            w1 = rng.integers(1, M1 + 1, size=n)
            cols = np.arange(M2)[None, :]
            e2 = np.where(cols < w2[:, None], eps, 0.0)
            e1 = np.where(cols < w1[:, None], eps, 0.0)
            # integer norms: the comparison is exact
            q2 = np.sum(np.einsum("tnw,tw->tn", C, e2) ** 2, axis=1)
            q1 = np.sum(np.einsum("tnw,tw->tn", C, e1) ** 2, axis=1)
            viol += int(np.count_nonzero(q1 >= q2))
            done += n
        p = viol / trials
        rows.append({"experiment": "thm1", "K": K, "N": N, "alpha": K / N, "M1": M1,
                     "M2": M2, "trials": trials, "violations": viol, "freq": p,
                     "se": _se(p, trials)})
    return rows


def thm2_experiment(alpha, K_list, M, trials, seed=0, weights=None, high_weights=(5, 8),
                    high_trials=None, chunk=2000):
    """Convergence of d_lml to d_gml at bounded weight, plus high-weight minima.

    Part (i) rows report mean and max of |d_lml/d_gml - 1| per (K, weight).
    Part (ii) rows (only for alpha below ALPHA_STAR) report the smallest
    d_lml among sampled indecomposable vectors with weight in
    ``high_weights``.
    """
    weights = list(range(1, M + 1)) if weights is None else list(weights)
    rows = []
    for K in K_list:
        N = _n_chips(K, alpha)
        for w in weights:
            if w > K:
                continue
            rng = aux_rng(seed, 2, K, w)
            errs = []
            degenerate = 0
            done = 0
            step = _chunk(chunk, N, w)
            while done < trials:
                n = min(step, trials - done)
                C = _chip_block(rng, n, N, w)
                eps = np.where(rng.integers(0, 2, size=(n, w)) == 1, 1.0, -1.0)
                q = np.sum(np.einsum("tnw,tw->tn", C, eps) ** 2, axis=1) / N
                ok = q > 0
                degenerate += int(np.count_nonzero(~ok))
                errs.append(np.abs(1.0 - w / q[ok]))
                done += n
            err = np.concatenate(errs)
            rows.append({"experiment": "thm2", "part": "i", "K": K, "N": N, "alpha": K / N,
                         "weight": w, "trials": int(err.size),
                         "mean_ratio_err": float(err.mean()),
                         "max_ratio_err": float(err.max()),
                         "se": float(err.std(ddof=1) / sqrt(err.size)) if err.size > 1 else 0.0,
                         "degenerate": degenerate})
        if alpha < ALPHA_STAR:
            rows.append(_thm2_high_weight(K, N, high_weights, high_trials or max(1, trials // 10),
                                          seed))
    return rows


def _thm2_high_weight(K, N, high_weights, trials, seed):
    lo, hi = high_weights
    hi = min(hi, K, INDECOMPOSABLE_CAP)
    rng = aux_rng(seed, 3, K)
    best = np.inf
    found = 0
    for _ in range(trials):
        w = int(rng.integers(lo, hi + 1))
        C = _chip_block(rng, 1, N, w)[0]
        Hs = C.T @ C / N
        signs = _sign_rows(w)
        ok = _indecomposable_rows(signs, Hs)
        if not np.any(ok):
            continue
        V = signs[ok]
        q = np.einsum("pi,ij,pj->p", V, Hs, V)
        good = q > 0
        found += int(good.sum())
        if np.any(good):
            dl = np.sqrt(q[good]) * (2.0 - w / q[good])
            best = min(best, float(dl.min()))
    return {"experiment": "thm2", "part": "ii", "K": K, "N": N, "alpha": K / N,
            "weight": f"{lo}-{hi}", "trials": trials, "indecomposable_found": found,
            "min_d_lml": best if found else float("nan"), "alpha_star": ALPHA_STAR}


def thm4_experiment(alpha, c, K_list, trials, seed=0, schedule=Schedule(), cap=GML_CAP):
    """How often the only LML point is the GML point, with sigma = c / sqrt(N).

    Each trial enumerates all 2^K vectors, so K is limited by ``cap``.
    Also reports how often the cascade output equals the GML decision.
    """
    if not alpha < ALPHA_STAR:
        raise ValueError(f"alpha = {alpha} must be below alpha* = {ALPHA_STAR:.5f}")
    if c <= 0:
        raise ValueError("c must be positive")
    rows = []
    for K in K_list:
        if K > cap:
            raise ValueError(f"K = {K} exceeds the exhaustive cap {cap}")
        N = _n_chips(K, alpha)
        sigma = c / sqrt(N)
        rng = aux_rng(seed, 4, K)
        unique = agree = gml_ok = 0
        n_lml = 0
        omega = np.empty(1 << K)
        mask = np.empty(1 << K, dtype=np.bool_)
        for _ in range(trials):
            chips = (rng.integers(0, 2, size=(N, K)) * 2 - 1).astype(np.float64)
            H = chips.T @ chips / N
            S = chips / sqrt(N)
            b = rng.integers(0, 2, size=K).astype(np.float64) * 2 - 1
            y = S.T @ (S @ b + sigma * rng.standard_normal(N))
            _kernels.enumerate_omega(y, H, omega)
            _kernels.lml_mask(y, H, mask)
            g = _index_to_bits(int(np.argmax(omega)), K)
            count = int(mask.sum())
            n_lml += count
            unique += count == 1
            res = cascade(y, H, initial_vector(y, schedule.initial, rng), schedule.stages,
                          schedule.rule)
            agree += bool(np.array_equal(res.b_hat, g))
            gml_ok += bool(np.array_equal(g, b))
        pu, pa = unique / trials, agree / trials
        rows.append({"experiment": "thm4", "K": K, "N": N, "alpha": K / N, "c": c,
                     "sigma": sigma, "trials": trials, "lml_unique_freq": pu,
                     "lml_unique_se": _se(pu, trials), "wslas_eq_gml_freq": pa,
                     "wslas_eq_gml_se": _se(pa, trials), "mean_lml_points": n_lml / trials,
                     "gml_correct_freq": gml_ok / trials})
    return rows
