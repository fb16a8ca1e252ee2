"""Compiled inner loops for the likelihood ascent search.

Everything here works on the cached residual correlation ``z = A y - H b``
and the Gram matrix ``H``; callers own validation.
"""

import numpy as np
from numba import njit

# group rules
EXHAUSTIVE = 0
PARALLEL = 1


@njit(cache=True)
def _lex_less(m1, m2):
    # True if the sorted index set of m1 precedes that of m2.
    diff = m1 ^ m2
    if diff == 0:
        return False
    d = diff & (-diff)
    if m1 & d:
        return (m2 & ~(2 * d - 1)) != 0
    return (m1 & ~(2 * d - 1)) == 0


@njit(cache=True)
def _pattern_gain(H, z, b, g0, mask):
    # -eps^T z - eps^T H eps for the pattern `mask` inside the group at g0
    lin = 0.0
    quad = 0.0
    m = mask
    i = 0
    while m:
        if m & 1:
            ki = g0 + i
            ei = b[ki]
            lin += ei * z[ki]
            mm = mask
            j = 0
            while mm:
                if mm & 1:
                    kj = g0 + j
                    quad += ei * b[kj] * H[ki, kj]
                mm >>= 1
                j += 1
        m >>= 1
        i += 1
    return -lin - quad


@njit(cache=True)
def _best_pattern(H, z, b, g0, J, c):
    # Gray-code walk over the 2^J - 1 nonempty flip patterns of one group.
    for j in range(J):
        c[j] = 0.0
    mask = 0
    lin = 0.0
    quad = 0.0
    best = 0.0
    best_mask = 0
    for step in range(1, 1 << J):
        i = 0
        t = step
        while (t & 1) == 0:
            t >>= 1
            i += 1
        k = g0 + i
        e = b[k]
        bit = 1 << i
        if mask & bit:
            lin -= e * z[k]
            quad += -2.0 * e * c[i] + H[k, k]
            mask ^= bit
            for j in range(J):
                c[j] -= e * H[k, g0 + j]
        else:
            lin += e * z[k]
            quad += 2.0 * e * c[i] + H[k, k]
            mask |= bit
            for j in range(J):
                c[j] += e * H[k, g0 + j]
        s = -lin - quad
        if s > best or (s == best and best_mask != 0 and _lex_less(mask, best_mask)):
            best = s
            best_mask = mask
    return best_mask


@njit(cache=True)
def _parallel_pattern(H, z, b, g0, J):
    # Every bit whose own gain clears the group threshold sum_j |H_kj|.
    mask = 0
    for i in range(J):
        k = g0 + i
        thr = 0.0
        for j in range(J):
            thr += abs(H[k, g0 + j])
        if -b[k] * z[k] > thr:
            mask |= 1 << i
    return mask


@njit(cache=True)
def _apply(H, z, b, g0, mask, counts, stage):
    K = b.shape[0]
    m = mask
    i = 0
    while m:
        if m & 1:
            k = g0 + i
            e = b[k]
            for j in range(K):
                z[j] += 2.0 * e * H[k, j]
            b[k] = -e
            counts[stage, 0] += 1
            counts[stage, 1] += K
        m >>= 1
        i += 1


@njit(cache=True)
def run_stage(H, z, b, J, rule, max_sweeps, counts, stage, omega, trace, ntrace, tol):
    """Sweep contiguous groups of size J until a full sweep flips nothing.

    A pattern is applied only if its gain exceeds ``tol`` (round-off level).
    Returns the updated likelihood metric; ``trace[ntrace[0]:]`` receives the
    metric after each accepted pattern while there is room.
    """
    K = b.shape[0]
    c = np.zeros(J)
    for _ in range(max_sweeps):
        flipped = False
        for g0 in range(0, K, J):
            Jg = min(J, K - g0)
            if Jg == 1:
                k = g0
                s = -b[k] * z[k] - H[k, k]
                mask = 1 if s > tol else 0
            else:
                if rule == EXHAUSTIVE:
                    mask = _best_pattern(H, z, b, g0, Jg, c)
                else:
                    mask = _parallel_pattern(H, z, b, g0, Jg)
                if mask == 0:
                    continue
                s = _pattern_gain(H, z, b, g0, mask)
            if mask == 0 or not s > tol:
                continue
            _apply(H, z, b, g0, mask, counts, stage)
            omega += 4.0 * s
            flipped = True
            n = ntrace[0]
            if n < trace.shape[0]:
                trace[n] = omega
                ntrace[0] = n + 1
        if not flipped:
            return omega, True
    return omega, False


@njit(cache=True)
def run_cascade(H, Ay, b, stages, rule, max_sweeps, stage_out, counts, trace, ntrace, tol):
    """Run the stages in order from the initial vector ``b`` (modified in place).

    ``stage_out[s]`` holds the decision after stage s and ``counts[s]`` its
    (flips, additions).  Returns (final metric, final z, converged flag).
    """
    K = b.shape[0]
    z = Ay - H @ b
    omega = 0.0
    for k in range(K):
        omega += b[k] * (Ay[k] + z[k])
    if ntrace[0] < trace.shape[0]:
        trace[ntrace[0]] = omega
        ntrace[0] += 1
    converged = True
    for s in range(stages.shape[0]):
        omega, ok = run_stage(H, z, b, stages[s], rule, max_sweeps, counts, s,
                              omega, trace, ntrace, tol)
        converged = converged and ok
        for k in range(K):
            stage_out[s, k] = b[k]
    return omega, z, converged


@njit(cache=True)
def enumerate_omega(Ay, H, out):
    """Likelihood metric 2 b^T A y - b^T H b for every b, in binary order.

    Index bit k set means b_k = -1.  Uses a Gray-code walk, O(K) per vector.
    """
    K = Ay.shape[0]
    b = np.ones(K)
    Hb = H @ b
    omega = 2.0 * (b @ Ay) - b @ Hb
    out[0] = omega
    idx = 0
    for step in range(1, 1 << K):
        i = 0
        t = step
        while (t & 1) == 0:
            t >>= 1
            i += 1
        e = b[i]
        # flipping bit i: b' = b - 2 e e_i
        omega += -4.0 * e * Ay[i] + 4.0 * e * Hb[i] - 4.0 * H[i, i]
        for j in range(K):
            Hb[j] -= 2.0 * e * H[j, i]
        b[i] = -e
        idx ^= 1 << i
        out[idx] = omega
    return out


@njit(cache=True)
def lml_mask(Ay, H, out):
    """Flag every b in binary order that is a single-flip local maximum."""
    K = Ay.shape[0]
    b = np.ones(K)
    z = Ay - H @ b
    idx = 0
    for step in range(1 << K):
        if step > 0:
            i = 0
            t = step
            while (t & 1) == 0:
                t >>= 1
                i += 1
            e = b[i]
            for j in range(K):
                z[j] += 2.0 * e * H[i, j]
            b[i] = -e
            idx ^= 1 << i
        ok = True
        for k in range(K):
            if -b[k] * z[k] > H[k, k]:
                ok = False
                break
        out[idx] = ok
    return out


@njit(cache=True)
def successive(Yff, F, out):
    """Decide bits in index order, cancelling already-decided ones.

    Row i: out[i, k] = sign(Yff[i, k] - sum_{d<k} F[k, d] out[i, d]).
    """
    n, K = Yff.shape
    for i in range(n):
        for k in range(K):
            v = Yff[i, k]
            for d in range(k):
                v -= F[k, d] * out[i, d]
            out[i, k] = 1.0 if v >= 0.0 else -1.0
    return out
