"""Likelihood ascent search (LAS) detectors.

All variants climb the likelihood metric

    Omega(b) = 2 b^T A y - b^T H b

by flipping bits, caching the residual correlation ``z = A y - H b`` so
that a candidate flip pattern eps (eps_i = b_i on the flipped set) is scored
in O(|set|^2):

    dOmega = 4 (-eps^T z - eps^T H eps).

A GPLAS stage sweeps contiguous groups of J bits cyclically; the cascade of
stages J = 8, 4, 2, 1 (each started from the previous output) is the WSLAS
detector and the single stage J = 1 is SLAS. Because the last stage is
bit-by-bit ascent, every output is a local maximum with neighborhood size one.

Two group rules are available:

``"parallel"``
    Within a group, every bit k whose single-bit gain clears the threshold
    ``sum_{j in group} |H_kj|`` is flipped together. The threshold bounds the
    pairwise interaction, so the joint flip is still an ascent.
``"exhaustive"``
    Every nonempty flip pattern of the group is scored and the best one is
    applied if it improves the metric (ties go to the lexicographically
    smallest index set).
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from . import _kernels
from ._validation import check_bits, sign
from .base import BaseDetector

GROUP_RULES = {"exhaustive": _kernels.EXHAUSTIVE, "parallel": _kernels.PARALLEL}
INITIALS = ("mf", "random", "given")
DEFAULT_MAX_SWEEPS = 100_000
GAIN_RTOL = 1e-12


def gain_tolerance(Ay, H):
    """Smallest accepted value of ``-eps^T z - eps^T H eps`` (a quarter of dOmega).

    Gains below it are round-off: e.g. two identical spreading columns
    carrying opposite bits give an exact zero gain that can evaluate to
    +1e-16. Treating those as ties keeps every stage idempotent.
    """
    Ay = np.asarray(Ay)
    H = np.asarray(H)
    if H.size == 0:
        return 0.0
    return GAIN_RTOL * (H.shape[0] * float(np.abs(H).max()) + float(np.abs(Ay).max()))


@dataclass(frozen=True)
class Schedule:
    stages: tuple = (8, 4, 2, 1)
    initial: str = "mf"
    rule: str = "parallel"

    def __post_init__(self):
        stages = tuple(int(j) for j in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages or any(j < 1 for j in stages):
            raise ValueError("group sizes must be positive")
        if stages[-1] != 1:
            raise ValueError("the last stage must have group size 1")
        if max(stages) > 30:
            raise ValueError("group sizes above 30 are not supported")
        if self.initial not in INITIALS:
            raise ValueError(f"initial must be one of {INITIALS}")
        if self.rule not in GROUP_RULES:
            raise ValueError(f"rule must be one of {tuple(GROUP_RULES)}")


class LikelihoodState:
    """Current decision with its cached residual correlation and metric."""

    def __init__(self, b_hat, Ay, H):
        self.H = np.asarray(H, dtype=np.float64)
        self.Ay = np.asarray(Ay, dtype=np.float64)
        self.b_hat = check_bits(b_hat, self.Ay.shape[0], "b_hat").copy()
        self.z = self.Ay - self.H @ self.b_hat
        self.omega = float(self.b_hat @ self.Ay + self.b_hat @ self.z)
        self.flips = 0
        self.additions = 0

    @classmethod
    def from_channel(cls, y, channel, b0):
        return cls(b0, channel.A * np.asarray(y, dtype=np.float64), channel.H)

    @property
    def K(self):
        return self.b_hat.shape[0]

    def recomputed_z(self):
        return self.Ay - self.H @ self.b_hat

    def recomputed_omega(self):
        b = self.b_hat
        return float(2 * b @ self.Ay - b @ self.H @ b)

    def is_consistent(self, rtol=1e-8):
        ref = self.recomputed_z()
        scale = max(1.0, float(np.abs(ref).max()))
        return bool(np.abs(ref - self.z).max() <= rtol * scale)


def _pattern(state, flip_set):
    idx = np.asarray(sorted(set(int(k) for k in flip_set)), dtype=np.int64)
    return idx, state.b_hat[idx]


def delta_likelihood(state, flip_set, H=None):
    """Change of the metric if the bits in ``flip_set`` were flipped."""
    H = state.H if H is None else H
    idx, eps = _pattern(state, flip_set)
    if idx.size == 0:
        return 0.0
    return 4.0 * float(-eps @ state.z[idx] - eps @ H[np.ix_(idx, idx)] @ eps)


def apply_flip(state, flip_set, H=None):
    """Flip ``flip_set`` in place; z gets a rank-|set| update."""
    H = state.H if H is None else H
    idx, eps = _pattern(state, flip_set)
    if idx.size == 0:
        return state
    gain = delta_likelihood(state, idx, H)
    state.z += 2.0 * H[:, idx] @ eps
    state.b_hat[idx] = -eps
    state.omega += gain
    state.flips += idx.size
    state.additions += idx.size * state.K
    return state


def _lex_subsets(members):
    subsets = []
    for size in range(1, len(members) + 1):
        subsets.extend(combinations(members, size))
    return sorted(subsets)


def gplas_stage(state, J, H=None, rule="parallel", max_sweeps=DEFAULT_MAX_SWEEPS):
    """Run one group stage to its fixed point (reference implementation).

    Returns the number of sweeps performed, including the final one that
    flipped nothing.
    """
    if rule not in GROUP_RULES:
        raise ValueError(f"rule must be one of {tuple(GROUP_RULES)}")
    H = state.H if H is None else H
    K = state.K
    tol = 4.0 * gain_tolerance(state.Ay, H)
    groups = [list(range(g, min(g + J, K))) for g in range(0, K, J)]
    patterns = {} if rule == "exhaustive" else None
    for sweep in range(1, max_sweeps + 1):
        flipped = False
        for group in groups:
            if len(group) == 1 or rule == "exhaustive":
                key = tuple(group)
                if patterns is not None and key not in patterns:
                    patterns[key] = _lex_subsets(group)
                best, best_gain = None, 0.0
                for pat in (patterns[key] if patterns is not None else [key]):
                    gain = delta_likelihood(state, pat, H)
                    if gain > best_gain:
                        best, best_gain = pat, gain
                if best_gain <= tol:
                    best = None
            else:
                thr = np.abs(H[np.ix_(group, group)]).sum(axis=1)
                g = np.asarray(group)
                best = tuple(g[-state.b_hat[g] * state.z[g] > thr])
                if not best or not delta_likelihood(state, best, H) > tol:
                    best = None
            if best is not None:
                apply_flip(state, best, H)
                flipped = True
        if not flipped:
            return sweep
    return max_sweeps


def is_lml_point(b_hat, z, H, tol=None):
    """True if no single-bit flip increases the likelihood beyond round-off.

    ``tol`` defaults to the detectors' acceptance threshold, estimated from
    ``z`` and ``H``; pass 0 for the exact test.
    """
    b_hat = np.asarray(b_hat, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if tol is None:
        tol = gain_tolerance(np.abs(z) + np.abs(H) @ np.ones(H.shape[0]), H)
    return bool(np.all(-b_hat * z <= np.diag(H) + tol))


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Output of one LAS run.

    ``stage_decisions[s]`` is the decision after stage ``s``; ``flips`` and
    ``additions`` are per stage. ``omega_trace`` (when requested) lists the
    metric at the initial vector and after every accepted pattern.
    """

    b_hat: np.ndarray
    stages: tuple
    stage_decisions: np.ndarray
    flips: np.ndarray
    additions: np.ndarray
    omega: float
    z: np.ndarray
    converged: bool
    omega_trace: Optional[np.ndarray] = None

    @property
    def total_flips(self):
        return int(self.flips.sum())

    @property
    def total_additions(self):
        return int(self.additions.sum())


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def initial_vector(y, schedule_initial, rng=None, b0=None):
    if schedule_initial == "mf":
        return sign(y)
    if schedule_initial == "random":
        rng = as_generator(rng)
        return rng.integers(0, 2, size=np.shape(y)[0]).astype(np.float64) * 2.0 - 1.0
    if b0 is None:
        raise ValueError("initial='given' requires b0")
    return check_bits(b0, np.shape(y)[0], "b0").copy()


def cascade(Ay, H, b0, stages, rule="parallel", max_sweeps=DEFAULT_MAX_SWEEPS, trace=False):
    """Run the compiled stage cascade from ``b0``; returns a DetectionResult."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    Ay = np.ascontiguousarray(Ay, dtype=np.float64)
    stage_arr = np.asarray(stages, dtype=np.int64)
    K = Ay.shape[0]
    cap = 4 * K * len(stages) + 64 if trace else 0
    while True:
        b = np.array(b0, dtype=np.float64)
        out = np.empty((len(stages), K))
        counts = np.zeros((len(stages), 2), dtype=np.int64)
        buf = np.empty(cap)
        ntrace = np.zeros(1, dtype=np.int64)
        omega, z, ok = _kernels.run_cascade(H, Ay, b, stage_arr, GROUP_RULES[rule],
                                            max_sweeps, out, counts, buf, ntrace,
                                            gain_tolerance(Ay, H))
        if not trace or ntrace[0] < cap:
            break
        cap *= 4
    return DetectionResult(
        b_hat=b, stages=tuple(int(j) for j in stages), stage_decisions=out,
        flips=counts[:, 0].copy(), additions=counts[:, 1].copy(), omega=float(omega),
        z=z, converged=bool(ok), omega_trace=buf[: ntrace[0]].copy() if trace else None,
    )


def run_wslas(y, channel, schedule=Schedule(), rng=None, b0=None, trace=False,
              max_sweeps=DEFAULT_MAX_SWEEPS):
    """Detect ``y`` with the stage cascade described by ``schedule``."""
    y = np.asarray(y, dtype=np.float64)
    start = initial_vector(y, schedule.initial, rng, b0)
    return cascade(channel.A * y, channel.H, start, schedule.stages, schedule.rule,
                   max_sweeps, trace)


class WSLASDetector(BaseDetector):
    """Cascaded group LAS detector.

    Parameters
    ----------
    stages : tuple of int
        Group sizes, run in order; the last one must be 1.
    initial : {"mf", "random"}
        Starting vector: matched-filter decisions or i.i.d. random bits.
    group_rule : {"parallel", "exhaustive"}
        How a group picks the bits to flip (see module docstring).
    max_sweeps : int
        Safety cap on sweeps per stage.
    random_state : int, Generator or None
        Source of random initial vectors in ``predict``.
    """

    def __init__(self, stages=(8, 4, 2, 1), initial="mf", group_rule="parallel",
                 max_sweeps=DEFAULT_MAX_SWEEPS, random_state=None):
        self.stages = stages
        self.initial = initial
        self.group_rule = group_rule
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    @property
    def schedule(self):
        return Schedule(tuple(self.stages), self.initial, self.group_rule)

    def _fit(self, channel):
        self.schedule_ = self.schedule
        self.H_ = np.ascontiguousarray(channel.H)
        self.A_ = np.asarray(channel.A)
        self._rng = as_generator(self.random_state)

    def detect(self, y, rng=None, b0=None, trace=False):
        """Full result (stage decisions, counters) for one statistic vector."""
        y = np.asarray(y, dtype=np.float64)
        start = initial_vector(y, self.schedule_.initial,
                               self._rng if rng is None else rng, b0)
        return cascade(self.A_ * y, self.H_, start, self.schedule_.stages,
                       self.schedule_.rule, self.max_sweeps, trace)

    def _predict(self, Y):
        return np.stack([self.detect(y).b_hat for y in Y])


class SLASDetector(WSLASDetector):
    """Bit-by-bit LAS (a single stage with group size one)."""

    def __init__(self, initial="mf", max_sweeps=DEFAULT_MAX_SWEEPS, random_state=None):
        super().__init__((1,), initial, "parallel", max_sweeps, random_state)
