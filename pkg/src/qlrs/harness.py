"""Monte Carlo BER/BFR engine and the figure-level experiment drivers.

A trial sends one vector of ``total_bits`` random bits through one channel
realization: the sample's fixed spreading matrix in short-sequence mode, a
freshly drawn one in long-sequence mode. Trials are grouped into chunks
whose composition depends only on the configuration, never on the number
of workers, and every trial draws from its own ``(seed, sample, trial)``
stream. Counters are integers summed in any order, so a run is
bit-identical for any ``workers``.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import binomtest

from .asymptotics import LIMITS, single_user_ber
from .channel import SystemConfig, make_instance, random_bits
from .las import DEFAULT_MAX_SWEEPS, Schedule, WSLASDetector
from .refdet import DetectorKind, make_detector
from .streams import sample_rng, trial_rng

log = logging.getLogger(__name__)

LAS_KINDS = ("slas", "wslas")
DEFAULT_DETECTORS = ("mmse_df", "sic", "slas", "wslas")
CHUNK_BITS = 4096
ROUND_CHUNKS = 8
# reference BK schedule for the load sweep; loads >= 0.8 use the last entry
REFERENCE_BK_SCHEDULE = ((0.1, 1136), (0.2, 1600), (0.3, 1960), (0.4, 2264), (0.5, 2536),
                     (0.6, 2784), (0.7, 3000), (0.8, 3328))

_FLIPS, _ADDS = 2, 3


def wilson_interval(errors, bits, confidence=0.95):
    """Wilson score interval for a binomial proportion; (nan, nan) if no bits."""
    if bits == 0:
        return float("nan"), float("nan")
    ci = binomtest(int(errors), int(bits)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class TrialPlan:
    """What to simulate and when to stop.

    Parameters
    ----------
    config : SystemConfig
        System dimensions, SNR, sequence mode, sample count and master seed.
    detectors : tuple of str
        Detector kinds. ``"wslas"`` reports every stage of its cascade.
    initial : {"mf", "random"}
        Initial vector of the LAS detectors.
    min_errors : int
        A detector stops once it has accumulated this many bit errors.
    max_bits : int
        Per-detector budget; hitting it flags the summary.
    stages, group_rule, max_sweeps
        Passed to the WSLAS detector.
    """

    config: SystemConfig
    detectors: tuple = DEFAULT_DETECTORS
    initial: str = "mf"
    min_errors: int = 200
    max_bits: int = 10_000_000
    stages: tuple = (8, 4, 2, 1)
    group_rule: str = "parallel"
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __post_init__(self):
        dets = tuple(DetectorKind(d).value for d in self.detectors)
        if not dets:
            raise ValueError("no detectors requested")
        if len(set(dets)) != len(dets):
            raise ValueError("duplicate detectors")
        object.__setattr__(self, "detectors", dets)
        object.__setattr__(self, "stages", tuple(int(j) for j in self.stages))
        Schedule(self.stages, self.initial, self.group_rule)
        if self.initial not in ("mf", "random"):
            raise ValueError("initial must be 'mf' or 'random'")
        if self.min_errors < 1:
            raise ValueError("min_errors must be at least 1")
        if self.max_bits < self.config.total_bits:
            raise ValueError("max_bits is below the bits of a single trial")

    @property
    def sample_count(self):
        return self.config.samples

    @property
    def chunk_trials(self):
        return max(1, CHUNK_BITS // self.config.total_bits)

    def labels(self, kind):
        if kind == "wslas":
            return tuple(f"wslas:J{j}" for j in self.stages)
        return (kind,)

    @property
    def all_labels(self):
        return tuple(lab for d in self.detectors for lab in self.labels(d))

    def stop_label(self, kind):
        return self.labels(kind)[-1]


@dataclass(frozen=True)
class DetectorStats:
    """Counters of one detector label on one sample (or pooled, ``sample="avg"``)."""

    label: str
    sample: object
    bits: int
    errors: int
    flips: int
    additions: int
    total_bits: int

    @property
    def ber(self):
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ber_ci95(self):
        return wilson_interval(self.errors, self.bits)

    @property
    def bfr(self):
        return self.flips / self.bits if self.bits else float("nan")

    @property
    def additions_per_bit(self):
        return self.additions / self.bits if self.bits else float("nan")

    @property
    def per_bit_complexity(self):
        """Additions per transmission divided by BK (equals BFR times BK)."""
        return self.additions_per_bit


@dataclass
class McSummary:
    plan: TrialPlan
    counts: dict
    flagged_labels: tuple = ()
    wall_time: float = 0.0
    trials: dict = field(default_factory=dict)

    @property
    def flagged(self):
        return bool(self.flagged_labels)

    @property
    def labels(self):
        return self.plan.all_labels

    def stats(self, label, sample="avg"):
        c = self.counts[label]
        row = c.sum(axis=0) if sample == "avg" else c[int(sample) - 1]
        return DetectorStats(label, sample, *(int(v) for v in row),
                             self.plan.config.total_bits)

    def rows(self):
        """Per-sample stats (samples numbered from 1) plus "avg" when there are several."""
        out = []
        n = self.plan.sample_count
        for label in self.labels:
            for s in range(1, n + 1):
                out.append(self.stats(label, s))
            if n > 1:
                out.append(self.stats(label, "avg"))
        return out

    def ber(self, label, sample="avg"):
        return self.stats(label, sample).ber

    def bfr(self, label, sample="avg"):
        return self.stats(label, sample).bfr


def _wslas(plan):
    return WSLASDetector(plan.stages, plan.initial, plan.group_rule, plan.max_sweeps)


def _fitted(plan, inst, kinds):
    dets = {}
    for kind in kinds:
        if kind == "wslas":
            dets[kind] = _wslas(plan).fit(inst)
        elif kind == "slas":
            dets[kind] = make_detector(kind, initial=plan.initial,
                                       max_sweeps=plan.max_sweeps).fit(inst)
        else:
            dets[kind] = make_detector(kind).fit(inst)
    return dets


@lru_cache(maxsize=32)
def _short_sample(plan, sample, kinds):
    inst = make_instance(plan.config, sample_rng(plan.config.master_seed, sample))
    return inst, _fitted(plan, inst, kinds)


def _draw(inst, rng):
    b = random_bits(rng, inst.total_bits)
    m = inst.sigma * rng.standard_normal(inst.total_chips)
    y = inst.S.T @ (inst.S @ (inst.A * b) + m)
    return b, y


def _run_chunk(plan, sample, start, stop, kinds):
    """Counters {label: [bits, errors, flips, additions]} for trials [start, stop)."""
    cfg = plan.config
    long_mode = cfg.mode == "long"
    out = {lab: np.zeros(4, dtype=np.int64) for k in kinds for lab in plan.labels(k)}
    if not long_mode:
        inst, dets = _short_sample(plan, sample, kinds)
    rows = []
    for t in range(start, stop):
        rng = trial_rng(cfg.master_seed, sample, t)
        if long_mode:
            inst = make_instance(cfg, rng)
            dets = _fitted(plan, inst, kinds)
        b, y = _draw(inst, rng)
        # one fixed draw per LAS kind, so a stopped detector never shifts another's stream
        init_seeds = rng.integers(0, 2**63, size=len(LAS_KINDS))
        for kind in kinds:
            if kind not in LAS_KINDS:
                continue
            init_rng = np.random.default_rng(int(init_seeds[LAS_KINDS.index(kind)]))
            res = dets[kind].detect(y, rng=init_rng)
            for s, lab in enumerate(plan.labels(kind)):
                c = out[lab]
                c[0] += b.size
                c[1] += int(np.count_nonzero(res.stage_decisions[s] != b))
                # stage s starts from stage s-1, so counters accumulate
                c[_FLIPS] += int(res.flips[: s + 1].sum())
                c[_ADDS] += int(res.additions[: s + 1].sum())
        if long_mode:
            _linear_counts(out, plan, dets, kinds, b[None, :], y[None, :])
        else:
            rows.append((b, y))
    if rows:
        B = np.stack([r[0] for r in rows])
        Y = np.stack([r[1] for r in rows])
        _linear_counts(out, plan, dets, kinds, B, Y)
    return sample, out


def _linear_counts(out, plan, dets, kinds, B, Y):
    for kind in kinds:
        if kind in LAS_KINDS:
            continue
        c = out[kind]
        c[0] += B.size
        c[1] += int(np.count_nonzero(dets[kind].predict(Y) != B))


def _resolve_workers(workers):
    if workers is None or workers == 0:
        return os.cpu_count() or 1
    if workers < 0:
        raise ValueError("workers must be non-negative")
    return int(workers)


def run_trials(plan, workers=1):
    """Simulate until every detector has ``min_errors`` errors or exhausts ``max_bits``.

    Trials are processed in rounds of chunks; the stop rule is checked only
    between rounds, on counters pooled over samples.
    """
    t0 = time.perf_counter()
    cfg = plan.config
    n_samples = cfg.samples
    labels = plan.all_labels
    counts = {lab: np.zeros((n_samples, 4), dtype=np.int64) for lab in labels}
    next_trial = [0] * n_samples
    active = list(plan.detectors)
    flagged = []
    ct = plan.chunk_trials
    workers = _resolve_workers(workers)
    log.info("run_trials config=%s plan=%s workers=%d", cfg, plan, workers)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while active:
            tasks = []
            for _ in range(ROUND_CHUNKS):
                for s in range(n_samples):
                    tasks.append((s, next_trial[s], next_trial[s] + ct))
                    next_trial[s] += ct
            kinds = tuple(active)
            if pool is None:
                results = [_run_chunk(plan, s, a, b, kinds) for s, a, b in tasks]
            else:
                futures = [pool.submit(_run_chunk, plan, s, a, b, kinds) for s, a, b in tasks]
                results = [f.result() for f in futures]
            for s, out in results:
                for lab, c in out.items():
                    counts[lab][s] += c
            still = []
            for kind in active:
                tot = counts[plan.stop_label(kind)].sum(axis=0)
                if tot[1] >= plan.min_errors:
                    continue
                if tot[0] >= plan.max_bits:
                    flagged.extend(plan.labels(kind))
                    log.warning("%s exhausted %d bits with %d errors", kind, tot[0], tot[1])
                    continue
                still.append(kind)
            active = still
    finally:
        if pool is not None:
            pool.shutdown()
    return McSummary(plan, counts, tuple(flagged), time.perf_counter() - t0,
                     {s + 1: n for s, n in enumerate(next_trial)})


@dataclass
class GridPoint:
    """One point of a figure sweep with its simulation and limit values."""

    experiment: str
    alpha: float
    snr_db: float
    bk: int
    B: int
    K: int
    summary: McSummary
    limits: list

    @property
    def flagged(self):
        return self.summary.flagged


def limit_points(alpha, snr_db, tanaka=False):
    """Limit-curve points at one (alpha, SNR), plus the single-user bound."""
    names = [n for n in LIMITS if tanaka or n != "gml"]
    pts = [LIMITS[n](alpha, snr_db) for n in names]
    return pts, single_user_ber(snr_db)


def exact_load_dims(alpha, K_min=8, max_den=100):
    """Smallest (K, N) with K >= K_min and K / N equal to ``alpha`` as a fraction."""
    frac = Fraction(alpha).limit_denominator(max_den)
    if frac <= 0:
        raise ValueError("load must be positive")
    m = -(-K_min // frac.numerator)
    return frac.numerator * m, frac.denominator * m


def _config(K, alpha, bk, snr_db, seed, n_samples, sequence_mode="auto", N=None):
    if bk % K:
        raise ValueError(f"BK = {bk} is not a multiple of K = {K}")
    if N is None:
        N = max(1, int(round(K / alpha)))
    return SystemConfig(K=K, N=N, B=bk // K, snr_db=snr_db, sequence_mode=sequence_mode,
                        n_samples=n_samples, master_seed=seed)


def _point(experiment, cfg, plan, workers, tanaka):
    summary = run_trials(plan, workers)
    lims = limit_points(cfg.alpha, cfg.snr_db, tanaka)
    return GridPoint(experiment, cfg.alpha, cfg.snr_db, cfg.total_bits, cfg.B, cfg.K,
                     summary, lims)


def fig1_driver(bk_ladder=(8, 16, 32, 64, 128, 256, 512, 1024), K=8, alpha=0.8,
                snr_db=11.0, seed=0, detectors=DEFAULT_DETECTORS, min_errors=200,
                max_bits=10_000_000, n_samples=5, workers=1, tanaka=False, **plan_kw):
    """BER/BFR versus BK at fixed load and SNR with MF initial."""
    out = []
    for bk in bk_ladder:
        cfg = _config(K, alpha, int(bk), snr_db, seed, n_samples)
        plan = TrialPlan(cfg, detectors, "mf", min_errors, max_bits, **plan_kw)
        out.append(_point("fig1", cfg, plan, workers, tanaka))
    return out


def fig2_driver(snr_ladder=tuple(range(0, 16)), bk=1024, K=8, alpha=0.8, seed=0,
                detectors=DEFAULT_DETECTORS, min_errors=200, max_bits=10_000_000,
                n_samples=5, workers=1, tanaka=False, initial="random",
                mf_complexity=True, **plan_kw):
    """BER/BFR versus SNR with random initial.

    With ``mf_complexity`` every point also runs the LAS detectors from the
    MF initial (experiment ``"fig2_mf_initial"``), the setting in which the
    complexity bound of 0.33 BK is stated.
    """
    out = []
    las = tuple(d for d in detectors if d in LAS_KINDS)
    for snr in snr_ladder:
        cfg = _config(K, alpha, int(bk), float(snr), seed, n_samples)
        plan = TrialPlan(cfg, detectors, initial, min_errors, max_bits, **plan_kw)
        out.append(_point("fig2", cfg, plan, workers, tanaka))
        if mf_complexity and las:
            mplan = replace(plan, detectors=las, initial="mf")
            out.append(_point("fig2_mf_initial", cfg, mplan, workers, tanaka))
    return out


def reference_bk(alpha):
    """BK of the reference load sweep at ``alpha`` (nearest tabulated load below)."""
    bk = REFERENCE_BK_SCHEDULE[0][1]
    for a, v in REFERENCE_BK_SCHEDULE:
        if alpha >= a - 1e-12:
            bk = v
    return bk


def scaled_bk(alpha, K, scale):
    """The reference schedule times ``scale``, rounded to a positive multiple of K."""
    return max(K, int(round(reference_bk(alpha) * scale / K)) * K)


def fig3_driver(alpha_ladder=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3),
                K=8, snr_db=11.0, seed=0, scale=0.25, detectors=DEFAULT_DETECTORS,
                min_errors=200, max_bits=10_000_000, n_samples=5, workers=1, tanaka=False,
                exact_load=True, **plan_kw):
    """BER/BFR versus load with MF initial and the (scaled) reference BK schedule.

    With ``exact_load`` the user count is the smallest multiple of the load's
    numerator that is at least ``K`` (e.g. 13 users on 10 chips for 1.3), so
    every load is realized exactly; otherwise ``N = round(K / alpha)`` and
    the realized load ``K / N`` is reported.
    """
    out = []
    for alpha in alpha_ladder:
        if exact_load:
            Ka, N = exact_load_dims(float(alpha), K)
        else:
            Ka, N = K, None
        bk = scaled_bk(alpha, Ka, scale)
        cfg = _config(Ka, float(alpha), bk, snr_db, seed, n_samples, N=N)
        plan = TrialPlan(cfg, detectors, "mf", min_errors, max_bits, **plan_kw)
        out.append(_point("fig3", cfg, plan, workers, tanaka))
    return out
