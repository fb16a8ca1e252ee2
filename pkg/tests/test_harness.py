import numpy as np
import pytest

from qlrs.asymptotics import mf_limit_ber
from qlrs.channel import SystemConfig, make_instance, random_bits
from qlrs.harness import (TrialPlan, exact_load_dims, fig1_driver, reference_bk, run_trials,
                          scaled_bk, wilson_interval)
from qlrs.las import WSLASDetector
from qlrs.streams import trial_rng


def test_wilson_known_values():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and hi == pytest.approx(0.037, abs=1e-3)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-3) and hi == pytest.approx(0.5962, abs=1e-3)
    assert all(np.isnan(wilson_interval(0, 0)))


def test_wilson_coverage():
    rng = np.random.default_rng(0)
    p, n = 0.02, 5000
    hits = 0
    for _ in range(1000):
        lo, hi = wilson_interval(rng.binomial(n, p), n)
        hits += lo <= p <= hi
    assert hits >= 930


def test_plan_validation():
    cfg = SystemConfig(K=8, N=10)
    with pytest.raises(ValueError):
        TrialPlan(cfg, min_errors=0)
    with pytest.raises(ValueError):
        TrialPlan(cfg, max_bits=4)
    with pytest.raises(ValueError):
        TrialPlan(cfg, detectors=("mf", "mf"))
    with pytest.raises(ValueError):
        TrialPlan(cfg, detectors=("nope",))
    with pytest.raises(ValueError):
        TrialPlan(cfg, initial="given")
    assert TrialPlan(cfg).all_labels == ("mmse_df", "sic", "slas", "wslas:J8", "wslas:J4",
                                         "wslas:J2", "wslas:J1")


def test_determinism_across_workers():
    cfg = SystemConfig(K=8, N=10, B=24, snr_db=6.0, master_seed=11)
    plan = TrialPlan(cfg, ("mf", "mmse_df", "wslas"), "random", min_errors=300)
    a = run_trials(plan, workers=1)
    b = run_trials(plan, workers=3)
    for lab in plan.all_labels:
        assert np.array_equal(a.counts[lab], b.counts[lab])


def test_accounting_matches_manual_replay():
    cfg = SystemConfig(K=4, N=5, B=2, snr_db=4.0, master_seed=3)
    assert cfg.mode == "long"
    plan = TrialPlan(cfg, ("wslas",), min_errors=1, max_bits=10**6)
    s = run_trials(plan)
    n_trials = s.trials[1]
    assert s.stats("wslas:J1").bits == n_trials * cfg.total_bits
    flips = errors = adds = 0
    for t in range(n_trials):
        rng = trial_rng(3, 0, t)
        inst = make_instance(cfg, rng)
        b = random_bits(rng, inst.total_bits)
        y = inst.S.T @ (inst.S @ (inst.A * b) + inst.sigma * rng.standard_normal(inst.total_chips))
        res = WSLASDetector().fit(inst).detect(y)
        flips += res.total_flips
        adds += res.total_additions
        errors += int(np.count_nonzero(res.b_hat != b))
    st = s.stats("wslas:J1")
    assert (st.flips, st.errors, st.additions) == (flips, errors, adds)
    # every flip costs one addition per bit of the vector
    assert st.additions == st.flips * cfg.total_bits
    assert st.bfr == st.flips / st.bits
    assert st.per_bit_complexity == pytest.approx(st.bfr * cfg.total_bits)


def test_stage_counters_are_cumulative():
    cfg = SystemConfig(K=8, N=10, B=4, master_seed=1)
    s = run_trials(TrialPlan(cfg, ("wslas",), min_errors=50))
    f = [s.stats(f"wslas:J{j}").flips for j in (8, 4, 2, 1)]
    assert f == sorted(f)


def test_noiseless_wslas_error_free():
    cfg = SystemConfig(K=8, N=16, B=64, snr_db=60.0, master_seed=2)
    s = run_trials(TrialPlan(cfg, ("wslas",), min_errors=1, max_bits=100_000))
    st = s.stats("wslas:J1")
    assert st.bits >= 100_000 and st.errors == 0
    assert s.flagged and "wslas:J1" in s.flagged_labels


def test_per_detector_stop():
    cfg = SystemConfig(K=8, N=10, B=64, master_seed=4)
    s = run_trials(TrialPlan(cfg, ("mf", "wslas"), min_errors=200))
    mf, las = s.stats("mf"), s.stats("wslas:J1")
    assert mf.errors >= 200 and las.errors >= 200
    # MF errs far more often, so it stopped after fewer bits
    assert mf.bits < las.bits
    assert not s.flagged


def test_short_mode_samples_and_avg():
    cfg = SystemConfig(K=8, N=10, B=32, master_seed=5)
    s = run_trials(TrialPlan(cfg, ("mf",), min_errors=100))
    rows = s.rows()
    assert [r.sample for r in rows] == [1, 2, 3, 4, 5, "avg"]
    assert rows[-1].bits == sum(r.bits for r in rows[:-1])
    assert rows[-1].errors == sum(r.errors for r in rows[:-1])


def test_mf_near_limit_at_bk_1024():
    cfg = SystemConfig(K=8, N=10, B=128, snr_db=11.0, master_seed=6)
    s = run_trials(TrialPlan(cfg, ("mf",), min_errors=2000))
    st = s.stats("mf")
    lo, hi = st.ber_ci95
    assert abs(st.ber - mf_limit_ber(0.8, 11.0).ber) <= 3 * (hi - lo)


def test_bk_schedule():
    assert reference_bk(0.1) == 1136 and reference_bk(0.75) == 3000 and reference_bk(1.3) == 3328
    assert scaled_bk(0.8, 8, 0.25) == 832
    assert exact_load_dims(1.3) == (13, 10)
    assert exact_load_dims(0.1) == (8, 80)


def test_fig1_driver_points():
    pts = fig1_driver((8, 16), detectors=("mf", "wslas"), min_errors=20)
    assert [p.bk for p in pts] == [8, 16]
    assert [p.B for p in pts] == [1, 2]
    assert pts[0].alpha == pytest.approx(0.8)
    with pytest.raises(ValueError):
        fig1_driver((12,), K=8)
