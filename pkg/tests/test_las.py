import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlrs import _kernels
from qlrs.channel import ChannelInstance
from qlrs.las import (LikelihoodState, Schedule, SLASDetector, WSLASDetector, apply_flip,
                      cascade, delta_likelihood, gplas_stage, is_lml_point, run_wslas)
from qlrs.refdet import gml_exhaustive

from conftest import random_instance


def _problem(seed, K, alpha, snr_db=6.0):
    inst = random_instance(K, max(1, int(round(K / alpha))), snr_db, seed)
    rng = np.random.default_rng(seed)
    b = rng.choice([-1.0, 1.0], K)
    y = inst.S.T @ (inst.S @ (inst.A * b) + inst.sigma * rng.standard_normal(inst.total_chips))
    return inst, b, y, rng


def test_delta_matches_recompute(small_channel, rng):
    y = rng.standard_normal(8)
    state = LikelihoodState.from_channel(y, small_channel, np.sign(y) + (y == 0))
    for flip in ([0], [1, 3], [2, 5, 7], range(8)):
        before = state.recomputed_omega()
        gain = delta_likelihood(state, flip)
        apply_flip(state, flip)
        assert state.recomputed_omega() - before == pytest.approx(gain, abs=1e-10)
        assert state.omega == pytest.approx(state.recomputed_omega(), abs=1e-10)
        assert state.is_consistent()


def test_flip_counters(small_channel):
    state = LikelihoodState.from_channel(np.ones(8), small_channel, np.ones(8))
    apply_flip(state, [1, 2, 3])
    apply_flip(state, [4])
    assert state.flips == 4
    assert state.additions == 4 * 8


def test_hand_example_two_users():
    # R = [[1, .6], [.6, 1]]; b = (+1, -1) noiseless gives y = (0.4, -0.4)
    R = np.array([[1.0, 0.6], [0.6, 1.0]])
    inst = ChannelInstance.from_crosscorrelation(R)
    y = R @ np.array([1.0, -1.0])
    res = run_wslas(y, inst, Schedule((1,)), b0=np.array([1.0, 1.0]))
    assert np.array_equal(res.b_hat, [1, -1])
    # Omega(1,1) = 2*0 - 3.2 = -3.2; Omega(1,-1) = 2*0.8 - 0.8 = 0.8
    assert res.omega == pytest.approx(0.8)


def test_orthogonal_noiseless_no_flips(orthogonal_channel):
    b = np.array([1.0, -1, 1, 1, -1, -1])
    res = WSLASDetector().fit(orthogonal_channel).detect(b)
    assert res.total_flips == 0 and np.array_equal(res.b_hat, b)


@pytest.mark.parametrize("rule", ["parallel", "exhaustive"])
@pytest.mark.parametrize("alpha", [0.2, 0.8, 1.2])
def test_kernel_matches_reference(rule, alpha):
    for seed in range(25):
        inst, b, y, rng = _problem(seed, 20, alpha)
        b0 = rng.choice([-1.0, 1.0], 20)
        state = LikelihoodState.from_channel(y, inst, b0)
        for J in (8, 4, 2, 1):
            gplas_stage(state, J, rule=rule)
        res = run_wslas(y, inst, Schedule((8, 4, 2, 1), "given", rule), b0=b0)
        assert np.array_equal(res.b_hat, state.b_hat)
        assert res.total_flips == state.flips
        assert res.total_additions == state.additions
        assert res.omega == pytest.approx(state.omega, rel=1e-9, abs=1e-9)


def test_exhaustive_full_group_is_gml():
    # one group covering every bit picks the best of all 2^K - 1 patterns;
    # identical chip columns can tie, so compare metrics
    for seed in range(20):
        inst, b, y, rng = _problem(seed, 10, 1.0, 3.0)
        res = run_wslas(y, inst, Schedule((10, 1), "mf", "exhaustive"))
        g = gml_exhaustive(y, inst.A, inst.H)
        omega = lambda v: 2 * v @ (inst.A * y) - v @ inst.H @ v
        assert omega(res.stage_decisions[0]) == pytest.approx(omega(g), abs=1e-12)


def test_slas_outputs_are_lml_points_by_enumeration():
    for seed in range(20):
        inst, b, y, rng = _problem(seed, 10, 1.2, 4.0)
        mask = _kernels.lml_mask(inst.A * y, np.ascontiguousarray(inst.H),
                                 np.empty(1 << 10, dtype=np.bool_))
        res = SLASDetector(initial="random").fit(inst).detect(y, rng=rng)
        idx = int(((res.b_hat < 0) * (1 << np.arange(10))).sum())
        assert mask[idx]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), K=st.integers(2, 32),
       alpha=st.sampled_from([0.2, 0.8, 1.2]), rule=st.sampled_from(["parallel", "exhaustive"]))
def test_ascent_properties(seed, K, alpha, rule):
    inst, b, y, rng = _problem(seed, K, alpha)
    det = WSLASDetector(group_rule=rule, initial="random").fit(inst)
    res = det.detect(y, rng=rng, trace=True)
    assert np.all(np.diff(res.omega_trace) > 0)
    assert is_lml_point(res.b_hat, res.z, inst.H)
    state = LikelihoodState.from_channel(y, inst, res.b_hat)
    assert np.allclose(state.z, res.z, atol=1e-8)
    # a second pass from the output flips nothing
    again = run_wslas(y, inst, Schedule(det.stages, "given", rule), b0=res.b_hat)
    assert again.total_flips == 0


def test_trace_length_counts_accepted_patterns(small_channel, rng):
    y = rng.standard_normal(8) * 2
    res = WSLASDetector(stages=(1,)).fit(small_channel).detect(y, trace=True)
    # single-bit stages accept one bit per pattern
    assert len(res.omega_trace) == res.total_flips + 1
    assert res.omega_trace[-1] == pytest.approx(res.omega)


def test_predict_shapes_and_random_state(small_channel, rng):
    Y = rng.standard_normal((5, 8))
    det = WSLASDetector(initial="random", random_state=3).fit(small_channel)
    out = det.predict(Y)
    assert out.shape == (5, 8)
    assert det.predict(Y[0]).shape == (8,)
    again = WSLASDetector(initial="random", random_state=3).fit(small_channel).predict(Y)
    assert np.array_equal(out, again)


def test_estimator_params():
    det = WSLASDetector(stages=(4, 1), group_rule="exhaustive")
    p = det.get_params()
    assert p["stages"] == (4, 1) and p["group_rule"] == "exhaustive"
    assert SLASDetector().get_params()["initial"] == "mf"


@pytest.mark.parametrize("kw", [dict(stages=(4, 2)), dict(stages=()), dict(stages=(0, 1)),
                                dict(initial="zeros"), dict(rule="greedy"),
                                dict(stages=(31, 1))])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        Schedule(**kw)


def test_given_initial_requires_b0(small_channel):
    with pytest.raises(ValueError):
        run_wslas(np.ones(8), small_channel, Schedule(initial="given"))


def test_cascade_sweep_cap_reports_nonconvergence():
    inst, b, y, rng = _problem(0, 16, 1.2, 2.0)
    res = cascade(inst.A * y, inst.H, -np.sign(y), (1,), max_sweeps=1)
    full = cascade(inst.A * y, inst.H, -np.sign(y), (1,))
    assert full.converged
    assert res.converged == (res.total_flips == full.total_flips)


def test_zero_gain_ties_are_not_flipped():
    # identical columns with opposite bits: swapping them leaves the metric unchanged
    rng = np.random.default_rng(8)
    chips = rng.choice([-1.0, 1.0], (7, 4))
    chips[:, 1] = chips[:, 0]
    inst = ChannelInstance(chips / np.sqrt(7), np.ones(4), 0.3)
    b = np.array([1.0, -1.0, 1.0, 1.0])
    y = inst.S.T @ (inst.S @ b + 0.3 * rng.standard_normal(7)) + 0.1 / 3
    res = run_wslas(y, inst, Schedule((2, 1), "given", "exhaustive"), b0=b)
    again = run_wslas(y, inst, Schedule((2, 1), "given", "exhaustive"), b0=res.b_hat)
    assert again.total_flips == 0
    assert is_lml_point(res.b_hat, res.z, inst.H)
