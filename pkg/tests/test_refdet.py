from itertools import product

import numpy as np
import pytest

from qlrs.channel import ChannelInstance
from qlrs.refdet import (MMSE, MMSEDF, SIC, Decorrelator, ExhaustiveGML, MatchedFilter,
                         decorrelator_detect, gml_exhaustive, make_detector, mf_detect,
                         mmse_detect, mmse_df_detect, sic_detect)

from conftest import random_instance


def _data(seed, K=8, N=10, snr=8.0, amplitudes=None, n=20):
    inst = random_instance(K, N, snr, seed, amplitudes)
    rng = np.random.default_rng(seed)
    B = rng.choice([-1.0, 1.0], (n, K))
    noise = inst.sigma * rng.standard_normal((n, inst.total_chips))
    Y = (B * inst.A) @ inst.S.T @ inst.S + noise @ inst.S
    return inst, B, Y


def _naive_df(y, R, A, sigma, order, mmse=True):
    """Per-user MMSE (or MF) over the undetected users after cancelling detected ones."""
    K = len(y)
    b = np.zeros(K)
    done = []
    for k in order:
        rest = [j for j in order if j not in done]
        v = y - R[:, done] @ (A[done] * b[done]) if done else y.copy()
        if mmse:
            M = R[np.ix_(rest, rest)] + np.diag(sigma**2 / A[rest] ** 2)
            x = np.linalg.solve(M, v[rest])[0]
        else:
            x = v[k]
        b[k] = 1.0 if x >= 0 else -1.0
        done.append(k)
    return b


def test_mf_sign_zero_is_plus():
    assert mf_detect(np.array([0.0, -0.0, -1e-300, 2.0])).tolist() == [1, 1, -1, 1]


def test_decorrelator_matches_lstsq():
    inst, B, Y = _data(0, K=6, N=12)
    ref = np.sign(np.linalg.lstsq(inst.R, Y.T, rcond=None)[0].T)
    assert np.array_equal(decorrelator_detect(Y, inst.R), ref)
    assert np.array_equal(Decorrelator().fit(inst).predict(Y), ref)


def test_decorrelator_rank_deficient_flag():
    inst, B, Y = _data(1, K=12, N=8)
    _, singular = decorrelator_detect(Y[0], inst.R, return_rank=True)
    assert singular
    assert Decorrelator().fit(inst).rank_deficient_


def test_mmse_matches_solve():
    inst, B, Y = _data(2, amplitudes=tuple(np.linspace(0.6, 1.4, 8)))
    M = inst.R + np.diag(inst.sigma**2 / inst.A**2)
    ref = np.where(np.linalg.solve(M, Y.T).T >= 0, 1.0, -1.0)
    assert np.array_equal(mmse_detect(Y, inst.R, inst.A, inst.sigma), ref)
    assert np.array_equal(MMSE().fit(inst).predict(Y), ref)


def test_mmse_noiseless_is_decorrelator():
    inst, B, Y = _data(3, K=6, N=12)
    assert np.array_equal(mmse_detect(Y, inst.R, None, 0.0), decorrelator_detect(Y, inst.R))


@pytest.mark.parametrize("amps", [None, (2.0, 1.0, 1.0, 0.5, 1.5, 1.0, 1.0, 0.8)])
def test_mmse_df_matches_naive(amps):
    for seed in range(5):
        inst, B, Y = _data(seed, amplitudes=amps)
        order = np.argsort(-inst.A, kind="stable")
        ref = np.stack([_naive_df(y, inst.R, inst.A, inst.sigma, list(order)) for y in Y])
        assert np.array_equal(mmse_df_detect(Y, inst.R, inst.A, inst.sigma), ref)
        assert np.array_equal(MMSEDF().fit(inst).predict(Y), ref)


def test_sic_matches_naive():
    amps = (1.0, 3.0, 1.0, 2.0, 2.0, 0.5, 1.0, 1.0)
    inst, B, Y = _data(7, amplitudes=amps)
    order = list(np.argsort(-inst.A, kind="stable"))
    assert order[:3] == [1, 3, 4]
    ref = np.stack([_naive_df(y, inst.R, inst.A, inst.sigma, order, mmse=False) for y in Y])
    assert np.array_equal(sic_detect(Y, inst.R, inst.A), ref)
    assert np.array_equal(SIC().fit(inst).predict(Y), ref)


def test_gml_matches_brute_force():
    for seed in range(5):
        inst, B, Y = _data(seed, K=7, N=9, snr=3.0, n=5)
        for y in Y:
            best = max(product([1.0, -1.0], repeat=7),
                       key=lambda b: 2 * np.array(b) @ (inst.A * y) - b @ inst.H @ b)
            g = gml_exhaustive(y, inst.A, inst.H)
            metric = lambda b: 2 * b @ (inst.A * y) - b @ inst.H @ b
            assert metric(g) == pytest.approx(metric(np.array(best)), abs=1e-12)


def test_gml_cap():
    inst = ChannelInstance.orthogonal(21)
    with pytest.raises(ValueError):
        gml_exhaustive(np.ones(21), inst.A, inst.H)
    with pytest.raises(ValueError):
        ExhaustiveGML().fit(inst)


def test_noiseless_orthogonal_all_correct():
    inst = ChannelInstance.orthogonal(6)
    b = np.array([1.0, -1, -1, 1, 1, -1])
    for kind in ("mf", "decorrelator", "mmse", "mmse_df", "sic", "gml", "slas", "wslas"):
        assert np.array_equal(make_detector(kind).fit(inst).predict(b), b), kind


def test_fit_requires_channel():
    with pytest.raises(TypeError):
        MatchedFilter().fit(np.eye(3))
    with pytest.raises(Exception):
        MatchedFilter().predict(np.ones(3))


def test_predict_shape_check():
    det = MatchedFilter().fit(ChannelInstance.orthogonal(3))
    with pytest.raises(ValueError):
        det.predict(np.ones(4))


def test_score():
    inst, B, Y = _data(0, K=4, N=40, snr=30.0)
    assert MMSE().fit(inst).score(Y, B) == 1.0
