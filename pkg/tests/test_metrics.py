import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcnfft.metrics import (DB_FLOOR, align_global_phase, cut_directions, empirical_snr_db, ff_cut_error_db,
                            nf_deviation_db, pattern_db, validity_mask)
from pcnfft.scenario import TruncationSpec


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_align_examples():
    np.testing.assert_allclose(align_global_phase(np.array([1j, 0]), np.array([1, 0])), [1, 0])
    x = np.array([1 + 1j, 2, -0.5j])
    np.testing.assert_allclose(align_global_phase(np.exp(2.1j) * x, x), x, atol=1e-15)
    with pytest.warns(RuntimeWarning):
        out = align_global_phase(np.array([1.0, 0]), np.array([0, 1.0]))
    np.testing.assert_array_equal(out, [1.0, 0])


def test_align_is_minimal_over_phases():
    rng = np.random.default_rng(0)
    x, ref = crandn(rng, 8), crandn(rng, 8)
    best = np.linalg.norm(align_global_phase(x, ref) - ref)
    for phi in rng.uniform(0, 2 * np.pi, 100):
        assert best <= np.linalg.norm(np.exp(1j * phi) * x - ref) + 1e-12


def test_nf_deviation_examples():
    rng = np.random.default_rng(1)
    A = crandn(rng, 10, 4)
    z = crandn(rng, 4)
    b = A @ z
    assert nf_deviation_db(A, z, b) == DB_FLOOR
    assert nf_deviation_db(A, np.exp(0.9j) * z, b) == DB_FLOOR
    assert nf_deviation_db(A, np.exp(0.9j) * z, b, align=False) > -20
    assert nf_deviation_db(A, 1.1 * z, b) == pytest.approx(-20.0, abs=1e-10)
    assert nf_deviation_db(A, np.zeros(4), b) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        nf_deviation_db(A, z, np.zeros(10))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(0, 2**32 - 1))
def test_nf_deviation_scale_invariant(scale, seed):
    rng = np.random.default_rng(seed)
    A = crandn(rng, 6, 3)
    z, b = crandn(rng, 3), crandn(rng, 6)
    assert nf_deviation_db(A, scale * z, scale * b) == pytest.approx(nf_deviation_db(A, z, b), abs=1e-9)


def _cut_patterns(rng, D=360):
    ref = crandn(rng, D, 2)
    return ref


def test_ff_cut_identical_and_scaled():
    rng = np.random.default_rng(2)
    ref = _cut_patterns(rng)
    mask = np.ones(360, bool)
    mask[50:100] = False
    err, inv = ff_cut_error_db(ref, ref, mask)
    assert err == DB_FLOOR
    err2, inv2 = ff_cut_error_db(2 * np.exp(0.4j) * ref, ref, mask)
    assert err2 == DB_FLOOR and inv2 == pytest.approx(inv, abs=1e-10)
    peak = np.max(np.linalg.norm(ref[mask], axis=1))
    assert inv == pytest.approx(20 * np.log10(np.max(np.linalg.norm(ref[~mask], axis=1)) / peak), abs=1e-10)


def test_ff_cut_small_perturbation_level():
    rng = np.random.default_rng(3)
    ref = np.ones((360, 2), complex)
    est = ref.copy()
    est[:, 0] += 1e-3  # peak over the valid set becomes |(1.001, 1)|
    err, _ = ff_cut_error_db(est, ref, np.ones(360, bool))
    expected = np.linalg.norm(est[0] / np.linalg.norm(est[0]) - ref[0] / np.sqrt(2))
    assert err == pytest.approx(20 * np.log10(expected), abs=0.5)
    assert err < -60


def test_ff_cut_edge_cases():
    rng = np.random.default_rng(4)
    ref = _cut_patterns(rng, 10)
    err, inv = ff_cut_error_db(ref, ref, np.ones(10, bool))
    assert np.isnan(inv)
    with pytest.raises(ValueError):
        ff_cut_error_db(ref, ref, np.zeros(10, bool))
    with pytest.raises(ValueError):
        ff_cut_error_db(ref[:5], ref, np.ones(10, bool))
    valid = np.arange(10) < 5
    err, inv = ff_cut_error_db(np.zeros_like(ref), ref, valid)
    mags = np.linalg.norm(ref[valid], axis=1)
    rms = np.sqrt(np.mean((mags / mags.max()) ** 2))
    assert err == pytest.approx(20 * np.log10(rms), abs=1e-12) and inv == DB_FLOOR


def test_pattern_db_peak_is_zero():
    rng = np.random.default_rng(5)
    p = _cut_patterns(rng, 20)
    p[3] = 0
    mask = np.ones(20, bool)
    out = pattern_db(p, mask)
    assert out.max() == pytest.approx(0.0, abs=1e-12) and out[3] == DB_FLOOR


def test_empirical_snr():
    rng = np.random.default_rng(6)
    b = crandn(rng, 200_000)
    sigma = np.max(np.abs(b)) / 1e3
    noise = sigma * crandn(rng, b.size) / np.sqrt(2)
    snr = empirical_snr_db(b, b + noise)
    assert snr == pytest.approx(60.0, abs=0.2)
    assert empirical_snr_db(b, b + 2 * noise) == pytest.approx(snr - 20 * np.log10(2), abs=1e-9)
    assert empirical_snr_db(b, b) == float("inf")


def test_cut_directions_unit_and_horizontal():
    phi, d = cut_directions()
    assert phi.size == 360 and phi[0] == 0 and phi[-1] == 359
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1, rtol=1e-15)
    np.testing.assert_allclose(d[:, 2], 0, atol=1e-16)


def test_validity_mask_gaps_and_band():
    trunc = TruncationSpec(-1.0, 1.0, [(50, 100)])
    phi, d = cut_directions()
    mask = validity_mask(trunc, 3.0, d)
    np.testing.assert_array_equal(~mask, (phi > 50) & (phi < 100))
    # polar directions never reach the wall; steep rays leave the band
    steep = np.array([[0, 0, 1.0], [1, 0, 1.0] / np.sqrt(2), [1, 0, 0.2] / np.linalg.norm([1, 0, 0.2])])
    np.testing.assert_array_equal(validity_mask(trunc, 3.0, steep), [False, False, True])


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 170), st.floats(1, 90), st.floats(0, 20), st.floats(0.5, 5))
def test_validity_mask_shrinks_with_larger_gap(start, width, grow, radius):
    a, b = start, start + width
    small = TruncationSpec(-1.0, 1.0, [(a, b)])
    big = TruncationSpec(-1.0, 1.0, [(max(0.0, a - grow), min(360.0, b + grow))])
    rng = np.random.default_rng(0)
    d = rng.standard_normal((200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    m_small, m_big = validity_mask(small, radius, d), validity_mask(big, radius, d)
    assert not np.any(m_big & ~m_small)
