import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pcnfft.fields import assemble_forward
from pcnfft.measurement import BCFactors, build_bc, reduce_to_pc
from pcnfft.scenario import (ChannelSet, TruncationSpec, make_cylindrical_trajectory, probe_channels,
                             sample_sphere_sources, standard_probe_array, zero_region_samples)
from pcnfft.solvers import (DegenerateDataError, NumericalError, SolverOptions, augment_with_zero_samples,
                            check_uniqueness, decompose, intensity_objective, lc_augment, reconstruct_sources,
                            solve_linearized_pc, solve_magnitude_only, spectral_init)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def channels_for(groups):
    g = np.asarray(groups)
    return ChannelSet(np.zeros((g.size, 3)), np.tile([1.0, 0, 0], (g.size, 1)), g, np.zeros(g.size, bool))


def pc_problem(rng, m_per_group=4, q=6, n=8):
    """Consistent partially coherent data on a random operator."""
    g = np.repeat(np.arange(q), m_per_group)
    A = crandn(rng, g.size, n)
    z = crandn(rng, n)
    b = A @ z
    pc = reduce_to_pc(b, channels_for(g))
    return A, z, b, pc


# ------------------------------------------------------------------ decompose

def test_identity_has_full_rank_and_zero_projector():
    bun = decompose(np.eye(5))
    assert bun.rank == 5
    np.testing.assert_allclose(bun.projector(), 0, atol=1e-15)


def test_duplicated_column_loses_one_rank():
    rng = np.random.default_rng(0)
    A = crandn(rng, 5, 4)
    A[:, 3] = A[:, 1]
    assert decompose(A).rank == np.linalg.matrix_rank(A) == 3


def test_threshold_arithmetic():
    A = np.diag([1.0, 0.4])
    assert decompose(A, SolverOptions(svd_threshold=0.5)).rank == 1
    assert decompose(A, SolverOptions(svd_threshold=0.3)).rank == 2


def test_non_finite_matrix_raises():
    with pytest.raises(NumericalError):
        decompose(np.array([[1.0, np.nan]]))


def test_solver_options_validation():
    for bad in (dict(svd_threshold=0.0), dict(svd_threshold=1.0), dict(tikhonov=-1), dict(zero_weight=0)):
        with pytest.raises(ValueError):
            SolverOptions(**bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 20), st.integers(0, 2**32 - 1), st.booleans())
def test_projector_and_pseudoinverse_identities(m, n, seed, deficient):
    rng = np.random.default_rng(seed)
    A = crandn(rng, m, n)
    if deficient and n > 1:
        A = A[:, :1] @ crandn(rng, 1, n) + A[:, :n // 2] @ crandn(rng, n // 2, n)
    bun = decompose(A)
    smax = bun.s[0]
    P = bun.projector()
    assert np.linalg.norm(A @ bun.pinv() @ A - A) <= 1e-8 * smax
    assert np.linalg.norm(P @ P - P) <= 1e-10 * max(1.0, smax)
    assert np.linalg.norm(P @ A) <= 1e-10 * smax
    X = crandn(rng, m, 3)
    np.testing.assert_allclose(bun.project_out(X), P @ X, atol=1e-10 * np.linalg.norm(X))
    assert np.all(np.diff(bun.s[:bun.rank]) <= 0) and np.all(bun.s[:bun.rank] > bun.threshold * smax)


# ------------------------------------------------------------------ reconstruct

def test_reconstruct_identity_and_regularization_limit():
    b = np.array([1.0, 2j, -3.0])
    np.testing.assert_allclose(reconstruct_sources(decompose(np.eye(3)), b), b)
    rng = np.random.default_rng(1)
    A = crandn(rng, 10, 4)
    bun = decompose(A)
    b = crandn(rng, 10)
    z_pinv = reconstruct_sources(bun, b)
    z_reg = reconstruct_sources(bun, b, SolverOptions(tikhonov=1e6 * bun.s[0]))
    assert np.linalg.norm(z_reg) <= 1e-6 * np.linalg.norm(z_pinv)
    np.testing.assert_allclose(z_pinv, np.linalg.lstsq(A, b, rcond=None)[0], rtol=1e-10)
    with pytest.raises(ValueError):
        reconstruct_sources(bun, np.ones(3))


def test_reconstruct_minimum_norm():
    rng = np.random.default_rng(2)
    A = crandn(rng, 12, 3) @ crandn(rng, 3, 7)
    z = reconstruct_sources(decompose(A), crandn(rng, 12))
    N = scipy.linalg.null_space(A, rcond=1e-10)
    assert N.shape[1] == 4
    assert np.max(np.abs(N.conj().T @ z)) < 1e-10 * np.linalg.norm(z)


# ------------------------------------------------------------------ zero samples

def _truncated_instance():
    basis = sample_sphere_sources(30, 0.4, 1.0)
    trunc = TruncationSpec(-0.5, 0.5, [(50, 100), (250, 300)])
    poses = make_cylindrical_trajectory(2.0, trunc, 10, 0.0, 0.0, 1)
    ch = probe_channels(poses, standard_probe_array("A"))
    zeros = zero_region_samples(2.0, trunc, 1.0, 1.0)
    return basis, ch, zeros


def test_zero_augmentation_shapes_and_rank():
    basis, ch, zeros = _truncated_instance()
    A = assemble_forward(basis, ch)
    rng = np.random.default_rng(3)
    pc = reduce_to_pc(A @ crandn(rng, basis.n), ch)
    bc = build_bc(pc)
    A2, mags, C2, ch2 = augment_with_zero_samples(A, bc.magnitudes, bc.C, ch, zeros, basis, 0.5)
    assert A2.shape == (len(ch) + len(zeros), basis.n)
    np.testing.assert_array_equal(mags[len(ch):], 0)
    assert C2.shape == (A2.shape[0], pc.q) and C2[len(ch):].nnz == 0
    np.testing.assert_allclose(A2[len(ch):], 0.5 * assemble_forward(basis, zeros))
    assert ch2.group_count == ch.group_count and len(ch2) == A2.shape[0]
    r1, r2 = decompose(A).rank, decompose(A2).rank
    assert r2 >= r1
    assert basis.n - r2 < basis.n - r1  # 40 channels cannot pin 60 unknowns; zeros close the gap


def test_zero_augmentation_empty_is_identity():
    basis, ch, _ = _truncated_instance()
    A = assemble_forward(basis, ch)
    mags, C = np.ones(len(ch)), sp.csr_matrix(np.ones((len(ch), 1)))
    out = augment_with_zero_samples(A, mags, C, ch, ChannelSet.empty(), basis)
    assert out[0] is A and out[1] is mags and out[2] is C and out[3] is ch


# ------------------------------------------------------------------ uniqueness

def _rank_instance(rng, m, rank, q):
    A = crandn(rng, m, rank) @ crandn(rng, rank, rank + 2)
    g = np.concatenate([np.arange(q), rng.integers(0, q, m - q)])
    return decompose(A), build_bc(reduce_to_pc(crandn(rng, m), channels_for(g)))


def test_uniqueness_bound_arithmetic():
    rng = np.random.default_rng(4)
    ok = check_uniqueness(*_rank_instance(rng, 12, 8, 5))
    assert (ok.m, ok.rank_A, ok.rank_BC, ok.bound_ok) == (12, 8, 5, True)
    bad = check_uniqueness(*_rank_instance(rng, 10, 8, 5))
    assert (bad.m, bad.rank_A, bad.rank_BC, bad.bound_ok) == (10, 8, 5, False)


def test_false_bound_has_multidimensional_null_space():
    rng = np.random.default_rng(5)
    A = crandn(rng, 20, 10)
    b = A @ crandn(rng, 10)
    pc = reduce_to_pc(b, channels_for(np.arange(20)))  # every channel its own group
    bun, bc = decompose(A), build_bc(pc)
    rep = solve_linearized_pc(bun, bc, pc.s_index)
    assert not rep.bound_ok
    M = bun.project_out(bc.product())
    assert scipy.linalg.null_space(M, rcond=1e-10).shape[1] >= 2
    assert rep.gap_ratio < 1.5


# ------------------------------------------------------------------ linearized solver

def test_linearized_recovers_consistent_data():
    rng = np.random.default_rng(6)
    A, z, b, pc = pc_problem(rng)
    bun, bc = decompose(A), build_bc(pc)
    rep = solve_linearized_pc(bun, bc, pc.s_index)
    assert abs(rep.psi[pc.s_index] - 1) < 1e-12
    assert np.max(np.abs(np.abs(rep.psi) - 1)) < 1e-8
    assert rep.gap_ratio >= 1 and rep.bound_ok
    # true phases up to the pinned one
    psi_true = np.exp(1j * np.angle(b[pc.ref_channel]))
    psi_true /= psi_true[pc.s_index]
    M = bun.project_out(bc.product())
    assert np.linalg.norm(M @ psi_true) <= 1e-10 * np.linalg.norm(M, 2)
    np.testing.assert_allclose(rep.psi, psi_true, atol=1e-9)
    aligned = rep.z * np.vdot(rep.z, z) / abs(np.vdot(rep.z, z))
    np.testing.assert_allclose(aligned, z, atol=1e-8 * np.linalg.norm(z))
    np.testing.assert_allclose(rep.b_hat, bc.product() @ rep.psi)
    assert set(rep.as_dict()) >= {"rank_A", "rank_BC", "bound_ok", "gap_ratio", "sigma_tail"}


def test_linearized_single_group_is_coherent_solve():
    rng = np.random.default_rng(7)
    A = crandn(rng, 10, 4)
    b = crandn(rng, 10)
    pc = reduce_to_pc(b, channels_for(np.zeros(10, int)))
    bun, bc = decompose(A), build_bc(pc)
    rep = solve_linearized_pc(bun, bc, 0)
    np.testing.assert_allclose(rep.psi, [1.0])
    np.testing.assert_allclose(rep.b_hat, bc.product()[:, 0])
    np.testing.assert_allclose(rep.z, np.linalg.lstsq(A, rep.b_hat, rcond=None)[0], rtol=1e-10)


def test_linearized_global_phase_equivariance():
    rng = np.random.default_rng(8)
    A, z, b, pc = pc_problem(rng)
    g = pc.group_of
    bun = decompose(A)
    rep1 = solve_linearized_pc(bun, build_bc(pc), pc.s_index)
    pc2 = reduce_to_pc(b * np.exp(0.77j), channels_for(g), pc.s_index)
    rep2 = solve_linearized_pc(bun, build_bc(pc2), pc.s_index)
    np.testing.assert_allclose(rep2.psi, rep1.psi, atol=1e-10)
    np.testing.assert_allclose(rep2.z, rep1.z, atol=1e-10 * np.linalg.norm(rep1.z))


def test_linearized_repins_vanishing_entry():
    rng = np.random.default_rng(9)
    A = crandn(rng, 8, 2)
    b = crandn(rng, 8)
    b[6:] = 0  # group 1 has no signal, so e_1 spans the null space
    pc = reduce_to_pc(b, channels_for([0, 0, 0, 0, 0, 0, 1, 1]), s_index=0)
    rep = solve_linearized_pc(decompose(A), build_bc(pc), 0)
    assert rep.pinned_index == 1 and rep.s_index == 0
    assert rep.psi[1] == 1


def test_linearized_errors():
    rng = np.random.default_rng(10)
    bun = decompose(np.eye(4))
    bc = build_bc(reduce_to_pc(crandn(rng, 4), channels_for([0, 0, 1, 1])))
    with pytest.raises(DegenerateDataError):
        solve_linearized_pc(bun, bc, 0)
    empty = BCFactors(np.ones(4), sp.csr_matrix((4, 0), dtype=complex))
    with pytest.raises(ValueError):
        solve_linearized_pc(bun, empty, 0)
    with pytest.raises(ValueError):
        solve_linearized_pc(decompose(crandn(rng, 6, 2)), bc, 0)


# ------------------------------------------------------------------ LC rows

def _pair_pc(bi, bj):
    return reduce_to_pc(np.array([bi, bj]), channels_for([0, 0]))


def test_lc_in_phase_and_cancellation():
    A = np.eye(2, dtype=complex)
    _, y = lc_augment(A, _pair_pc(1.0, 1.0))
    assert y[2] == pytest.approx(2.0, abs=1e-15)
    _, y = lc_augment(A, _pair_pc(1.0, -1.0))
    assert y[2] == pytest.approx(0.0, abs=1e-7)


def test_lc_law_of_cosines_matches_direct_arithmetic():
    rng = np.random.default_rng(11)
    for _ in range(100):
        bi, bj = crandn(rng, 2)
        A = crandn(rng, 2, 3)
        A_lc, y = lc_augment(A, _pair_pc(bi, bj))
        assert abs(y[2] - abs(bi + bj)) <= 1e-12 * (abs(bi) + abs(bj))
        assert abs(y[3] - abs(bi + 1j * bj)) <= 1e-12 * (abs(bi) + abs(bj))
        np.testing.assert_array_equal(A_lc[2], A[0] + A[1])
        np.testing.assert_array_equal(A_lc[3], A[0] + 1j * A[1])


def test_lc_row_count_and_consistency():
    rng = np.random.default_rng(12)
    A, z, b, pc = pc_problem(rng, m_per_group=4, q=5)
    A_lc, y = lc_augment(A, pc)
    assert A_lc.shape[0] == 20 + 5 * 6 * 2
    np.testing.assert_allclose(np.abs(A_lc @ z), y, rtol=1e-10)


# ------------------------------------------------------------------ nonconvex

def test_spectral_init_single_row():
    a = np.array([[1 + 2j, -0.5j, 3.0]])
    init = spectral_init(a, np.array([2.0]))
    z0 = init.z0
    c = np.vdot(a[0].conj(), z0)
    np.testing.assert_allclose(z0, c * a[0].conj() / np.vdot(a[0], a[0]).real, atol=1e-12)


def test_spectral_init_scale_and_zero_error():
    rng = np.random.default_rng(13)
    A = crandn(rng, 30, 5)
    y = np.abs(A @ crandn(rng, 5))
    z0 = spectral_init(A, y).z0
    assert abs(np.linalg.norm(A @ z0) - np.linalg.norm(y)) <= 1e-10 * np.linalg.norm(y)
    with pytest.raises(ValueError):
        spectral_init(A, np.zeros(30))


def test_spectral_init_correlates_with_truth():
    corr = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        A = crandn(rng, 80, 10) / np.sqrt(2)
        z = crandn(rng, 10)
        z0 = spectral_init(A, np.abs(A @ z)).z0
        corr.append(abs(np.vdot(z0, z)) / (np.linalg.norm(z0) * np.linalg.norm(z)))
    assert np.mean(corr) >= 0.5


def test_magnitude_only_fixed_points():
    rng = np.random.default_rng(14)
    A = crandn(rng, 40, 10)
    z = crandn(rng, 10)
    res = solve_magnitude_only(A, np.abs(A @ z), z)
    assert res.objective[0] == pytest.approx(0.0, abs=1e-28)
    np.testing.assert_allclose(res.z, z, atol=1e-12)
    zero = solve_magnitude_only(A, np.zeros(40), np.zeros(10))
    assert intensity_objective(A, np.zeros(40), zero.z) == 0 and not np.any(zero.z)


def test_magnitude_only_monotone_and_improving():
    rng = np.random.default_rng(15)
    A = crandn(rng, 40, 10)
    z = crandn(rng, 10)
    y = np.abs(A @ z)
    res = solve_magnitude_only(A, y, spectral_init(A, y).z0, SolverOptions(max_iters=300))
    obj = np.array(res.objective)
    assert np.all(np.diff(obj) <= 0)
    assert obj[-1] < 1e-3 * obj[0]
    assert intensity_objective(A, y, res.z) == pytest.approx(obj[-1])


def test_magnitude_only_reports_stall():
    rng = np.random.default_rng(16)
    A = crandn(rng, 20, 4)
    y = np.abs(A @ crandn(rng, 4))
    res = solve_magnitude_only(A, y, crandn(rng, 4), SolverOptions(min_step=1e3))
    assert res.stalled and not res.converged
    assert res.objective[-1] == intensity_objective(A, y, res.z)
    with pytest.raises(ValueError):
        solve_magnitude_only(A, y, np.full(4, np.nan))
