"""Inverse solvers for complete, partial and missing phase information.

The centerpiece is :func:`solve_linearized_pc`: with ``P = I - A A^+`` the
orthogonal projector onto the complement of the model range, the per-group
phases ``psi`` must satisfy ``P B C psi = 0``. Pinning one entry of ``psi``
to 1 relaxes the unit-modulus condition to a convex one, and the solution is
the right singular vector of ``P B C`` for its smallest singular value.

The nonconvex baselines (intensity least squares with a spectral start) are
reference stand-ins and live at the bottom of this module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .fields import SourceModel, assemble_forward
from .measurement import BCFactors, PCData
from .scenario import ChannelSet

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


class DegenerateDataError(ValueError):
    pass


@dataclass
class SolverOptions:
    svd_threshold: float = 1e-8
    tikhonov: float = 0.0
    zero_weight: float = 1.0
    max_iters: int = 500
    tolerance: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-20
    power_iters: int = 100
    init_trim_percentile: float = 90.0

    def __post_init__(self):
        if not 0.0 < self.svd_threshold < 1.0:
            raise ValueError("svd_threshold must lie in (0, 1)")
        if self.tikhonov < 0:
            raise ValueError("tikhonov must be non-negative")
        if not self.zero_weight > 0:
            raise ValueError("zero_weight must be positive")


@dataclass
class OperatorBundle:
    """Forward matrix with its SVD; the first ``rank`` triplets span the model range."""

    A: np.ndarray
    U: np.ndarray
    s: np.ndarray
    Vh: np.ndarray
    rank: int
    threshold: float

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def Ur(self) -> np.ndarray:
        return self.U[:, : self.rank]

    def pinv(self) -> np.ndarray:
        r = self.rank
        return (self.Vh[:r].conj().T / self.s[:r]) @ self.U[:, :r].conj().T

    def pinv_apply(self, b) -> np.ndarray:
        r = self.rank
        return self.Vh[:r].conj().T @ ((self.U[:, :r].conj().T @ b) / self.s[:r])

    def project_out(self, X) -> np.ndarray:
        """``(I - A A^+) X`` without forming the m-by-m projector."""
        Ur = self.Ur
        return X - Ur @ (Ur.conj().T @ X)

    def projector(self) -> np.ndarray:
        return np.eye(self.m) - self.Ur @ self.Ur.conj().T


def decompose(A: np.ndarray, opts: SolverOptions | None = None) -> OperatorBundle:
    """Thin SVD of ``A`` truncated at ``svd_threshold`` relative to the largest singular value."""
    opts = opts or SolverOptions()
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise NumericalError("forward matrix contains non-finite entries")
    try:
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for a {A.shape} matrix (cond ~ {np.linalg.cond(A):.3g})") from exc
    rank = int(np.count_nonzero(s > opts.svd_threshold * s[0])) if s.size and s[0] > 0 else 0
    return OperatorBundle(A, U, s, Vh, rank, opts.svd_threshold)


def reconstruct_sources(bundle: OperatorBundle, b, opts: SolverOptions | None = None) -> np.ndarray:
    """Source coefficients from (complex) channel data.

    Truncated pseudoinverse for ``tikhonov == 0``; otherwise the minimizer of
    ``|A z - b|^2 + tikhonov^2 |z|^2`` over all singular triplets.
    """
    opts = opts or SolverOptions()
    b = np.asarray(b, dtype=complex)
    if b.shape != (bundle.m,):
        raise ValueError(f"data length {b.shape} does not match {bundle.m} rows")
    if opts.tikhonov == 0:
        return bundle.pinv_apply(b)
    lam2 = opts.tikhonov**2
    s = bundle.s
    return bundle.Vh.conj().T @ ((s / (s**2 + lam2)) * (bundle.U.conj().T @ b))


def augment_with_zero_samples(A, magnitudes, C, channels: ChannelSet, zeros: ChannelSet,
                              model: SourceModel, zero_weight: float = 1.0):
    """Append artificial zero-field channels to a partially coherent system.

    The new rows of ``A`` are the model fields at the zero channels scaled
    by ``zero_weight``; their magnitudes and rows of ``C`` are zero, so the
    number of groups does not change.

    Returns
    -------
    A_aug, magnitudes_aug, C_aug, channels_aug
    """
    if len(zeros) == 0:
        return A, magnitudes, C, channels
    if not np.all(zeros.is_zero_sample):
        raise ValueError("zero channels must be flagged as zero samples")
    A0 = zero_weight * assemble_forward(model, zeros)
    A_aug = np.vstack([A, A0])
    mags = np.concatenate([magnitudes, np.zeros(len(zeros))])
    C_aug = sp.vstack([sp.csr_matrix(C), sp.csr_matrix((len(zeros), C.shape[1]), dtype=complex)]).tocsr()
    return A_aug, mags, C_aug, channels.concat(zeros)


class UniquenessCheck(NamedTuple):
    bound_ok: bool
    m: int
    rank_A: int
    rank_BC: int


def _rank(s: np.ndarray, threshold: float) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > threshold * s[0]))


def check_uniqueness(bundle: OperatorBundle, bc: BCFactors) -> UniquenessCheck:
    """Necessary condition ``m - rank(A) >= rank(BC) - 1`` for a one-dimensional null space."""
    s = np.linalg.svd(bc.product(), compute_uv=False)
    rank_bc = _rank(s, bundle.threshold)
    m = bundle.m
    return UniquenessCheck(bool(m - bundle.rank >= rank_bc - 1), m, bundle.rank, rank_bc)


@dataclass
class SolveReport:
    psi: np.ndarray
    z: np.ndarray
    b_hat: np.ndarray
    sigma_tail: np.ndarray
    gap_ratio: float
    bound_ok: bool
    nf_residual_db: float
    s_index: int
    pinned_index: int
    rank_A: int
    rank_BC: int
    m: int

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "q": self.psi.size,
            "rank_A": self.rank_A,
            "rank_BC": self.rank_BC,
            "bound_ok": self.bound_ok,
            "gap_ratio": self.gap_ratio,
            "sigma_tail": [float(x) for x in self.sigma_tail],
            "nf_residual_db": self.nf_residual_db,
            "s_index": self.s_index,
            "pinned_index": self.pinned_index,
        }


def _db(x: float) -> float:
    return float(20.0 * np.log10(max(x, 1e-15)))


def solve_linearized_pc(bundle: OperatorBundle, bc: BCFactors, s_index: int,
                        opts: SolverOptions | None = None) -> SolveReport:
    """Recover the group phases from ``P B C psi = 0`` with ``psi[s_index] = 1``."""
    opts = opts or SolverOptions()
    m, q = bc.shape
    if q == 0:
        raise ValueError("no coherence groups to solve for")
    if m != bundle.m:
        raise ValueError("B C and A disagree on the number of channels")
    if not 0 <= s_index < q:
        raise ValueError(f"s_index {s_index} outside [0, {q})")
    BC = bc.product()
    M = bundle.project_out(BC)
    # all q right singular vectors are needed, U only as far as it is cheap
    _, sv, Vh = np.linalg.svd(M, full_matrices=m < q)
    sigma = np.zeros(q)
    sigma[: sv.size] = sv
    if sigma[0] <= np.finfo(float).tiny:
        raise DegenerateDataError("projected data matrix is numerically zero; model explains any phase")
    # Singular values below the rank tolerance are indistinguishable from zero.
    floor = np.finfo(float).eps * max(m, q) * sigma[0]
    tail = np.maximum(sigma[::-1][:2], floor)
    gap = float(tail[1] / tail[0]) if q > 1 else float("inf")

    v = Vh[-1].conj()
    pinned = s_index
    if abs(v[s_index]) < 1e-12:
        pinned = int(np.argmax(np.abs(v)))
        log.warning("psi[%d] vanishes in the null vector; pinning entry %d instead", s_index, pinned)
    psi = v / v[pinned]
    b_hat = BC @ psi
    z = reconstruct_sources(bundle, b_hat, opts)
    resid = np.linalg.norm(bundle.project_out(b_hat)) / max(np.linalg.norm(b_hat), np.finfo(float).tiny)
    chk = check_uniqueness(bundle, bc)
    return SolveReport(psi, z, b_hat, tail, gap, chk.bound_ok, _db(resid), s_index, pinned,
                       chk.rank_A, chk.rank_BC, m)


def lc_augment(A, pc: PCData, channels: ChannelSet | None = None):
    """Append magnitude-only rows for linear combinations of coherent channel pairs.

    For every pair ``(i, j)`` inside a group, rows ``a_i + a_j`` and
    ``a_i + 1j a_j`` are added; their magnitudes follow from the law of
    cosines with the known offset ``delta_j - delta_i``. Original rows are
    kept in front.
    """
    A = np.asarray(A)
    mags = pc.magnitudes
    groups = pc.group_of if channels is None else np.where(channels.is_zero_sample, -1, channels.group_ids)
    order = np.argsort(groups, kind="stable")
    gs = groups[order]
    ii, jj = [], []
    for g in range(pc.q):
        members = order[np.searchsorted(gs, g, "left"): np.searchsorted(gs, g, "right")]
        a, b = np.triu_indices(members.size, k=1)
        ii.append(members[a])
        jj.append(members[b])
    if not ii:
        return A.copy(), mags.copy()
    ii, jj = np.concatenate(ii), np.concatenate(jj)
    mi, mj = mags[ii], mags[jj]
    delta = pc.delta_phase[jj] - pc.delta_phase[ii]
    base = mi**2 + mj**2
    sum_mag = np.sqrt(np.maximum(base + 2 * mi * mj * np.cos(delta), 0.0))
    quad_mag = np.sqrt(np.maximum(base - 2 * mi * mj * np.sin(delta), 0.0))
    A_lc = np.vstack([A, A[ii] + A[jj], A[ii] + 1j * A[jj]])
    return A_lc, np.concatenate([mags, sum_mag, quad_mag])


def _matrix(op) -> np.ndarray:
    return op.A if isinstance(op, OperatorBundle) else np.asarray(op)


@dataclass
class SpectralInit:
    z0: np.ndarray
    converged: bool


def spectral_init(A, magnitudes, opts: SolverOptions | None = None) -> SpectralInit:
    """Leading eigenvector of ``sum_i w_i a_i a_i^H`` with intensities trimmed at a percentile.

    Power iteration starts from ``A^H w``; the result is scaled so that
    ``|A z0| = |magnitudes|``.
    """
    opts = opts or SolverOptions()
    A = _matrix(A)
    y = np.asarray(magnitudes, dtype=float)
    if not np.any(y):
        raise ValueError("spectral initialization needs at least one non-zero magnitude")
    w = y**2
    w = np.minimum(w, np.percentile(w, opts.init_trim_percentile))
    if not np.any(w):
        w = y**2
    x = A.conj().T @ w.astype(complex)
    if not np.any(x):
        x = np.ones(A.shape[1], dtype=complex)
    x /= np.linalg.norm(x)
    converged = False
    for _ in range(opts.power_iters):
        x_new = A.conj().T @ (w * (A @ x))
        nrm = np.linalg.norm(x_new)
        if nrm == 0:
            break
        x_new /= nrm
        # eigenvectors are defined up to a phase
        c = np.vdot(x_new, x)
        change = np.linalg.norm(x_new * (c / abs(c)) - x) if c != 0 else 2.0
        x = x_new
        if change < 1e-10:
            converged = True
            break
    scale = np.linalg.norm(y) / np.linalg.norm(A @ x)
    return SpectralInit(x * scale, converged)


@dataclass
class NonconvexResult:
    z: np.ndarray
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stalled: bool = False


def intensity_objective(A, magnitudes, z) -> float:
    y2 = np.asarray(magnitudes, dtype=float) ** 2
    norm = np.sum(y2**2) or 1.0
    r = np.abs(A @ z) ** 2 - y2
    return float(np.sum(r**2) / norm)


def solve_magnitude_only(A, magnitudes, z0, opts: SolverOptions | None = None) -> NonconvexResult:
    """Intensity least squares by Wirtinger gradient descent with Armijo backtracking.

    Minimizes ``sum_i (|a_i z|^2 - y_i^2)^2 / sum_i y_i^4``. Stops when the
    gradient norm has dropped by ``tolerance`` relative to its initial value,
    or after ``max_iters``. A step that cannot satisfy the Armijo condition
    above ``min_step`` ends the run with ``stalled`` set; the best iterate is
    returned either way.
    """
    opts = opts or SolverOptions()
    A = _matrix(A)
    y2 = np.asarray(magnitudes, dtype=float) ** 2
    norm = np.sum(y2**2) or 1.0
    z = np.array(z0, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("initial guess must be finite")

    w = A @ z
    r = np.abs(w) ** 2 - y2
    f = float(np.sum(r**2) / norm)
    res = NonconvexResult(z, [f])
    g = 4.0 * (A.conj().T @ (r * w)) / norm
    g0 = np.linalg.norm(g)
    if f == 0.0 or g0 == 0.0:
        res.converged = True
        return res
    # first trial step from a bound on the local curvature
    t = norm / (12.0 * np.linalg.norm(A) ** 2 * max(np.max(y2), np.max(np.abs(w) ** 2)))
    for it in range(1, opts.max_iters + 1):
        gg = float(np.vdot(g, g).real)
        while True:
            z_try = z - t * g
            w_try = A @ z_try
            r_try = np.abs(w_try) ** 2 - y2
            f_try = float(np.sum(r_try**2) / norm)
            if f_try <= f - opts.armijo * t * gg:
                break
            t *= opts.backtrack
            if t < opts.min_step:
                res.stalled = True
                res.iterations = it - 1
                return res
        z, w, r, f = z_try, w_try, r_try, f_try
        res.z = z
        res.objective.append(f)
        res.iterations = it
        g = 4.0 * (A.conj().T @ (r * w)) / norm
        if np.linalg.norm(g) <= opts.tolerance * g0 or f == 0.0:
            res.converged = True
            break
        t /= opts.backtrack
    return res
