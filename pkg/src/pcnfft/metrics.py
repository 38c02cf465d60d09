"""Error measures: near-field deviation, far-field cut errors, realized SNR."""

from __future__ import annotations

import warnings

import numpy as np

from .scenario import TruncationSpec

DB_FLOOR = -300.0


def _db20(ratio: float) -> float:
    if ratio <= 0:
        return DB_FLOOR
    return max(DB_FLOOR, float(20.0 * np.log10(ratio)))


def align_global_phase(x, ref) -> np.ndarray:
    """Rotate ``x`` by the unit phase factor that brings it closest to ``ref``."""
    x = np.asarray(x, dtype=complex)
    ref = np.asarray(ref, dtype=complex)
    c = np.vdot(x.ravel(), ref.ravel())
    if abs(c) == 0.0:
        warnings.warn("cannot align against a zero or orthogonal vector; returning input", RuntimeWarning)
        return x.copy()
    return x * (c / abs(c))


def nf_deviation_db(A, z, b_ref, align: bool = True) -> float:
    """Relative near-field deviation ``20 log10(|A z - b| / |b|)``, floored at -300 dB."""
    b_ref = np.asarray(b_ref, dtype=complex)
    nb = np.linalg.norm(b_ref)
    if nb == 0:
        raise ValueError("reference near field is zero")
    bz = np.asarray(A) @ np.asarray(z, dtype=complex)
    if align and np.any(bz):
        bz = align_global_phase(bz, b_ref)
    return _db20(np.linalg.norm(bz - b_ref) / nb)


def cut_directions(theta_deg: float = 90.0, step_deg: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth grid ``[0, 360)`` and unit directions of a constant-theta cut."""
    phi = np.arange(0.0, 360.0, step_deg)
    th, ph = np.deg2rad(theta_deg), np.deg2rad(phi)
    dirs = np.column_stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.full(phi.size, np.cos(th))])
    return phi, dirs


def validity_mask(trunc: TruncationSpec, radius: float, directions) -> np.ndarray:
    """True for directions whose ray hits the sampled part of the cylinder band.

    A ray from the origin reaches the cylinder of ``radius`` at height
    ``radius * cot(theta)``; it is invalid there if that height lies outside
    the band or its azimuth lies in a gap. Rays parallel to the axis never
    reach the wall.
    """
    d = np.atleast_2d(directions)
    rho = np.hypot(d[:, 0], d[:, 1])
    valid = rho > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        z_hit = np.where(valid, radius * d[:, 2] / np.where(valid, rho, 1.0), 0.0)
    valid &= (z_hit >= trunc.z_min) & (z_hit <= trunc.z_max)
    phi = np.rad2deg(np.arctan2(d[:, 1], d[:, 0]))
    valid &= ~trunc.in_gap(phi)
    return valid


def ff_cut_error_db(pattern_est, pattern_ref, mask) -> tuple[float, float]:
    """Far-field errors over the valid and invalid parts of a cut.

    Both patterns are ``(D, 2)`` and are normalized to their own peak over
    the valid directions; the estimate is then phase-aligned to the reference
    on the valid set.

    Returns
    -------
    valid_err_db : RMS deviation over valid directions, dB relative to peak
    invalid_max_db : strongest estimated field over invalid directions, dB
        relative to the estimate's valid peak (``nan`` if nothing is invalid)
    """
    est = np.asarray(pattern_est, dtype=complex)
    ref = np.asarray(pattern_ref, dtype=complex)
    mask = np.asarray(mask, dtype=bool)
    if est.shape != ref.shape or mask.shape != est.shape[:1]:
        raise ValueError("patterns and mask must share the same grid")
    if not mask.any():
        raise ValueError("no valid directions in the cut")
    ref_peak = np.max(np.linalg.norm(ref[mask], axis=1))
    est_peak = np.max(np.linalg.norm(est[mask], axis=1))
    if ref_peak == 0:
        raise ValueError("reference pattern vanishes over the valid region")
    ref_n = ref / ref_peak
    est_n = est / est_peak if est_peak > 0 else est
    est_n = align_global_phase(est_n[mask], ref_n[mask]) if est_peak > 0 else est_n[mask]
    rms = np.sqrt(np.mean(np.sum(np.abs(est_n - ref_n[mask]) ** 2, axis=1)))
    if mask.all():
        invalid = float("nan")
    elif est_peak == 0:
        invalid = DB_FLOOR
    else:
        invalid = _db20(np.max(np.linalg.norm(est[~mask], axis=1)) / est_peak)
    return _db20(rms), invalid


def pattern_db(pattern, mask) -> np.ndarray:
    """Pattern magnitude in dB relative to its peak over ``mask``."""
    mag = np.linalg.norm(np.asarray(pattern), axis=1)
    peak = np.max(mag[np.asarray(mask, dtype=bool)])
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(mag / peak)
    return np.maximum(out, DB_FLOOR)


def empirical_snr_db(b_clean, b_noisy) -> float:
    """Peak SNR realized by ``b_noisy``; ``inf`` when no noise was added."""
    b_clean = np.asarray(b_clean, dtype=complex)
    noise = np.asarray(b_noisy, dtype=complex) - b_clean
    sd = np.std(noise)
    if sd == 0:
        return float("inf")
    return float(20.0 * np.log10(np.max(np.abs(b_clean)) / sd))
