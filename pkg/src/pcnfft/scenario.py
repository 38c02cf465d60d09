"""Synthetic measurement geometry.

Builds the equivalent-source sphere, a stand-in AUT, drone-like cylindrical
trajectories with jitter, four-element probe arrays and the flattened
channel set, plus artificial zero-field channels covering whatever the
trajectory leaves unsampled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .fields import SourceModel

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConfigurationError(ValueError):
    """Scenario parameters that cannot produce a valid geometry."""


@dataclass
class Pose:
    position: np.ndarray
    orientation: np.ndarray  # columns: local x (horizontal), local y (vertical), probe normal

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        R = self.orientation
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-10) or abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("orientation must be a proper rotation")


@dataclass
class ProbeArray:
    """Planar probe array; offsets in wavelengths, polarizations as local 2-vectors."""

    offsets: np.ndarray
    polarizations: np.ndarray

    def __post_init__(self):
        self.offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        self.polarizations = np.atleast_2d(np.asarray(self.polarizations, dtype=float))
        if self.offsets.shape[0] < 1 or self.offsets.shape != self.polarizations.shape or self.offsets.shape[1] != 2:
            raise ValueError("probe array needs matching (k, 2) offsets and polarizations, k >= 1")
        if not np.all(np.isfinite(self.offsets)):
            raise ValueError("offsets must be finite")
        if np.any(np.abs(np.linalg.norm(self.polarizations, axis=1) - 1.0) > 1e-12):
            raise ValueError("element polarizations must be unit vectors")

    def __len__(self) -> int:
        return self.offsets.shape[0]


@dataclass
class ChannelSet:
    """Flattened scalar measurement channels.

    ``group_ids`` holds the coherence group of each channel; zero-sample
    channels carry ``-1`` and belong to no group.
    """

    positions: np.ndarray
    polarizations: np.ndarray
    group_ids: np.ndarray
    is_zero_sample: np.ndarray
    group_count: int = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        m = self.positions.shape[0]
        self.polarizations = np.asarray(self.polarizations, dtype=float).reshape(m, 3)
        self.group_ids = np.asarray(self.group_ids, dtype=int).reshape(m)
        self.is_zero_sample = np.asarray(self.is_zero_sample, dtype=bool).reshape(m)
        measured = self.group_ids[~self.is_zero_sample]
        if self.group_count is None:
            self.group_count = int(measured.max()) + 1 if measured.size else 0
        self.validate()

    def validate(self) -> None:
        if np.any(self.group_ids[self.is_zero_sample] != -1):
            raise ValueError("zero-sample channels must carry group id -1")
        measured = self.group_ids[~self.is_zero_sample]
        if measured.size and (measured.min() < 0 or measured.max() >= self.group_count):
            raise ValueError("group ids out of range")
        if np.unique(measured).size != self.group_count:
            raise ValueError("group ids must cover [0, q) and every group needs a measured channel")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def empty(cls) -> "ChannelSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, int), np.zeros(0, bool), 0)

    def concat(self, other: "ChannelSet") -> "ChannelSet":
        """Append ``other``; its groups are renumbered after ours."""
        gid = np.where(other.is_zero_sample, -1, other.group_ids + self.group_count)
        return ChannelSet(
            np.vstack([self.positions, other.positions]),
            np.vstack([self.polarizations, other.polarizations]),
            np.concatenate([self.group_ids, gid]),
            np.concatenate([self.is_zero_sample, other.is_zero_sample]),
            self.group_count + other.group_count,
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "px", "py", "pz", "group", "zero_flag"])
            for p, u, g, zf in zip(self.positions, self.polarizations, self.group_ids, self.is_zero_sample):
                w.writerow([*(repr(float(v)) for v in p), *(repr(float(v)) for v in u), int(g), int(zf)])

    @classmethod
    def from_csv(cls, path) -> "ChannelSet":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0:3], data[:, 3:6], data[:, 6].astype(int), data[:, 7].astype(bool))


@dataclass
class TruncationSpec:
    z_min: float
    z_max: float
    phi_gaps: Sequence[tuple[float, float]] = ()

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ConfigurationError("z_min must be below z_max")
        gaps = sorted((float(a), float(b)) for a, b in self.phi_gaps)
        for a, b in gaps:
            if not (0.0 <= a < b <= 360.0):
                raise ConfigurationError(f"gap ({a}, {b}) must lie within [0, 360) with a < b")
        for (_, b0), (a1, _) in zip(gaps, gaps[1:]):
            if a1 < b0:
                raise ConfigurationError("phi gaps must be pairwise disjoint")
        self.phi_gaps = tuple(gaps)

    def in_gap(self, phi_deg) -> np.ndarray:
        """True where the azimuth lies strictly inside one of the gaps."""
        phi = np.mod(np.asarray(phi_deg, dtype=float), 360.0)
        out = np.zeros(phi.shape, dtype=bool)
        for a, b in self.phi_gaps:
            out |= (phi > a) & (phi < b)
        return out

    def sampled_arcs(self) -> list[tuple[float, float]]:
        """Azimuth intervals (degrees) that are sampled, in increasing order."""
        arcs, start = [], 0.0
        for a, b in self.phi_gaps:
            if a > start:
                arcs.append((start, a))
            start = b
        if start < 360.0:
            arcs.append((start, 360.0))
        return arcs


def fibonacci_sphere(n_points: int) -> np.ndarray:
    """Unit vectors of a Fibonacci lattice; never hits a pole."""
    i = np.arange(n_points) + 0.5
    z = 1.0 - 2.0 * i / n_points
    rho = np.sqrt(1.0 - z**2)
    phi = GOLDEN_ANGLE * i
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def sample_sphere_sources(n_points: int, radius: float, wavelength: float) -> SourceModel:
    """Equivalent-source sphere: two tangential dipoles at each Fibonacci point.

    Dipoles are ordered point-major, theta-hat first.
    """
    if n_points < 4:
        raise ValueError("need at least 4 lattice points")
    if not radius > 0:
        raise ValueError("radius must be positive")
    u = fibonacci_sphere(n_points)
    theta = np.arccos(u[:, 2])
    phi = np.arctan2(u[:, 1], u[:, 0])
    t_hat = np.column_stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)])
    p_hat = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros(n_points)])
    positions = np.repeat(radius * u, 2, axis=0)
    pols = np.empty((2 * n_points, 3))
    pols[0::2] = t_hat
    pols[1::2] = p_hat
    return SourceModel(positions, pols, wavelength)


def _random_unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_aut_sources(kind: str, count: int, extent: float, wavelength: float, seed: int,
                     reconstruction_radius: float | None = None) -> tuple[SourceModel, np.ndarray]:
    """Random dipoles standing in for the antenna under test.

    ``extent`` is the half side of the box (``box_random``) or the sphere
    radius (``sphere_random``), in meters. Returns the model (unit
    amplitudes) and the excitation vector.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    if kind == "box_random":
        face = rng.integers(0, 6, size=count)
        pts = rng.uniform(-extent, extent, size=(count, 3))
        axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
        pts[np.arange(count), axis] = sign * extent
    elif kind == "sphere_random":
        pts = extent * _random_unit(rng, count)
    else:
        raise ValueError(f"unknown AUT kind {kind!r}")
    if reconstruction_radius is not None and np.max(np.linalg.norm(pts, axis=1)) >= reconstruction_radius:
        raise ConfigurationError("AUT sources must lie strictly inside the reconstruction sphere")
    pols = _random_unit(rng, count)
    z = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2.0)
    return SourceModel(pts, pols, wavelength), z


def nominal_orientation(phi: float) -> np.ndarray:
    """Inward-looking probe frame on a cylinder at azimuth ``phi`` (radians)."""
    rho = np.array([math.cos(phi), math.sin(phi), 0.0])
    phi_hat = np.array([-math.sin(phi), math.cos(phi), 0.0])
    return np.column_stack([-phi_hat, [0.0, 0.0, 1.0], -rho])


def _arc_position(v: np.ndarray, arcs) -> np.ndarray:
    """Map fractions in [0, 1) onto the concatenated sampled arcs (degrees)."""
    lengths = np.array([b - a for a, b in arcs])
    s = v * lengths.sum()
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(arcs) - 1)
    starts = np.array([a for a, _ in arcs])
    return starts[idx] + (s - edges[idx])


def _clamp_out_of_gaps(phi_deg: np.ndarray, trunc: TruncationSpec) -> np.ndarray:
    phi = np.mod(phi_deg, 360.0)
    for a, b in trunc.phi_gaps:
        inside = (phi > a) & (phi < b)
        phi = np.where(inside, np.where(phi - a < b - phi, a, b), phi)
    return phi


def make_cylindrical_trajectory(radius: float, trunc: TruncationSpec, n_poses: int, jitter_pos: float,
                                jitter_rot_deg: float, seed: int) -> list[Pose]:
    """Jittered quasi-uniform poses on the sampled part of a cylinder band.

    Nominal points follow a golden-ratio lattice on the unrolled band.
    Jittered positions are pulled back into the band and out of the gaps so
    that the truncation stays exactly as specified.
    """
    if n_poses < 1:
        raise ConfigurationError("need at least one pose")
    arcs = trunc.sampled_arcs()
    if not arcs:
        raise ConfigurationError("phi gaps leave nothing to sample")
    rng = np.random.default_rng(seed)
    i = np.arange(n_poses)
    height = (i + 0.5) / n_poses
    frac = np.mod(i * _INV_GOLDEN + 0.5 / n_poses, 1.0)
    phi = np.deg2rad(_arc_position(frac, arcs))
    z = trunc.z_min + height * (trunc.z_max - trunc.z_min)
    pos = np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])

    if jitter_pos > 0:
        pos = pos + jitter_pos * rng.standard_normal(pos.shape)
        phi_j = np.deg2rad(_clamp_out_of_gaps(np.rad2deg(np.arctan2(pos[:, 1], pos[:, 0])), trunc))
        rho_j = np.hypot(pos[:, 0], pos[:, 1])
        pos = np.column_stack([rho_j * np.cos(phi_j), rho_j * np.sin(phi_j),
                               np.clip(pos[:, 2], trunc.z_min, trunc.z_max)])
    phi_nom = np.arctan2(pos[:, 1], pos[:, 0])

    if jitter_rot_deg > 0:
        axes = _random_unit(rng, n_poses)
        angles = np.deg2rad(jitter_rot_deg) * rng.uniform(0.0, 1.0, n_poses)
        jitter = Rotation.from_rotvec(axes * angles[:, None]).as_matrix()
    else:
        jitter = np.broadcast_to(np.eye(3), (n_poses, 3, 3))
    return [Pose(p, jitter[k] @ nominal_orientation(phi_nom[k])) for k, p in enumerate(pos)]


def standard_probe_array(which: str, spacing_wavelengths: float = 1.0) -> ProbeArray:
    """The two four-element layouts.

    ``A`` mixes vertical, horizontal and 45-degree elements so that phase
    differences link both directions; ``B`` pairs same-polarized elements
    only vertically.
    """
    if not spacing_wavelengths > 0:
        raise ValueError("spacing must be positive")
    d = spacing_wavelengths
    v, h, diag = (0.0, 1.0), (1.0, 0.0), (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
    offsets = [(0.0, 0.0), (d, 0.0), (0.0, d), (d, d)]
    if which == "A":
        pols = [v, diag, diag, h]
    elif which == "B":
        pols = [v, h, v, h]
    else:
        raise ValueError(f"unknown probe array {which!r}")
    return ProbeArray(offsets, pols)


def probe_channels(poses: Sequence[Pose], array: ProbeArray, wavelength: float = 1.0,
                   centered: bool = False) -> ChannelSet:
    """One coherence group per pose, channels ordered pose-major.

    Element offsets are taken relative to the pose position, or relative to
    the array centroid when ``centered`` is set.
    """
    if len(poses) == 0:
        raise ValueError("no poses given")
    R = np.stack([p.orientation for p in poses])            # (q, 3, 3)
    origin = np.stack([p.position for p in poses])          # (q, 3)
    off = wavelength * (array.offsets - array.offsets.mean(axis=0) if centered else array.offsets)
    positions = origin[:, None, :] + np.einsum("qij,kj->qki", R[:, :, :2], off)
    pols = np.einsum("qij,kj->qki", R[:, :, :2], array.polarizations)
    q, k = len(poses), len(array)
    groups = np.repeat(np.arange(q), k)
    return ChannelSet(positions.reshape(-1, 3), pols.reshape(-1, 3), groups, np.zeros(q * k, bool), q)


def _ring_counts(length: float, h: float) -> int:
    return max(1, int(round(length / h)))


def zero_region_samples(radius: float, trunc: TruncationSpec, density: float, cap_extent: float,
                        wavelength: float = 1.0, margin: float = 0.0) -> ChannelSet:
    """Zero-field channels covering the unsampled parts of a closed cylinder.

    Covered regions are the gap sectors of the band, the wall extension up to
    ``cap_extent`` beyond either end of the band, and the flat end caps closing
    the extended cylinder. ``margin`` (meters) keeps the zero region that far
    away from the sampled band, e.g. to clear the probe-array footprint. Each
    point gets two orthogonal tangential polarizations. ``density`` is in
    samples per square wavelength.
    """
    if not density > 0:
        raise ValueError("density must be positive")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    h = wavelength / math.sqrt(density)
    pts, pols = [], []

    def wall(phi_lo, phi_hi, z_lo, z_hi):
        n_z = _ring_counts(z_hi - z_lo, h)
        n_p = _ring_counts(radius * np.deg2rad(phi_hi - phi_lo), h)
        zz = z_lo + (np.arange(n_z) + 0.5) * (z_hi - z_lo) / n_z
        pp = np.deg2rad(phi_lo + (np.arange(n_p) + 0.5) * (phi_hi - phi_lo) / n_p)
        Z, P = np.meshgrid(zz, pp, indexing="ij")
        Z, P = Z.ravel(), P.ravel()
        xyz = np.column_stack([radius * np.cos(P), radius * np.sin(P), Z])
        t1 = np.column_stack([-np.sin(P), np.cos(P), np.zeros_like(P)])
        t2 = np.tile([0.0, 0.0, 1.0], (P.size, 1))
        pts.extend([xyz, xyz])
        pols.extend([t1, t2])

    def disk(z0):
        n_r = _ring_counts(radius, h)
        for j in range(n_r):
            rj = (j + 0.5) * radius / n_r
            n_p = _ring_counts(2.0 * np.pi * rj, h)
            P = 2.0 * np.pi * (np.arange(n_p) + 0.5) / n_p
            xyz = np.column_stack([rj * np.cos(P), rj * np.sin(P), np.full(n_p, z0)])
            pts.extend([xyz, xyz])
            pols.extend([np.tile([1.0, 0.0, 0.0], (n_p, 1)), np.tile([0.0, 1.0, 0.0], (n_p, 1))])

    shrink = np.rad2deg(margin / radius)
    for a, b in trunc.phi_gaps:
        if b - a > 2 * shrink:
            wall(a + shrink, b - shrink, trunc.z_min - margin, trunc.z_max + margin)
    if cap_extent > margin:
        top, bottom = trunc.z_max + cap_extent, trunc.z_min - cap_extent
        wall(0.0, 360.0, trunc.z_max + margin, top)
        wall(0.0, 360.0, bottom, trunc.z_min - margin)
        disk(top)
        disk(bottom)

    if not pts:
        return ChannelSet.empty()
    positions, polarizations = np.vstack(pts), np.vstack(pols)
    m = positions.shape[0]
    return ChannelSet(positions, polarizations, -np.ones(m, int), np.ones(m, bool), 0)
