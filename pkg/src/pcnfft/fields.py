"""Hertzian dipole fields and forward-operator assembly.

Units are normalized: free-space impedance is 1 and a dipole with unit
amplitude carries a unit current moment. Time convention is exp(+jwt), so
outgoing waves carry exp(-jkr).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np

if TYPE_CHECKING:
    from .scenario import ChannelSet

# Observation points closer than this (in wavelengths) to a source are rejected.
SINGULAR_GUARD = 1e-9

# Rows of the forward matrix assembled per chunk; bounds the (rows, n, 3) scratch.
_ROW_CHUNK = 512


class SingularPointError(ValueError):
    """Observation point coincides with a dipole location."""


@dataclass(frozen=True)
class Dipole:
    position: np.ndarray
    polarization: np.ndarray
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        pol = np.asarray(self.polarization, dtype=float).reshape(3)
        if abs(np.linalg.norm(pol) - 1.0) > 1e-12:
            raise ValueError(f"polarization must be a unit vector, got norm {np.linalg.norm(pol)!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "polarization", pol)
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass
class SourceModel:
    """Ordered set of elementary dipoles sharing one wavelength.

    Stored column-wise (``positions`` is ``(n, 3)``) so that assembly stays
    vectorized; :attr:`dipoles` gives the per-dipole view.
    """

    positions: np.ndarray
    polarizations: np.ndarray
    wavelength: float
    amplitudes: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.polarizations = np.atleast_2d(np.asarray(self.polarizations, dtype=float))
        n = self.positions.shape[0]
        if n < 1:
            raise ValueError("a source model needs at least one dipole")
        if self.positions.shape != (n, 3) or self.polarizations.shape != (n, 3):
            raise ValueError("positions and polarizations must both be (n, 3)")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        norms = np.linalg.norm(self.polarizations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("all polarizations must be unit vectors")
        if self.amplitudes is None:
            self.amplitudes = np.ones(n, dtype=complex)
        else:
            self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(n)

    @classmethod
    def from_dipoles(cls, dipoles: Iterable[Dipole], wavelength: float) -> "SourceModel":
        dipoles = list(dipoles)
        return cls(
            positions=np.array([d.position for d in dipoles]),
            polarizations=np.array([d.polarization for d in dipoles]),
            wavelength=wavelength,
            amplitudes=np.array([d.amplitude for d in dipoles]),
        )

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def dipoles(self) -> list[Dipole]:
        return [Dipole(p, u, a) for p, u, a in zip(self.positions, self.polarizations, self.amplitudes)]

    def __len__(self) -> int:
        return self.n

    def to_csv(self, path) -> None:
        header = "x,y,z,px,py,pz,amp_re,amp_im"
        data = np.column_stack([self.positions, self.polarizations, self.amplitudes.real, self.amplitudes.imag])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, wavelength: float) -> "SourceModel":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0:3], data[:, 3:6], wavelength, data[:, 6] + 1j * data[:, 7])


def _efield(src_pos, src_pol, amps, k, obs):
    """E-field of dipoles at observation points.

    ``src_pos``/``src_pol`` are ``(n, 3)``, ``obs`` is ``(m, 3)``; returns
    ``(m, n, 3)`` with each dipole scaled by its amplitude.
    """
    R = obs[:, None, :] - src_pos[None, :, :]
    r = np.sqrt(np.einsum("mnk,mnk->mn", R, R))
    if np.any(r < SINGULAR_GUARD * (2.0 * np.pi / k)):
        raise SingularPointError("observation point coincides with a source position")
    rhat = R / r[..., None]
    cos_t = np.einsum("mnk,nk->mn", rhat, src_pol)
    kr = k * r
    phase = np.exp(-1j * kr) * amps[None, :]
    f_r = phase / (2.0 * np.pi * r**2) * (1.0 + 1.0 / (1j * kr))
    f_t = phase * (1j * k / (4.0 * np.pi * r)) * (1.0 + 1.0 / (1j * kr) - 1.0 / kr**2)
    # sin(theta) * theta_hat == (p . rhat) rhat - p
    return (cos_t * (f_r + f_t))[..., None] * rhat - f_t[..., None] * src_pol[None, :, :]


def dipole_efield(d: Dipole, wavelength: float, obs) -> np.ndarray:
    """Exact near+far electric field of one Hertzian dipole at ``obs``."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    obs = np.asarray(obs, dtype=float).reshape(1, 3)
    k = 2.0 * np.pi / wavelength
    E = _efield(d.position[None, :], d.polarization[None, :], np.array([d.amplitude]), k, obs)
    return E[0, 0]


def spherical_basis(directions) -> tuple[np.ndarray, np.ndarray]:
    """Global theta-hat and phi-hat unit vectors for unit ``directions`` ``(D, 3)``."""
    d = np.atleast_2d(directions)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.arctan2(d[:, 1], d[:, 0])
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    theta_hat = np.column_stack([ct * cp, ct * sp, -st])
    phi_hat = np.column_stack([-sp, cp, np.zeros_like(phi)])
    return theta_hat, phi_hat


def _check_directions(directions) -> np.ndarray:
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    if d.shape[1] != 3:
        raise ValueError("directions must be (D, 3)")
    if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-9):
        raise ValueError("directions must be unit vectors")
    return d


def _farfield_vectors(src_pos, src_pol, k, directions):
    """Cartesian far-field vectors ``(D, n, 3)`` of unit-amplitude dipoles."""
    phase = np.exp(1j * k * (directions @ src_pos.T))
    proj = directions @ src_pol.T
    transverse = proj[..., None] * directions[:, None, :] - src_pol[None, :, :]
    return (1j * k / (4.0 * np.pi)) * phase[..., None] * transverse


def dipole_farfield(d: Dipole, wavelength: float, direction) -> np.ndarray:
    """Radiation pattern ``(E_theta, E_phi)`` of one dipole, phase referenced at the origin."""
    direction = _check_directions(direction)
    k = 2.0 * np.pi / wavelength
    E = _farfield_vectors(d.position[None, :], d.polarization[None, :], k, direction)[0, 0] * d.amplitude
    th, ph = spherical_basis(direction)
    return np.array([E @ th[0], E @ ph[0]])


def farfield_matrix(model: SourceModel, directions) -> np.ndarray:
    """Far-field operator of shape ``(D, 2, n)`` mapping unit-amplitude coefficients to patterns.

    Dipole amplitudes stored on ``model`` are ignored; coefficients supply them.
    """
    directions = _check_directions(directions)
    E = _farfield_vectors(model.positions, model.polarizations, model.wavenumber, directions)
    th, ph = spherical_basis(directions)
    return np.stack([np.einsum("dnk,dk->dn", E, th), np.einsum("dnk,dk->dn", E, ph)], axis=1)


def evaluate_farfield(model: SourceModel, z, directions) -> np.ndarray:
    """Far-field pattern ``(D, 2)`` of coefficient vector ``z`` over ``model``."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (model.n,):
        raise ValueError(f"coefficient vector has shape {z.shape}, expected ({model.n},)")
    return farfield_matrix(model, directions) @ z


def field_matrix(model: SourceModel, positions, polarizations) -> np.ndarray:
    """Polarization-projected fields of unit dipoles, ``(m, n)``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    polarizations = np.atleast_2d(np.asarray(polarizations, dtype=float))
    k = model.wavenumber
    ones = np.ones(model.n, dtype=complex)
    out = np.empty((positions.shape[0], model.n), dtype=complex)
    for start in range(0, positions.shape[0], _ROW_CHUNK):
        sl = slice(start, start + _ROW_CHUNK)
        E = _efield(model.positions, model.polarizations, ones, k, positions[sl])
        out[sl] = np.einsum("mnk,mk->mn", E, polarizations[sl])
    return out


def assemble_forward(model: SourceModel, channels: "ChannelSet") -> np.ndarray:
    """Forward matrix ``A`` with ``A[i, j]`` the field of unit dipole ``j`` seen by channel ``i``."""
    return field_matrix(model, channels.positions, channels.polarizations)
