"""Channel simulation, calibrated noise and the partially coherent reduction.

A partially coherent receiver only reports magnitudes and the phase of each
channel relative to the other channels of its group. :func:`reduce_to_pc`
throws everything else away, and :func:`build_bc` turns what is left into
the magnitude matrix ``B`` and the phase-difference matrix ``C`` such that
``b = B @ C @ psi`` for the unknown per-group phases ``psi``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .scenario import ChannelSet

# Reference channels weaker than this are replaced by the strongest channel of their group.
_TINY = 1e-300


def simulate(A: np.ndarray, z_true) -> np.ndarray:
    """Noiseless channel signals ``A @ z_true``."""
    z_true = np.asarray(z_true, dtype=complex)
    if A.shape[1] != z_true.shape[0]:
        raise ValueError(f"A has {A.shape[1]} columns but z has length {z_true.shape[0]}")
    return A @ z_true


def noise_std(b, snr_db: float) -> float:
    """Total complex noise std that realizes ``snr_db`` for peak signal ``max|b|``."""
    return float(np.max(np.abs(b))) / 10.0 ** (snr_db / 20.0)


def add_noise(b, snr_db: float | None, seed) -> np.ndarray:
    """Add circular complex Gaussian noise at the requested peak SNR.

    ``snr_db=None`` means no noise. The std applies to the complex sample,
    i.e. each quadrature gets ``sigma / sqrt(2)``.
    """
    b = np.asarray(b, dtype=complex)
    if snr_db is None:
        return b.copy()
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite (use None for no noise)")
    if not np.any(b):
        raise ValueError("SNR is undefined for an all-zero signal")
    sigma = noise_std(b, snr_db)
    rng = np.random.default_rng(seed)
    n = rng.standard_normal((2, b.size))
    return b + (sigma / np.sqrt(2.0)) * (n[0] + 1j * n[1])


@dataclass
class PCData:
    """Magnitudes plus in-group phase offsets; absolute phases are gone."""

    magnitudes: np.ndarray
    group_of: np.ndarray
    ref_channel: np.ndarray
    delta_phase: np.ndarray
    s_index: int

    @property
    def m(self) -> int:
        return self.magnitudes.size

    @property
    def q(self) -> int:
        return self.ref_channel.size

    @property
    def is_zero_sample(self) -> np.ndarray:
        return self.group_of < 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            refs = " ".join(str(int(r)) for r in self.ref_channel)
            fh.write(f"# s_index={self.s_index} ref_channel={refs}\n")
            w = csv.writer(fh)
            w.writerow(["magnitude", "group", "delta_phase", "zero_flag"])
            for mag, g, d in zip(self.magnitudes, self.group_of, self.delta_phase):
                w.writerow([repr(float(mag)), int(g), repr(float(d)), int(g < 0)])

    @classmethod
    def from_csv(cls, path) -> "PCData":
        with open(path) as fh:
            meta = dict(item.split("=", 1) for item in fh.readline().lstrip("# ").rstrip("\n").split(" ", 1))
        ref = np.array(meta["ref_channel"].split(), dtype=int)
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        return cls(data[:, 0], data[:, 1].astype(int), ref, data[:, 2], int(meta["s_index"]))


def reduce_to_pc(b, channels: ChannelSet, s_index: int | None = None) -> PCData:
    """Keep magnitudes and phases relative to each group's reference channel.

    The reference is the first channel of a group unless its magnitude is
    vanishing, in which case the strongest channel takes over. ``s_index``
    defaults to the group with the strongest reference.
    """
    b = np.asarray(b, dtype=complex)
    if b.shape != (len(channels),):
        raise ValueError("observation length does not match the channel set")
    q = channels.group_count
    group_of = np.where(channels.is_zero_sample, -1, channels.group_ids)
    mags = np.abs(b)
    mags[channels.is_zero_sample] = 0.0
    ref = np.empty(q, dtype=int)
    for g in range(q):
        members = np.flatnonzero(group_of == g)
        r = members[0]
        if mags[r] < _TINY:
            r = members[np.argmax(mags[members])]
        ref[g] = r
    delta = np.zeros(b.size)
    measured = group_of >= 0
    raw = np.angle(b[measured]) - np.angle(b[ref[group_of[measured]]])
    delta[measured] = np.angle(np.exp(1j * raw))
    delta[ref] = 0.0
    if s_index is None:
        s_index = int(np.argmax(mags[ref])) if q else 0
    if q and not 0 <= s_index < q:
        raise ValueError(f"s_index {s_index} outside [0, {q})")
    return PCData(mags, group_of, ref, delta, int(s_index))


@dataclass
class BCFactors:
    """``B = diag(magnitudes)`` and the sparse phase-difference matrix ``C``."""

    magnitudes: np.ndarray
    C: sp.csr_matrix

    @property
    def B(self) -> sp.dia_matrix:
        return sp.diags(self.magnitudes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.C.shape

    def product(self) -> np.ndarray:
        """Dense ``B @ C``."""
        return np.asarray(self.C.multiply(self.magnitudes[:, None]).toarray())


def build_bc(pc: PCData) -> BCFactors:
    rows = np.flatnonzero(pc.group_of >= 0)
    C = sp.csr_matrix((np.exp(1j * pc.delta_phase[rows]), (rows, pc.group_of[rows])), shape=(pc.m, pc.q))
    return BCFactors(pc.magnitudes.astype(float), C)
