"""Placement of recovered slice correlations onto the (f, alpha) plane.

Every recovered entry (slice row i, slice col j, bin shift q_a, bin q_f)
pairs two physical frequency bins

    b1 = K_i Q + q_f,   b2 = K_j Q + q_f + q_a      (units of d = f_s / Q)

each wrapped into [-NQ/2, NQ/2) because slice bins above the Nyquist
half-band alias to negative frequencies. The entry then estimates the
cyclic spectrum at

    alpha = (b1 - b2) d,   f = (b1 + b2) d / 2 .

Entries with alpha < 0 are folded onto the stored alpha >= 0 half-plane via
S^{-a}(f) = conj(S^{a}(f)). Half-bin landings round half-up; the frequency
axis wraps periodically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .recovery import RecoveredSlices, SelectionLayout
from .sampler import slice_index_offsets

__all__ = ["CyclicSpectrumGrid", "index_map", "assemble", "profile_at_zero_f"]


@dataclass(frozen=True)
class CyclicSpectrumGrid:
    """Dense grid: rows are alpha bins 0..N*Q, columns frequency bins."""

    values: np.ndarray
    metadata: dict[str, Any]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] + 1:
            raise ValueError("grid must have shape (NQ + 1, NQ)")
        object.__setattr__(self, "values", arr)

    @property
    def delta_hz(self) -> float:
        return float(self.metadata["delta_hz"])

    def alpha_bins_hz(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.delta_hz

    def f_bins_hz(self) -> np.ndarray:
        n_f = self.values.shape[1]
        return (np.arange(n_f) - n_f // 2) * self.delta_hz

    def value_at(self, alpha_hz: float, f_hz: float) -> complex:
        """Nearest-bin lookup; negative alpha returns the conjugate of the
        stored +alpha value."""
        d = self.delta_hz
        row = int(round(abs(alpha_hz) / d))
        col = int(round(f_hz / d)) + self.values.shape[1] // 2
        if not (0 <= row < self.values.shape[0] and 0 <= col < self.values.shape[1]):
            raise ValueError("query outside the grid")
        v = complex(self.values[row, col])
        return v.conjugate() if alpha_hz < 0 else v


def _wrap_signed(bins: np.ndarray, nq: int) -> np.ndarray:
    half = nq // 2
    return (bins + half) % nq - half


def index_map(
    i: int,
    j: int,
    q_a: int,
    q_f: int,
    f_s_hz: float,
    n_slices: int,
    q: int,
) -> tuple[float, float]:
    """Physical (alpha_hz, f_hz) of one recovered entry; alpha is signed.
    Indices i, j are 1-based slice rows/cols."""
    if not (1 <= i <= n_slices and 1 <= j <= n_slices):
        raise ValueError("slice indices out of range")
    if not (0 <= q_a <= q and 0 <= q_f < q):
        raise ValueError("bin indices out of range")
    delta = f_s_hz / q
    nq = n_slices * q
    k_off = slice_index_offsets(n_slices)
    b1 = int(_wrap_signed(np.asarray(k_off[i - 1] * q + q_f), nq))
    b2 = int(_wrap_signed(np.asarray(k_off[j - 1] * q + q_f + q_a), nq))
    return (b1 - b2) * delta, (b1 + b2) * delta / 2


def assemble(
    recovered: RecoveredSlices,
    layout: SelectionLayout,
    dtype: np.dtype = np.complex64,
) -> CyclicSpectrumGrid:
    """Scatter every recovered entry onto the alpha >= 0 half-plane grid.

    Negative-alpha entries land conjugated on their mirror row; fine offsets
    (when the recovery carries them) shift each entry's alpha by a fraction
    of a bin before rounding to the nearest row. Cells hit more than once
    (distinct slot pairs observing the same physical sample) store the
    average. Zero-shift diagonal cells are skipped: their alpha is exactly
    zero and they carry the stationary noise floor rather than cyclic
    content.
    """
    n = recovered.n_slices
    q = recovered.q
    nq = n * q
    half = nq // 2
    k_off = slice_index_offsets(n)
    fine = recovered.fine_offsets
    acc = np.zeros((nq + 1, nq), dtype=dtype)
    cnt = np.zeros((nq + 1, nq), dtype=np.int32)
    for q_a, layer in enumerate(recovered.layers):
        if layer.shape[0] == 0:
            continue
        cols = np.flatnonzero(np.any(layer != 0, axis=0))
        for u in cols:
            r, c = layout.unique_positions[u]
            if q_a == 0 and c == r:
                continue
            vals = layer[:, u]
            nz = np.flatnonzero(vals)
            if nz.size == 0:
                continue
            b1 = _wrap_signed(k_off[r - 1] * q + nz, nq)
            b2 = _wrap_signed(k_off[c - 1] * q + nz + q_a, nq)
            a_signed = (b1 - b2).astype(np.float64)
            if fine is not None:
                a_signed = a_signed + fine[q_a][nz, u] / recovered.p
            rows = np.rint(np.abs(a_signed)).astype(np.int64)
            v = vals[nz].astype(np.complex128)
            v = np.where(a_signed < 0, np.conj(v), v).astype(dtype)
            f_idx = ((b1 + b2 + 1) // 2 + half) % nq
            np.add.at(acc, (rows, f_idx), v)
            np.add.at(cnt, (rows, f_idx), 1)
    hits = cnt > 1
    if np.any(hits):
        acc[hits] /= cnt[hits]
    meta = {
        "f_nyq_hz": recovered.f_s_hz * n,
        "f_s_hz": recovered.f_s_hz,
        "n_slices": n,
        "p_windows": recovered.p,
        "q_bins": q,
        "delta_hz": recovered.f_s_hz / q,
    }
    return CyclicSpectrumGrid(acc, meta)


def profile_at_zero_f(grid: CyclicSpectrumGrid) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude of the f = 0 column against the alpha axis."""
    col = grid.values.shape[1] // 2
    return grid.alpha_bins_hz(), np.abs(grid.values[:, col]).astype(np.float64)
