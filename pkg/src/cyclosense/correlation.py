"""Windowed spectral frames and shifted cross-correlation estimation.

Frames are plain FFTs of rectangular non-overlapping windows, one per
channel. The correlation tensor averages frame outer products at every
frequency shift of 0..Q bins; the zero-shift layer is Hermitian positive
semidefinite by construction.

Plain averaging only retains cyclic content whose frequency sits exactly on
the coarse bin grid: an offset of delta cycles per bin advances the product
phase by 2*pi*delta per window and the mean Dirichlet-nulls it. The fine
estimator (``cyclic_layer_fft``) therefore takes a second FFT across the
window index, resolving offsets in steps of one coarse bin over P. Its DC
slice equals the plain average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import ChannelSamples

__all__ = [
    "SpectralFrames",
    "CorrelationTensor",
    "spectral_frames",
    "shifted_correlation",
    "cyclic_layer_fft",
]


@dataclass(frozen=True)
class SpectralFrames:
    """Frame stack, shape (window_count, n_channels, bins)."""

    frames: np.ndarray
    f_s_hz: float
    window_count: int
    bins: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.frames, dtype=np.complex128)
        if arr.shape != (self.window_count, arr.shape[1], self.bins):
            raise ValueError("frames must have shape (window_count, M, bins)")
        object.__setattr__(self, "frames", arr)

    @property
    def n_channels(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class CorrelationTensor:
    """Layers R[q_a] of shape (Q - q_a, M, M) for q_a = 0..Q inclusive.

    Entry R[q_a][q_f, i, j] estimates E[z_i(q_f) conj(z_j(q_f + q_a))]. The
    final layer is empty by shape; shifts never wrap around the band edge.
    """

    entries: tuple[np.ndarray, ...]
    f_s_hz: float
    m: int
    q: int
    p: int

    def __post_init__(self) -> None:
        if len(self.entries) != self.q + 1:
            raise ValueError("need Q + 1 shift layers")
        fixed = []
        for q_a, layer in enumerate(self.entries):
            arr = np.asarray(layer, dtype=np.complex128)
            if arr.shape != (self.q - q_a, self.m, self.m):
                raise ValueError(f"layer {q_a} must have shape ({self.q - q_a}, M, M)")
            fixed.append(arr)
        object.__setattr__(self, "entries", tuple(fixed))

    @property
    def delta_hz(self) -> float:
        return self.f_s_hz / self.q

    def layer(self, q_a: int) -> np.ndarray:
        return self.entries[q_a]


def spectral_frames(samples: ChannelSamples, p: int, q: int) -> SpectralFrames:
    """Split each channel into p windows of q samples and FFT them.

    Channel delays (multicoset coset offsets) put a known linear phase on
    each channel's window spectrum; it is removed here so every frame obeys
    the same sensing matrix. Trailing samples beyond p*q are discarded.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    if samples.length < p * q:
        raise ValueError(f"need at least p*q = {p * q} samples, have {samples.length}")
    m = samples.n_channels
    windows = samples.samples[:, : p * q].reshape(m, p, q).transpose(1, 0, 2)
    frames = np.fft.fft(windows, axis=2)
    if any(samples.delays_nyq):
        delays = np.asarray(samples.delays_nyq, dtype=np.float64)
        bins = np.arange(q, dtype=np.float64)
        phase = np.exp(-2j * np.pi * np.outer(delays, bins) / (q * samples.n_slices))
        frames = frames * phase[None, :, :]
    return SpectralFrames(frames, samples.f_s_hz, p, q)


def shifted_correlation(frames: SpectralFrames) -> CorrelationTensor:
    """Average conjugate outer products over windows at every bin shift."""
    f = frames.frames
    p, m, q = f.shape
    conj = f.conj()
    layers = []
    for q_a in range(q + 1):
        nf = q - q_a
        layers.append(
            np.einsum("piq,pjq->qij", f[:, :, :nf], conj[:, :, q_a : q_a + nf]) / p
        )
    return CorrelationTensor(tuple(layers), frames.f_s_hz, m, q, p)


def cyclic_layer_fft(frames: SpectralFrames, q_a: int) -> np.ndarray:
    """Fine-offset correlation layer for one bin shift.

    Returns shape (P, Q - q_a, M, M): axis 0 indexes the cyclic-frequency
    offset in units of one bin over P, obtained by an FFT of the per-window
    products across the window index. Slice [0] is the plain averaged layer;
    slice [nu] holds the content whose cyclic frequency sits nu/P bins above
    the coarse value of the entry (modulo one bin).
    """
    f = frames.frames
    p, m, q = f.shape
    if not 0 <= q_a <= q:
        raise ValueError("q_a out of range")
    nf = q - q_a
    if nf == 0:
        return np.zeros((p, 0, m, m), dtype=np.complex128)
    prod = np.einsum("piq,pjq->pqij", f[:, :, :nf], f[:, :, q_a : q_a + nf].conj())
    return np.fft.fft(prod, axis=0) / p
