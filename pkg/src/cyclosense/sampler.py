"""Sub-Nyquist front ends: multicoset sampler and mixer-based converter.

Both front ends are reduced to the same linear model: per-window DFT frames
of the channel streams equal ``A @ (slice_gain * W)`` where ``W`` holds the
window-DFT bins of the Nyquist signal arranged into N spectral slices of
width f_s. ``slice_gain`` records the unit convention so oracles can build
the slice vectors exactly; recovery never needs it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import ceil

import numpy as np

from .signals import NyquistSignal

__all__ = [
    "MulticosetConfig",
    "MwcConfig",
    "SensingMatrix",
    "ChannelSamples",
    "slice_index_offsets",
    "multicoset_matrix",
    "mwc_matrix",
    "simulate_sampling",
    "spark_lower_check",
    "min_rate_bounds",
]


def slice_index_offsets(n_slices: int) -> np.ndarray:
    """Signed slice indices K_k, k = 1..N.

    Slice k covers [K_k f_s, (K_k+1) f_s); odd N centers the fan on zero,
    even N has one extra negative slice.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be positive")
    k = np.arange(1, n_slices + 1)
    shift = (n_slices + 1) // 2 if n_slices % 2 else (n_slices + 2) // 2
    return k - shift


@dataclass(frozen=True)
class MulticosetConfig:
    n_slices: int
    cosets: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cosets", tuple(int(c) for c in self.cosets))
        if self.n_slices < 2:
            raise ValueError("n_slices must be at least 2")
        if not self.cosets:
            raise ValueError("at least one coset required")
        if any(c < 0 or c >= self.n_slices for c in self.cosets):
            raise ValueError("cosets must lie in [0, n_slices)")
        if any(b <= a for a, b in zip(self.cosets, self.cosets[1:])):
            raise ValueError("cosets must be strictly increasing")

    @property
    def n_channels(self) -> int:
        return len(self.cosets)


@dataclass(frozen=True)
class MwcConfig:
    """Mixer bank: each channel multiplies by a periodic +-1 pattern, then
    lowpasses and decimates to one sample per pattern period."""

    n_slices: int
    n_channels: int
    mixing_sequences: np.ndarray
    channel_rate_hz: float

    def __post_init__(self) -> None:
        seq = np.asarray(self.mixing_sequences, dtype=np.float64)
        if seq.shape != (self.n_channels, self.n_slices):
            raise ValueError(
                f"mixing_sequences must have shape ({self.n_channels}, {self.n_slices})"
            )
        if not np.all(np.abs(seq) == 1.0):
            raise ValueError("mixing sequences must be +-1 valued")
        object.__setattr__(self, "mixing_sequences", seq)
        if self.channel_rate_hz <= 0:
            raise ValueError("channel_rate_hz must be positive")

    @classmethod
    def random(
        cls,
        n_slices: int,
        n_channels: int,
        channel_rate_hz: float,
        seed: int | np.random.SeedSequence | np.random.Generator | None = None,
    ) -> "MwcConfig":
        rng = np.random.default_rng(seed)
        seq = rng.integers(0, 2, size=(n_channels, n_slices)) * 2.0 - 1.0
        return cls(n_slices, n_channels, seq, channel_rate_hz)


@dataclass(frozen=True)
class SensingMatrix:
    """Linear map from slice vectors to channel frames."""

    a: np.ndarray
    f_s_hz: float
    n_slices: int
    slice_gain: float

    def __post_init__(self) -> None:
        mat = np.asarray(self.a, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[1] != self.n_slices:
            raise ValueError("matrix must be M x n_slices")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "a", mat)

    @property
    def n_channels(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class ChannelSamples:
    """Channel streams at rate f_s. ``delays_nyq`` holds each channel's
    sampling offset in Nyquist ticks (zero for the mixer front end); frame
    computation needs it to align window phases."""

    samples: np.ndarray
    f_s_hz: float
    delays_nyq: tuple[int, ...]
    n_slices: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValueError("samples must be M x L")
        if not np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.float64)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "delays_nyq", tuple(int(d) for d in self.delays_nyq))
        if len(self.delays_nyq) != arr.shape[0]:
            raise ValueError("one delay per channel required")
        if self.f_s_hz <= 0:
            raise ValueError("f_s_hz must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


def multicoset_matrix(config: MulticosetConfig, nyquist_rate_hz: float) -> SensingMatrix:
    """A_ik = (1/(N T_nyq)) exp(+2j pi c_i K_k / N); slice_gain = T_nyq."""
    n = config.n_slices
    k_off = slice_index_offsets(n)
    c = np.asarray(config.cosets, dtype=np.float64)
    a = np.exp(2j * np.pi * np.outer(c, k_off) / n) * (nyquist_rate_hz / n)
    return SensingMatrix(a, nyquist_rate_hz / n, n, 1.0 / nyquist_rate_hz)


def mwc_matrix(config: MwcConfig, b_max_hz: float | None = None) -> SensingMatrix:
    """A_ik = conj(DFS of the mixing pattern) at line -K_k; slice_gain = 1/N.

    Row power is exactly one by Parseval of the +-1 pattern; checked anyway
    to guard against malformed inputs.
    """
    if b_max_hz is not None and config.channel_rate_hz < b_max_hz:
        raise ValueError("channel rate below the widest transmission bandwidth")
    n = config.n_slices
    dfs = np.fft.fft(config.mixing_sequences, axis=1) / n
    k_off = slice_index_offsets(n)
    cols = np.mod(-k_off, n)
    a = dfs[:, cols]
    row_power = np.sum(np.abs(a) ** 2, axis=1)
    if np.any(np.abs(row_power - 1.0) > 0.05):
        raise ValueError("mixer row power deviates from unity beyond tolerance")
    return SensingMatrix(a, config.channel_rate_hz, n, 1.0 / n)


def simulate_sampling(
    signal: NyquistSignal, config: MulticosetConfig | MwcConfig
) -> ChannelSamples:
    """Run the front end on a Nyquist-grid signal.

    Multicoset keeps every N-th sample per coset offset (real output). The
    mixer path multiplies by the pattern, applies an ideal one-sided FFT mask
    keeping [0, f_s), and decimates by N (complex output); on the sample grid
    this equals ifft of the first L record-DFT bins over N.
    """
    x = signal.samples
    n = config.n_slices
    if x.size % n:
        raise ValueError(f"signal length {x.size} not divisible by n_slices {n}")
    length = x.size // n

    if isinstance(config, MulticosetConfig):
        rows = np.stack([x[c::n][:length] for c in config.cosets])
        return ChannelSamples(rows, signal.rate_hz / n, config.cosets, n)

    f_s = config.channel_rate_hz
    if abs(signal.rate_hz - f_s * n) > 1e-6 * signal.rate_hz:
        raise ValueError(
            "channel_rate_hz * n_slices must equal the Nyquist rate "
            f"({f_s * n:.6e} vs {signal.rate_hz:.6e})"
        )
    if ceil(signal.rate_hz / f_s - 1e-9) != n:
        raise ValueError("n_slices must equal ceil(nyquist_rate / channel_rate)")
    reps = x.size // n
    rows = np.empty((config.n_channels, length), dtype=np.complex128)
    for i in range(config.n_channels):
        mixed = x * np.tile(config.mixing_sequences[i], reps)
        spectrum = np.fft.fft(mixed)
        rows[i] = np.fft.ifft(spectrum[:length]) / n
    return ChannelSamples(rows, f_s, (0,) * config.n_channels, n)


def spark_lower_check(a: SensingMatrix | np.ndarray, m: int | None = None) -> bool:
    """True iff every m-column subset has full column rank.

    With m equal to the row count this certifies spark(A) = M + 1, the
    maximum possible. Exhaustive over column subsets; refuses more than 24
    columns. Singular values below 1e-9 of the subset's largest count as
    zero.
    """
    mat = a.a if isinstance(a, SensingMatrix) else np.asarray(a, dtype=np.complex128)
    n_rows, n_cols = mat.shape
    if n_cols > 24:
        raise ValueError("spark check is exhaustive; refusing more than 24 columns")
    if m is None:
        m = n_rows
    if m > n_rows or m < 1:
        return False
    chunk = 4096
    combos = itertools.combinations(range(n_cols), m)
    cols_t = mat.T.copy()
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            return True
        sub = cols_t[np.asarray(block)]  # (chunk, m, M) rows are columns of A
        svals = np.linalg.svd(sub, compute_uv=False)
        if np.any(svals[:, -1] <= 1e-9 * svals[:, 0]):
            return False


def min_rate_bounds(
    n_sig: int,
    b_max_hz: float,
    nyquist_rate_hz: float | None = None,
    f_s_hz: float | None = None,
    sparse: bool = True,
) -> dict[str, float | int]:
    """Minimal total sampling rate and channel count.

    Sparse scenes: cyclic-feature recovery needs 4/5 of the rate that plain
    spectrum recovery would need twice over, giving f_min = (16/5) n_sig b
    and the smallest integer channel count strictly above 8K/5 with K = 2
    n_sig. Without sparsity the bound is (4/5) of Nyquist with K = N.
    """
    if sparse:
        if n_sig < 1:
            raise ValueError("n_sig must be positive for the sparse bound")
        k = 2 * n_sig
        return {
            "f_min_hz": (16.0 * n_sig * b_max_hz) / 5.0,
            "m_min": (8 * k) // 5 + 1,
        }
    if nyquist_rate_hz is None or f_s_hz is None:
        raise ValueError("non-sparse bound needs nyquist_rate_hz and f_s_hz")
    n = ceil(nyquist_rate_hz / f_s_hz - 1e-9)
    return {
        "f_min_hz": 4.0 * nyquist_rate_hz / 5.0,
        "m_min": (4 * n) // 5 + 1,
    }
