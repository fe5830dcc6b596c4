"""Multiband transmission synthesis on a Nyquist-rate grid.

Transmissions are PAM waveforms (root-raised-cosine pulses) mixed onto real
carriers. A scene is a sum of transmissions plus optional white Gaussian noise
scaled to a target SNR measured against the summed per-transmission powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MOD_AM = "AM"
MOD_BPSK = "BPSK"
MOD_QAM = "QAM"
MODULATIONS = (MOD_AM, MOD_BPSK, MOD_QAM)

# pulse truncation in symbol periods on each side
RRC_SPAN = 8

__all__ = [
    "MOD_AM",
    "MOD_BPSK",
    "MOD_QAM",
    "MODULATIONS",
    "TransmissionSpec",
    "SignalConfig",
    "NyquistSignal",
    "DiamondSet",
    "raised_cosine_root",
    "synthesize_transmission",
    "compose_signal",
    "theoretical_support",
    "theoretical_features",
]


@dataclass(frozen=True)
class TransmissionSpec:
    """One transmission: carrier, occupied bandwidth, pulse and symbol data."""

    carrier_hz: float
    bandwidth_hz: float
    symbol_period_s: float
    excess_bandwidth: float
    modulation: str
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")
        if not 0.0 <= self.excess_bandwidth <= 1.0:
            raise ValueError("excess_bandwidth must lie in [0, 1]")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {MODULATIONS}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        expected = (1.0 + self.excess_bandwidth) / self.bandwidth_hz
        if not np.isclose(self.symbol_period_s, expected, rtol=1e-6, atol=0.0):
            raise ValueError(
                "inconsistent symbol period: expected (1+excess)/bandwidth "
                f"= {expected:.6e} s, got {self.symbol_period_s:.6e} s"
            )

    @classmethod
    def with_period_from_bandwidth(
        cls,
        carrier_hz: float,
        bandwidth_hz: float,
        modulation: str = MOD_BPSK,
        excess_bandwidth: float = 0.0,
        amplitude: float = 1.0,
    ) -> "TransmissionSpec":
        return cls(
            carrier_hz=carrier_hz,
            bandwidth_hz=bandwidth_hz,
            symbol_period_s=(1.0 + excess_bandwidth) / bandwidth_hz,
            excess_bandwidth=excess_bandwidth,
            modulation=modulation,
            amplitude=amplitude,
        )

    @property
    def band_edges_hz(self) -> tuple[float, float]:
        half = 0.5 * self.bandwidth_hz
        return (self.carrier_hz - half, self.carrier_hz + half)


@dataclass(frozen=True)
class SignalConfig:
    """Scene description. ``snr_db is None`` means the noiseless mode."""

    transmissions: tuple[TransmissionSpec, ...]
    nyquist_rate_hz: float
    duration_s: float
    rng_seed: int
    snr_db: float | None = None
    noise_band_hz: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "transmissions", tuple(self.transmissions))
        if self.nyquist_rate_hz <= 0:
            raise ValueError("nyquist_rate_hz must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        for spec in self.transmissions:
            _check_in_band(spec, self.nyquist_rate_hz)
        if self.noise_band_hz is not None:
            lo, hi = self.noise_band_hz
            if not 0 <= lo < hi <= self.nyquist_rate_hz / 2:
                raise ValueError("noise_band_hz must satisfy 0 <= lo < hi <= f_nyq/2")


@dataclass(frozen=True)
class NyquistSignal:
    """Real samples on the uniform Nyquist grid."""

    samples: np.ndarray
    rate_hz: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", arr)
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass(frozen=True)
class DiamondSet:
    """Support region of the cyclic spectrum of one transmission.

    Four diamonds in the (f, alpha) plane: a pair on the f axis over the
    occupied band and a mirrored pair on the alpha axis around +-2 f_c.
    Membership is evaluated from the band edges alone; when the Nyquist rate
    is known the outer diamond |f| + |alpha|/2 <= f_nyq/2 clips the set.
    """

    f_lo_hz: float
    f_hi_hz: float
    nyquist_rate_hz: float | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.f_lo_hz < self.f_hi_hz:
            raise ValueError("band edges must satisfy 0 <= f_lo < f_hi")

    def contains(self, f_hz, alpha_hz) -> np.ndarray:
        f = np.abs(np.asarray(f_hz, dtype=np.float64))
        a2 = 0.5 * np.abs(np.asarray(alpha_hz, dtype=np.float64))
        inside = (np.abs(f - a2) > self.f_lo_hz) & (f + a2 < self.f_hi_hz)
        if self.nyquist_rate_hz is not None:
            inside &= f + a2 <= self.nyquist_rate_hz / 2
        return inside

    def vertices(self) -> tuple[tuple[tuple[float, float], ...], ...]:
        f1, f2 = self.f_lo_hz, self.f_hi_hz
        fc = 0.5 * (f1 + f2)
        b = f2 - f1
        band = lambda s: ((s * f1, 0.0), (s * fc, b), (s * f2, 0.0), (s * fc, -b))
        carrier = lambda s: ((0.0, s * 2 * f1), (0.5 * b, s * 2 * fc), (0.0, s * 2 * f2), (-0.5 * b, s * 2 * fc))
        return (band(+1), band(-1), carrier(+1), carrier(-1))


def _check_in_band(spec: TransmissionSpec, rate_hz: float) -> None:
    lo, hi = spec.band_edges_hz
    if lo <= 0 or hi >= rate_hz / 2:
        raise ValueError(
            f"transmission band [{lo:.3e}, {hi:.3e}] Hz must lie strictly "
            f"inside (0, {rate_hz / 2:.3e}) Hz"
        )


def _n_samples(duration_s: float, rate_hz: float) -> int:
    raw = duration_s * rate_hz
    n = int(round(raw))
    if n <= 0 or abs(raw - n) > 1e-6 * max(1.0, raw):
        raise ValueError(
            f"duration {duration_s} s does not give an integer sample count at "
            f"{rate_hz} Hz"
        )
    return n


def raised_cosine_root(t, period_s: float, beta: float) -> np.ndarray:
    """Root-raised-cosine pulse evaluated at times ``t`` (seconds).

    ``beta = 0`` degenerates to sinc. The two removable singularities are
    patched explicitly.
    """
    x = np.asarray(t, dtype=np.float64) / period_s
    if beta == 0.0:
        return np.sinc(x)
    out = np.empty_like(x)
    ts = 1.0 / (4.0 * beta)
    near_zero = np.abs(x) < 1e-10
    near_sing = np.abs(np.abs(x) - ts) < 1e-8
    ok = ~(near_zero | near_sing)
    xo = x[ok]
    num = np.sin(np.pi * xo * (1 - beta)) + 4 * beta * xo * np.cos(np.pi * xo * (1 + beta))
    den = np.pi * xo * (1.0 - (4 * beta * xo) ** 2)
    out[ok] = num / den
    out[near_zero] = 1.0 - beta + 4 * beta / np.pi
    out[near_sing] = (beta / np.sqrt(2.0)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return out


def _pulse_tables(frac: np.ndarray, half_len: int, rate_hz: float, period_s: float, beta: float) -> np.ndarray:
    """Sampled pulse per fractional symbol offset, one row per offset.

    Rows are normalized to sum(g^2) = T*rate so a unit-variance symbol stream
    carries unit average power.
    """
    m = np.arange(-half_len, half_len + 1, dtype=np.float64)
    t = (m[None, :] - frac[:, None]) / rate_hz
    tab = raised_cosine_root(t, period_s, beta)
    target = period_s * rate_hz
    tab *= np.sqrt(target / np.sum(tab * tab, axis=1))[:, None]
    return tab


def _symbol_stream(rng: np.random.Generator, n_sym: int, modulation: str) -> tuple[np.ndarray, np.ndarray | None]:
    if modulation == MOD_BPSK:
        return rng.integers(0, 2, n_sym) * 2.0 - 1.0, None
    if modulation == MOD_QAM:
        i = rng.integers(0, 2, n_sym) * 2.0 - 1.0
        q = rng.integers(0, 2, n_sym) * 2.0 - 1.0
        return i, q
    # AM: slowly varying band-limited real message as the in-phase stream.
    # Smoothing over 4 symbols keeps the message band under half the symbol
    # rate, so no symbol-rate feature appears.
    raw = rng.standard_normal(n_sym + 3)
    msg = np.convolve(raw, np.full(4, 0.25), mode="valid")
    rms = np.sqrt(np.mean(msg * msg))
    if rms > 0:
        msg = msg / rms
    return msg, None


def _accumulate_pam(
    acc: np.ndarray,
    symbols: np.ndarray,
    positions_samp: np.ndarray,
    half_len: int,
    rate_hz: float,
    period_s: float,
    beta: float,
    chunk: int = 2048,
) -> None:
    """Scatter-add pulse-shaped symbols into ``acc`` (length-L baseband)."""
    length = acc.size
    n_sym = symbols.size
    offsets = np.arange(-half_len, half_len + 1)
    step = period_s * rate_hz

    # When samples-per-symbol is rational with a small denominator the
    # fractional offsets cycle; evaluate the pulse once per phase.
    tables = None
    phase_of = None
    frac_fr = Fraction(step).limit_denominator(64)
    n_span = abs(positions_samp[0]) + n_sym * abs(step) + 1
    q = frac_fr.denominator
    if abs(float(frac_fr) - step) * n_span < 1e-6 and n_sym >= q:
        phase_of = (np.arange(n_sym) % q).astype(np.intp)
        lead = positions_samp[:q]
        tables = _pulse_tables(lead - np.floor(lead), half_len, rate_hz, period_s, beta)

    for start in range(0, n_sym, chunk):
        stop = min(start + chunk, n_sym)
        pos = positions_samp[start:stop]
        n0 = np.floor(pos).astype(np.int64)
        frac = pos - n0
        if tables is not None:
            tab = tables[phase_of[start:stop]]
        else:
            tab = _pulse_tables(frac, half_len, rate_hz, period_s, beta)
        idx = (n0[:, None] + offsets[None, :]).ravel()
        w = (symbols[start:stop, None] * tab).ravel()
        ok = (idx >= 0) & (idx < length)
        acc += np.bincount(idx[ok], weights=w[ok], minlength=length)


def synthesize_transmission(
    spec: TransmissionSpec,
    duration_s: float,
    rate_hz: float,
    seed: int | np.random.SeedSequence | np.random.Generator | None = None,
) -> NyquistSignal:
    """Render one transmission on the Nyquist grid.

    Draw order under the seed: carrier phase, symbol clock offset, in-phase
    symbols, quadrature symbols. Identical seeds give identical samples.
    """
    _check_in_band(spec, rate_hz)
    length = _n_samples(duration_s, rate_hz)
    rng = np.random.default_rng(seed)
    period = spec.symbol_period_s
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    tau0 = rng.uniform(0.0, period)

    half_len = int(np.ceil(RRC_SPAN * period * rate_hz))
    step = period * rate_hz
    start_samp = tau0 * rate_hz
    k_min = int(np.floor((-start_samp - half_len) / step))
    k_max = int(np.ceil((length - 1 + half_len - start_samp) / step))
    n_sym = k_max - k_min + 1
    positions = start_samp + (np.arange(k_min, k_max + 1, dtype=np.float64)) * step

    sym_i, sym_q = _symbol_stream(rng, n_sym, spec.modulation)
    base_i = np.zeros(length, dtype=np.float64)
    _accumulate_pam(base_i, sym_i, positions, half_len, rate_hz, period, spec.excess_bandwidth)

    n = np.arange(length, dtype=np.float64)
    ph = 2.0 * np.pi * spec.carrier_hz * n / rate_hz + phase0
    out = base_i * np.cos(ph)
    if sym_q is not None:
        base_q = np.zeros(length, dtype=np.float64)
        _accumulate_pam(base_q, sym_q, positions, half_len, rate_hz, period, spec.excess_bandwidth)
        out -= base_q * np.sin(ph)
    out *= spec.amplitude * np.sqrt(2.0)
    return NyquistSignal(out, rate_hz)


def compose_signal(config: SignalConfig) -> NyquistSignal:
    """Sum the configured transmissions and add noise at the target SNR.

    SNR is the ratio of summed per-transmission powers to the noise power;
    the noise is scaled against its measured power, so the realized ratio is
    exact. A scene with no transmissions and an SNR set gives unit-power
    noise.
    """
    length = _n_samples(config.duration_s, config.nyquist_rate_hz)
    root = np.random.SeedSequence(config.rng_seed)
    children = root.spawn(len(config.transmissions) + 1)

    total = np.zeros(length, dtype=np.float64)
    signal_power = 0.0
    for spec, child in zip(config.transmissions, children):
        part = synthesize_transmission(spec, config.duration_s, config.nyquist_rate_hz, child)
        total += part.samples
        signal_power += float(np.mean(part.samples**2))

    if config.snr_db is not None:
        ref = signal_power if config.transmissions else 1.0
        target = ref / 10.0 ** (config.snr_db / 10.0)
        noise = np.random.default_rng(children[-1]).standard_normal(length)
        if config.noise_band_hz is not None:
            spectrum = np.fft.rfft(noise)
            freqs = np.fft.rfftfreq(length, d=1.0 / config.nyquist_rate_hz)
            lo, hi = config.noise_band_hz
            spectrum[(freqs < lo) | (freqs > hi)] = 0.0
            noise = np.fft.irfft(spectrum, n=length)
        power = float(np.mean(noise * noise))
        if power > 0:
            noise *= np.sqrt(target / power)
        total += noise
    return NyquistSignal(total, config.nyquist_rate_hz)


def theoretical_support(spec: TransmissionSpec, nyquist_rate_hz: float | None = None) -> DiamondSet:
    lo, hi = spec.band_edges_hz
    return DiamondSet(lo, hi, nyquist_rate_hz)


def theoretical_features(spec: TransmissionSpec) -> tuple[tuple[float, float], ...]:
    """Expected (f, alpha) peak coordinates for one transmission.

    The carrier pair (0, +-2 f_c) is reported for every modulation; BPSK adds
    the four symbol-rate features (+-f_c, +-1/T). Note balanced QAM physically
    suppresses the carrier line (the I/Q symbol variances cancel), so treat
    its carrier entry as nominal.
    """
    fc = spec.carrier_hz
    feats = [(0.0, 2.0 * fc), (0.0, -2.0 * fc)]
    if spec.modulation == MOD_BPSK:
        srate = 1.0 / spec.symbol_period_s
        feats += [(fc, srate), (fc, -srate), (-fc, srate), (-fc, -srate)]
    return tuple(feats)
