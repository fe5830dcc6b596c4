"""File formats for configs, sample records, tensors, grids, and reports.

Conventions: configs and reports are JSON; bulk numeric payloads are raw
little-endian arrays with a JSON sidecar (or a one-line JSON header inside
the same file); delimited exports use plain CSV with ``%.10g`` floats.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .correlation import CorrelationTensor
from .detect import DetectionReport, TransmissionEstimate
from .recovery import SupportSet
from .sampler import ChannelSamples, MulticosetConfig, MwcConfig
from .signals import NyquistSignal, SignalConfig, TransmissionSpec
from .spectrum import CyclicSpectrumGrid

__all__ = [
    "write_signal_config",
    "read_signal_config",
    "write_signal",
    "read_signal",
    "write_front_end",
    "read_front_end",
    "write_channels",
    "read_channels",
    "write_tensor",
    "read_tensor",
    "write_support",
    "read_support",
    "write_grid_csv",
    "write_grid_blob",
    "read_grid_blob",
    "write_report",
    "read_report",
    "write_roc_csv",
]

_FMT = "%.10g"


def _f(x: float) -> float:
    return float(_FMT % x)


# -- scene configs -----------------------------------------------------------

def write_signal_config(config: SignalConfig, path: str | Path) -> Path:
    path = Path(path)
    data = {
        "transmissions": [asdict(t) for t in config.transmissions],
        "nyquist_rate_hz": config.nyquist_rate_hz,
        "duration_s": config.duration_s,
        "rng_seed": config.rng_seed,
        "snr_db": config.snr_db,
        "noise_band_hz": list(config.noise_band_hz) if config.noise_band_hz else None,
    }
    path.write_text(json.dumps(data, indent=2))
    return path


def read_signal_config(path: str | Path) -> SignalConfig:
    data = json.loads(Path(path).read_text())
    txs = tuple(TransmissionSpec(**t) for t in data["transmissions"])
    band = data.get("noise_band_hz")
    return SignalConfig(
        transmissions=txs,
        nyquist_rate_hz=data["nyquist_rate_hz"],
        duration_s=data["duration_s"],
        rng_seed=data["rng_seed"],
        snr_db=data.get("snr_db"),
        noise_band_hz=tuple(band) if band else None,
    )


# -- full-rate records -------------------------------------------------------

def write_signal(signal: NyquistSignal, path: str | Path) -> Path:
    path = Path(path)
    signal.samples.astype("<f8").tofile(path)
    sidecar = {"rate_hz": signal.rate_hz, "length": int(signal.samples.size)}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))
    return path


def read_signal(path: str | Path) -> NyquistSignal:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    samples = np.fromfile(path, dtype="<f8", count=sidecar["length"])
    return NyquistSignal(samples=samples, rate_hz=sidecar["rate_hz"])


# -- front-end configs -------------------------------------------------------

def write_front_end(config: MulticosetConfig | MwcConfig, path: str | Path) -> Path:
    path = Path(path)
    if isinstance(config, MulticosetConfig):
        data = {"type": "multicoset", "n_slices": config.n_slices, "cosets": list(config.cosets)}
    elif isinstance(config, MwcConfig):
        data = {
            "type": "mwc",
            "n_slices": config.n_slices,
            "n_channels": config.n_channels,
            "channel_rate_hz": config.channel_rate_hz,
            "mixing_sequences": np.asarray(config.mixing_sequences, dtype=np.int64).tolist(),
        }
    else:
        raise TypeError(f"unsupported front-end config {type(config).__name__}")
    path.write_text(json.dumps(data, indent=2))
    return path


def read_front_end(path: str | Path) -> MulticosetConfig | MwcConfig:
    data = json.loads(Path(path).read_text())
    kind = data.get("type")
    if kind == "multicoset":
        return MulticosetConfig(n_slices=data["n_slices"], cosets=tuple(data["cosets"]))
    if kind == "mwc":
        seqs = np.asarray(data["mixing_sequences"], dtype=np.float64)
        return MwcConfig(
            n_slices=data["n_slices"],
            n_channels=data["n_channels"],
            mixing_sequences=seqs,
            channel_rate_hz=data["channel_rate_hz"],
        )
    raise ValueError(f"unknown front-end type {kind!r}")


# -- channel sample records --------------------------------------------------

def write_channels(channels: ChannelSamples, path: str | Path) -> Path:
    path = Path(path)
    np.ascontiguousarray(channels.samples, dtype="<c8").tofile(path)
    sidecar = {
        "m": channels.n_channels,
        "l": channels.length,
        "f_s_hz": channels.f_s_hz,
        "delays_nyq": list(channels.delays_nyq),
        "n_slices": channels.n_slices,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar))
    return path


def read_channels(path: str | Path) -> ChannelSamples:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    m, length = sidecar["m"], sidecar["l"]
    flat = np.fromfile(path, dtype="<c8", count=m * length)
    return ChannelSamples(
        samples=flat.reshape(m, length).astype(np.complex128),
        f_s_hz=sidecar["f_s_hz"],
        delays_nyq=tuple(sidecar["delays_nyq"]),
        n_slices=sidecar["n_slices"],
    )


# -- correlation tensors -----------------------------------------------------

def write_tensor(tensor: CorrelationTensor, path: str | Path) -> Path:
    path = Path(path)
    header = {"m": tensor.m, "q": tensor.q, "p": tensor.p, "f_s_hz": tensor.f_s_hz}
    with path.open("wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for layer in tensor.entries:
            fh.write(np.ascontiguousarray(layer, dtype="<c8").tobytes())
    return path


def read_tensor(path: str | Path) -> CorrelationTensor:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode())
        m, q = header["m"], header["q"]
        layers = []
        for qa in range(q + 1):
            nf = q - qa
            buf = fh.read(nf * m * m * 8)
            layer = np.frombuffer(buf, dtype="<c8").reshape(nf, m, m).astype(np.complex128)
            layers.append(layer)
    return CorrelationTensor(entries=tuple(layers), f_s_hz=header["f_s_hz"], m=m, q=q, p=header["p"])


# -- recovery supports -------------------------------------------------------

def write_support(support: SupportSet, path: str | Path) -> Path:
    path = Path(path)
    data = {
        "layout_version": support.version,
        "n_slices": support.n_slices,
        "indices": list(support.indices),
        "condition_warning": support.condition_warning,
        "overflow": support.overflow,
    }
    path.write_text(json.dumps(data, indent=2))
    return path


def read_support(path: str | Path) -> SupportSet:
    data = json.loads(Path(path).read_text())
    return SupportSet(
        indices=tuple(data["indices"]),
        n_slices=data["n_slices"],
        version=data["layout_version"],
        condition_warning=data.get("condition_warning", False),
        overflow=data.get("overflow", False),
    )


# -- spectrum grids ----------------------------------------------------------

def write_grid_csv(grid: CyclicSpectrumGrid, path: str | Path) -> Path:
    """Nonzero cells only: alpha_hz, f_hz, magnitude."""
    path = Path(path)
    alphas = grid.alpha_bins_hz()
    freqs = grid.f_bins_hz()
    mags = np.abs(grid.values)
    rows_idx, cols_idx = np.nonzero(mags)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha_hz", "f_hz", "magnitude"])
        for r, c in zip(rows_idx.tolist(), cols_idx.tolist()):
            writer.writerow([_FMT % alphas[r], _FMT % freqs[c], _FMT % mags[r, c]])
    return path


def write_grid_blob(grid: CyclicSpectrumGrid, path: str | Path) -> Path:
    path = Path(path)
    header = dict(grid.metadata)
    header["shape"] = list(grid.values.shape)
    with path.open("wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(np.ascontiguousarray(grid.values, dtype="<c8").tobytes())
    return path


def read_grid_blob(path: str | Path) -> CyclicSpectrumGrid:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode())
        shape = tuple(header.pop("shape"))
        buf = fh.read(int(np.prod(shape)) * 8)
        values = np.frombuffer(buf, dtype="<c8").reshape(shape).copy()
    return CyclicSpectrumGrid(values=values, metadata=header)


# -- detection reports -------------------------------------------------------

def write_report(report: DetectionReport, path: str | Path) -> Path:
    path = Path(path)
    data = {
        "n_sig_hat": report.n_sig_hat,
        "asymmetry_flag": report.asymmetry_flag,
        "transmissions": [
            {
                "carrier_hz": _f(t.carrier_hz),
                "bandwidth_hz": _f(t.bandwidth_hz),
                "peak_alpha_hz": _f(t.peak_alpha_hz),
                "cluster_id": t.cluster_id,
            }
            for t in report.transmissions
        ],
    }
    path.write_text(json.dumps(data, indent=2))
    return path


def read_report(path: str | Path) -> DetectionReport:
    data = json.loads(Path(path).read_text())
    txs = tuple(TransmissionEstimate(**t) for t in data["transmissions"])
    return DetectionReport(
        n_sig_hat=data["n_sig_hat"],
        transmissions=txs,
        asymmetry_flag=data.get("asymmetry_flag", False),
    )


# -- ROC tables --------------------------------------------------------------

def write_roc_csv(points: list[tuple[float, float, float]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "pd", "pfa"])
        for t, pd, pfa in points:
            writer.writerow([_FMT % t, _FMT % pd, _FMT % pfa])
    return path
