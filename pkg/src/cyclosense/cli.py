"""Command-line front end.

Subcommands cover the pipeline stages (generate, sample, recover, detect),
the Monte-Carlo experiment runner, and a quick selftest. Exit codes: 0 on
success, 1 for configuration or validation problems, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as cio
from .detect import detect_transmissions
from .harness import ExperimentConfig, emit_results, run_monte_carlo, run_roc
from .pipeline import run_recovery
from .sampler import MulticosetConfig, multicoset_matrix, mwc_matrix, simulate_sampling
from .signals import SignalConfig, TransmissionSpec, compose_signal
from .spectrum import profile_at_zero_f

__all__ = ["main"]


def _cmd_generate(args) -> int:
    config = cio.read_signal_config(args.config)
    signal = compose_signal(config)
    path = cio.write_signal(signal, args.out)
    print(f"wrote {signal.samples.size} samples at {signal.rate_hz:.6g} Hz to {path}")
    return 0


def _cmd_sample(args) -> int:
    signal = cio.read_signal(args.signal)
    fe = cio.read_front_end(args.frontend)
    channels = simulate_sampling(signal, fe)
    path = cio.write_channels(channels, args.out)
    print(
        f"wrote {channels.n_channels} channels x {channels.length} samples "
        f"at {channels.f_s_hz:.6g} Hz to {path}"
    )
    return 0


def _sensing_for(fe, channels):
    if isinstance(fe, MulticosetConfig):
        return multicoset_matrix(fe, channels.f_s_hz * channels.n_slices)
    return mwc_matrix(fe)


def _cmd_recover(args) -> int:
    channels = cio.read_channels(args.channels)
    fe = cio.read_front_end(args.frontend)
    sensing = _sensing_for(fe, channels)
    result = run_recovery(
        channels,
        sensing,
        args.windows,
        args.bins,
        args.sparsity,
        mode=args.mode,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [cio.write_grid_blob(result.grid, outdir / "grid.bin")]
    if args.csv:
        written.append(cio.write_grid_csv(result.grid, outdir / "grid.csv"))
    if args.support:
        payload = [
            {"q_a": qa, "indices": list(s.indices), "condition_warning": s.condition_warning}
            for qa, s in enumerate(result.supports)
        ]
        p = outdir / "supports.json"
        p.write_text(json.dumps(payload, indent=2))
        written.append(p)
    if args.psd:
        import csv as _csv

        p = outdir / "psd.csv"
        with p.open("w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["f_hz", "psd_dense", "psd_sparse"])
            for f, d, s in zip(result.psd_freqs_hz, result.psd_dense, result.psd_sparse):
                w.writerow(["%.10g" % f, "%.10g" % d, "%.10g" % s])
        written.append(p)
    if args.plot:
        written.extend(_render_recovery(result, outdir))
    for p in written:
        print(f"wrote {p}")
    return 0


def _render_recovery(result, outdir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    mags = np.abs(result.grid.values)
    step = max(1, mags.shape[0] // 1200)
    sub = mags[::step, ::step]
    alphas = result.grid.alpha_bins_hz()[::step]
    freqs = result.grid.f_bins_hz()[::step]
    fig, ax = plt.subplots(figsize=(6.5, 5.0))
    im = ax.imshow(
        sub,
        origin="lower",
        aspect="auto",
        extent=[freqs[0] / 1e6, freqs[-1] / 1e6, alphas[0] / 1e6, alphas[-1] / 1e6],
        cmap="viridis",
    )
    ax.set_xlabel("f [MHz]")
    ax.set_ylabel("alpha [MHz]")
    fig.colorbar(im, ax=ax, label="|S|")
    fig.tight_layout()
    p = outdir / "grid.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6.5, 3.2))
    ax.plot(np.asarray(result.psd_freqs_hz) / 1e6, result.psd_dense, lw=0.8)
    ax.set_xlabel("f [MHz]")
    ax.set_ylabel("power")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    p = outdir / "psd.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written


def _cmd_detect(args) -> int:
    grid = cio.read_grid_blob(args.grid)
    report = detect_transmissions(
        grid,
        b_max_hz=args.bandwidth,
        tau_rel=args.tau,
        edge_rel=args.edge,
    )
    path = cio.write_report(report, args.out)
    print(f"{report.n_sig_hat} transmission(s) detected")
    for t in report.transmissions:
        print(
            f"  carrier {t.carrier_hz / 1e6:.3f} MHz  bandwidth {t.bandwidth_hz / 1e6:.3f} MHz"
            f"  (alpha {t.peak_alpha_hz / 1e6:.3f} MHz)"
        )
    if report.asymmetry_flag:
        print("  warning: unpaired features present")
    print(f"wrote {path}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        alphas, profile = profile_at_zero_f(grid)
        fig, ax = plt.subplots(figsize=(6.5, 3.2))
        ax.plot(alphas / 1e6, profile, lw=0.8)
        for t in report.transmissions:
            ax.axvline(t.peak_alpha_hz / 1e6, color="r", ls="--", alpha=0.6)
        ax.set_xlabel("alpha [MHz]")
        ax.set_ylabel("|S(alpha, f=0)|")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        p = Path(args.out).with_suffix(".png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        print(f"wrote {p}")
    return 0


def _parse_snr_list(items: list[str]) -> tuple[float | None, ...]:
    out: list[float | None] = []
    for s in items:
        out.append(None if s.lower() in ("none", "noiseless") else float(s))
    return tuple(out)


def _cmd_experiment(args) -> int:
    if args.config:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    overrides: dict = {"master_seed": args.seed}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.channels:
        overrides["channel_counts"] = tuple(args.channels)
    if args.snr:
        overrides["snr_db_list"] = _parse_snr_list(args.snr)
    if args.windows is not None:
        overrides["p_windows"] = args.windows
    if args.workers is not None:
        overrides["workers"] = args.workers
    cfg = replace(cfg, **overrides)
    table = run_monte_carlo(cfg)
    roc = run_roc(cfg) if args.roc else None
    paths = emit_results(table, args.outdir, basename=args.basename, plots=not args.no_plots, roc=roc)
    for row in table.rows:
        snr = "noiseless" if row["snr_db"] is None else f"{row['snr_db']:g} dB"
        pd = "n/a" if row["pd"] is None else f"{row['pd']:.3f}"
        print(f"snr={snr} M={row['m_channels']}: pd={pd} failures={row['failures']}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_selftest(args) -> int:
    rate = 1e8
    n, q, p, m = 7, 16, 24, 5
    fc, bw = 30e6, 4e6
    spec = TransmissionSpec.with_period_from_bandwidth(carrier_hz=fc, bandwidth_hz=bw)
    config = SignalConfig(
        transmissions=(spec,),
        nyquist_rate_hz=rate,
        duration_s=p * q * n / rate,
        rng_seed=7,
    )
    signal = compose_signal(config)
    fe = MulticosetConfig(n_slices=n, cosets=(0, 1, 2, 4, 6))
    sensing = multicoset_matrix(fe, rate)
    channels = simulate_sampling(signal, fe)
    result = run_recovery(channels, sensing, p, q, 4, mode="noiseless")
    report = detect_transmissions(result.grid, b_max_hz=bw)
    tol = 10 * result.grid.delta_hz
    carriers = [t.carrier_hz for t in report.transmissions]
    hit = any(abs(c - fc) <= tol for c in carriers)
    if not hit:
        print(f"selftest FAILED: expected carrier near {fc:.3g}, got {carriers}", file=sys.stderr)
        return 2
    print(f"selftest ok: carrier {carriers[0] / 1e6:.3f} MHz (truth {fc / 1e6:.3f} MHz)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclosense",
        description="Cyclic-spectrum recovery from sub-Nyquist samples",
    )
    sub = parser.add_subparsers(dest="command")

    g = sub.add_parser("generate", help="synthesize a full-rate signal from a scene config")
    g.add_argument("--config", required=True, help="scene config JSON")
    g.add_argument("--out", required=True, help="output sample file (raw float64 + sidecar)")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("sample", help="run a sampling front end over a full-rate record")
    s.add_argument("--signal", required=True)
    s.add_argument("--frontend", required=True, help="front-end config JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sample)

    r = sub.add_parser("recover", help="estimate the cyclic spectrum from channel samples")
    r.add_argument("--channels", required=True)
    r.add_argument("--frontend", required=True)
    r.add_argument("--windows", type=int, required=True, help="number of analysis windows")
    r.add_argument("--bins", type=int, required=True, help="frequency bins per window")
    r.add_argument("--sparsity", type=int, required=True, help="active slice-row budget")
    r.add_argument("--mode", choices=("noiseless", "noisy"), default="noiseless")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--csv", action="store_true", help="also write nonzero grid cells as CSV")
    r.add_argument("--support", action="store_true", help="also write per-shift supports")
    r.add_argument("--psd", action="store_true", help="also write the power-spectrum estimate")
    r.add_argument("--plot", action="store_true", help="render grid and spectrum figures")
    r.set_defaults(func=_cmd_recover)

    d = sub.add_parser("detect", help="locate transmissions on a recovered grid")
    d.add_argument("--grid", required=True, help="grid blob from the recover step")
    d.add_argument("--bandwidth", type=float, required=True, help="largest expected bandwidth [Hz]")
    d.add_argument("--tau", type=float, default=0.25, help="relative peak threshold")
    d.add_argument("--edge", type=float, default=0.25, help="relative level for bandwidth edges")
    d.add_argument("--out", required=True, help="report JSON path")
    d.add_argument("--plot", action="store_true", help="render the feature profile")
    d.set_defaults(func=_cmd_detect)

    e = sub.add_parser("experiment", help="Monte-Carlo detection sweep")
    e.add_argument("--config", help="experiment config JSON (defaults used when omitted)")
    e.add_argument("--seed", type=int, required=True, help="master seed")
    e.add_argument("--trials", type=int)
    e.add_argument("--channels", type=int, nargs="+", help="channel counts to sweep")
    e.add_argument("--snr", nargs="+", help="SNR values in dB, or 'noiseless'")
    e.add_argument("--windows", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--outdir", default="results")
    e.add_argument("--basename", default="metrics")
    e.add_argument("--roc", action="store_true", help="also sweep a single-cycle ROC")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=_cmd_experiment)

    t = sub.add_parser("selftest", help="small end-to-end check")
    t.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, IsADirectoryError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
