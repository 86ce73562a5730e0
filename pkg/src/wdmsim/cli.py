"""Command-line front end.

    sim <command> --config <file> --out <dir> [--seed N] [--workers N]
                  [--precision single|double]

Commands: single, power-sweep, mc-pmd, bandwidth-sweep, pmd-histogram.
Every campaign writes its artifacts plus a run manifest that lists each
output file with a content hash; the manifest together with the config
reproduces the campaign bit-exactly. Exit codes: 0 success, 2 invalid
config, 3 runtime failure, 4 partial completion (resumable checkpoint).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, validate_config
from .experiments import (
    ase_seed,
    curve_csv,
    realization_seed,
    records_to_csv,
    run_mc_pmd,
    run_power_sweep,
    run_bandwidth_sweep,
    run_pmd_only_histogram,
    run_single,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_PARTIAL = 4

COMMANDS = ("single", "power-sweep", "mc-pmd", "bandwidth-sweep", "pmd-histogram")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactWriter:
    """Writes campaign outputs and keeps the manifest inventory complete."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inventory: dict[str, str] = {}

    def write_text(self, name: str, text: str) -> Path:
        data = text.encode()
        (self.out_dir / name).write_bytes(data)
        self.inventory[name] = _sha256(data)
        return self.out_dir / name

    def track_existing(self, name: str) -> None:
        path = self.out_dir / name
        if path.exists():
            self.inventory[name] = _sha256(path.read_bytes())

    def write_manifest(self, payload: dict) -> None:
        payload = dict(payload, outputs=dict(sorted(self.inventory.items())))
        (self.out_dir / "manifest.json").write_text(json.dumps(payload, indent=2) + "\n")


def _derived_seeds(cfg, n_realizations: int) -> dict[str, int]:
    seeds = {"bits": cfg.master_seed}
    for s in range(cfg.link.n_spans):
        seeds[f"ase_span_{s}"] = ase_seed(cfg.master_seed, s)
    for k in range(n_realizations):
        seeds[f"biref_realization_{k}"] = realization_seed(cfg.master_seed, k)
    return seeds


def run(config_path: str | Path, command: str, out_dir: str | Path,
        seed: int | None = None, workers: int = 1,
        precision: str = "double") -> int:
    """Execute one campaign; returns the process exit code."""
    if command not in COMMANDS:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg, normalized = validate_config(config_path)
        if seed is not None:
            normalized = dict(normalized)
            normalized["experiment"] = dict(normalized["experiment"], master_seed=seed)
            cfg, normalized = validate_config(normalized)
        if precision not in ("single", "double"):
            raise ConfigError([f"precision must be single or double, got {precision!r}"])
        cfg = replace(cfg, precision=precision)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG

    writer = ArtifactWriter(Path(out_dir))
    config_json = json.dumps(normalized, indent=2, sort_keys=True) + "\n"
    writer.write_text("config_normalized.json", config_json)
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    n_real = cfg.n_mc_realizations if command == "mc-pmd" else 1
    status = EXIT_OK

    try:
        if command == "single":
            report, record = run_single(cfg)
            writer.write_text("snr_report.json", report.to_json() + "\n")
            writer.write_text("records.csv", records_to_csv([record]))
            print(f"single: snr = {report.snr_db:.3f} dB "
                  f"({record.runtime_s:.1f} s)")
        elif command == "power-sweep":
            powers = normalized["experiment"]["powers_dbm"]
            if not powers:
                raise ConfigError(["experiment.powers_dbm: required for power-sweep"])
            checkpoint = writer.out_dir / "checkpoint.jsonl"
            records = run_power_sweep(cfg, powers, workers, checkpoint)
            writer.write_text("records.csv", records_to_csv(records))
            writer.write_text("power_sweep.csv", curve_csv(records, "p_ch_dbm"))
            writer.track_existing("checkpoint.jsonl")
            for rec in records:
                print(f"power-sweep: {rec.p_ch_dbm:+.1f} dBm -> {rec.snr_db:.3f} dB")
            if any(not math.isfinite(r.snr_db) for r in records):
                status = EXIT_PARTIAL
        elif command == "mc-pmd":
            checkpoint = writer.out_dir / "checkpoint.jsonl"
            result = run_mc_pmd(cfg, workers=workers, checkpoint_path=checkpoint)
            writer.write_text("records.csv", records_to_csv(result.records))
            lines = ["realization,snr_db,cumulative_mean_db"]
            for k, (snr, cum) in enumerate(zip(result.snr_db,
                                               result.cumulative_mean_db)):
                lines.append(f"{k},{snr:.6f},{cum:.6f}")
            writer.write_text("cumulative_average.csv", "\n".join(lines) + "\n")
            writer.write_text(
                "mc_summary.json",
                json.dumps({"n_realizations": len(result.records),
                            "mean_snr_db": float(np.mean(result.snr_db)),
                            "std_db": result.std_db}, indent=2) + "\n")
            writer.track_existing("checkpoint.jsonl")
            print(f"mc-pmd: mean = {np.mean(result.snr_db):.3f} dB, "
                  f"std = {result.std_db:.4f} dB over {len(result.records)} realizations")
            if any(not math.isfinite(r.snr_db) for r in result.records):
                status = EXIT_PARTIAL
        elif command == "bandwidth-sweep":
            counts = normalized["experiment"]["channel_counts"]
            if not counts:
                raise ConfigError(["experiment.channel_counts: required for bandwidth-sweep"])
            checkpoint = writer.out_dir / "checkpoint.jsonl"
            records, fit = run_bandwidth_sweep(cfg, counts, workers, checkpoint)
            writer.write_text("records.csv", records_to_csv(records))
            writer.write_text("bandwidth_sweep.csv", curve_csv(records, "n_channels"))
            writer.write_text(
                "fit.json",
                json.dumps({"slope_db_per_decade": fit.slope_db_per_decade,
                            "intercept_db": fit.intercept_db,
                            "r_squared": fit.r_squared}, indent=2) + "\n")
            writer.track_existing("checkpoint.jsonl")
            print(f"bandwidth-sweep: slope = {fit.slope_db_per_decade:.3f} dB/decade, "
                  f"R^2 = {fit.r_squared:.4f}")
            if any(not math.isfinite(r.snr_db) for r in records):
                status = EXIT_PARTIAL
        elif command == "pmd-histogram":
            fiber = cfg.link.spans[0].fiber
            study = run_pmd_only_histogram(
                pmd_coeff=fiber.pmd_coeff, length_km=fiber.length_km,
                fmt=cfg.tx.format, n_symbols=cfg.tx.n_symbols,
                seed=cfg.master_seed, mean_section_km=cfg.model.mean_section_km,
                symbol_rate=cfg.tx.symbol_rate,
            )
            writer.write_text("histogram_before.csv", study.before.to_csv())
            writer.write_text("histogram_after.csv", study.after.to_csv())
            writer.write_text("histogram_before.json", study.before.to_json() + "\n")
            writer.write_text("histogram_after.json", study.after.to_json() + "\n")
            print(f"pmd-histogram: optimum-phase spread "
                  f"{study.before.level_spread(0):.3e} -> {study.after.level_spread(0):.3e}")
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        writer.write_manifest({
            "version": __version__, "command": command, "status": "failed",
            "started_utc": started, "error": f"{type(exc).__name__}: {exc}",
            "config_hash": _sha256(config_json.encode()),
            "master_seed": cfg.master_seed,
        })
        return EXIT_RUNTIME

    writer.write_manifest({
        "version": __version__,
        "command": command,
        "status": "ok" if status == EXIT_OK else "partial",
        "started_utc": started,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config_hash": _sha256(config_json.encode()),
        "master_seed": cfg.master_seed,
        "precision": precision,
        "derived_seeds": _derived_seeds(cfg, n_real),
    })
    return status


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sim",
        description="Wide-band WDM coherent transmission simulator",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="scenario config JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for sweep points")
    parser.add_argument("--precision", choices=("single", "double"),
                        default="double", help="propagation precision")
    args = parser.parse_args(argv)
    return run(args.config, args.command, args.out, args.seed,
               args.workers, args.precision)


if __name__ == "__main__":
    sys.exit(main())
