"""Experiment orchestration: power sweeps, PMD Monte-Carlo, bandwidth scans.

All campaigns follow a paired-seed discipline: runs that differ only in the
swept variable (launch power, channel count, propagation model) share the
same data, ASE and birefringence seeds, so SNR differences isolate the
physics under study rather than the random draws. Every row of a sweep is
reproducible in isolation from the master seed and its indices.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng
from .fiber import (
    BirefringenceRealization,
    FiberSpec,
    LinkSpec,
    StepConfig,
    edfa,
    gen_birefringence,
    propagate_dpnlse,
    propagate_manakov,
)
from .rx import (
    EyeHistogram,
    SnrReport,
    cd_compensate,
    estimate_snr,
    extract_channel,
    eye_histogram,
    lms_equalize,
)
from .signal import DualPolSignal
from .tx import ModulationFormat, TxSpec, build_wdm

MODEL_KINDS = ("manakov", "dpnlse")


@dataclass(frozen=True)
class ModelSpec:
    """Propagation model selection for a scenario."""

    kind: str = "manakov"
    mean_section_km: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if not self.mean_section_km > 0:
            raise ValueError("mean section length must be positive")


@dataclass(frozen=True)
class RxSpec:
    """Receiver settings shared by all runs of a scenario."""

    equalizer_taps: int = 17
    lms_step: float = 1e-3
    guard_fraction: float = 0.05
    ramp_fraction: float = 0.1


@dataclass(frozen=True)
class ScenarioConfig:
    """One fully seeded simulation scenario; bit-identical when rerun."""

    scenario_id: str
    tx: TxSpec
    link: LinkSpec
    model: ModelSpec = ModelSpec()
    rx: RxSpec = RxSpec()
    step: StepConfig = StepConfig()
    master_seed: int = 1
    n_mc_realizations: int = 1
    optimum_power_dbm: float | None = None
    precision: str = "double"  # "single" trades accuracy for speed


@dataclass
class SweepRecord:
    """One completed (or failed) run of a sweep; append-only rows."""

    scenario_id: str
    model: str
    delta_pmd_ps_sqrtkm: float
    n_channels: int
    p_ch_dbm: float
    realization: int
    snr_db: float
    seed: int
    runtime_s: float
    error: str = ""

    CSV_HEADER = ("scenario_id,model,delta_pmd_ps_sqrtkm,n_channels,"
                  "p_ch_dbm,realization,snr_db,seed,runtime_s")

    def csv_row(self) -> str:
        return (
            f"{self.scenario_id},{self.model},{self.delta_pmd_ps_sqrtkm:.6g},"
            f"{self.n_channels},{self.p_ch_dbm:.6g},{self.realization},"
            f"{self.snr_db:.6f},{self.seed},{self.runtime_s:.3f}"
        )


def realization_seed(master_seed: int, realization_index: int) -> int:
    """64-bit birefringence seed of Monte-Carlo draw k; documented derivation."""
    return rng.stream_key(master_seed, "biref-realization", realization_index) % 2**64


def ase_seed(master_seed: int, span_index: int) -> int:
    """64-bit ASE seed of one span's amplifier; shared across models/powers."""
    return rng.stream_key(master_seed, "ase-span", span_index) % 2**64


def propagate_link(
    sig: DualPolSignal,
    link: LinkSpec,
    model: ModelSpec,
    step: StepConfig,
    master_seed: int,
    realization_index: int = 0,
) -> DualPolSignal:
    """Run a signal through every span and amplifier of a link."""
    biref_seed = realization_seed(master_seed, realization_index)
    for s, span in enumerate(link.spans):
        if model.kind == "dpnlse":
            realization = gen_birefringence(
                span.fiber, model.mean_section_km, biref_seed, s
            )
            sig = propagate_dpnlse(sig, span.fiber, realization, step)
        else:
            sig = propagate_manakov(sig, span.fiber, step)
        sig = edfa(sig, span.edfa_gain_db, span.edfa.noise_figure_db,
                   ase_seed(master_seed, s))
    return sig


def receive_cut(
    sig: DualPolSignal,
    frame,
    link: LinkSpec,
    tx: TxSpec,
    rx: RxSpec,
) -> SnrReport:
    """Demodulate the central channel and estimate its generalized SNR."""
    cut = extract_channel(sig, 0.0, tx.symbol_rate, tx.roll_off,
                          tx.filter_span_symbols)
    cut = cd_compensate(cut, link.total_beta2_ps2)
    eq_x, eq_y, _ = lms_equalize(
        cut, frame.cut.symbols_x, frame.cut.symbols_y,
        n_taps=rx.equalizer_taps, mu=rx.lms_step,
        ramp_fraction=rx.ramp_fraction,
    )
    n = len(eq_x)
    guard = int(round(rx.guard_fraction * n))
    lo = max(guard, int(round(rx.ramp_fraction * n)))
    hi = n - guard
    return estimate_snr(
        eq_x[lo:hi], eq_y[lo:hi],
        frame.cut.symbols_x[lo:hi], frame.cut.symbols_y[lo:hi],
        fmt=tx.format, guard_symbols_discarded=n - (hi - lo),
    )


def run_single(
    cfg: ScenarioConfig,
    power_dbm: float | None = None,
    n_channels: int | None = None,
    model_kind: str | None = None,
    pmd_coeff: float | None = None,
    fmt: ModulationFormat | str | None = None,
    realization_index: int = 0,
) -> tuple[SnrReport, SweepRecord]:
    """One full TX -> link -> RX run with optional point overrides."""
    t0 = time.perf_counter()
    tx = cfg.tx
    if tx.rng_seed == 0:
        tx = replace(tx, rng_seed=cfg.master_seed)
    if power_dbm is not None:
        tx = replace(tx, per_channel_power_dbm=power_dbm)
    if n_channels is not None:
        tx = replace(tx, n_channels=n_channels)
    if fmt is not None:
        tx = replace(tx, format=ModulationFormat.parse(fmt))
    link = cfg.link
    if pmd_coeff is not None:
        link = LinkSpec(tuple(
            replace(s, fiber=replace(s.fiber, pmd_coeff=pmd_coeff))
            for s in link.spans
        ))
    model = cfg.model if model_kind is None else replace(cfg.model, kind=model_kind)

    comb, frame = build_wdm(tx)
    if cfg.precision == "single":
        comb = comb.with_fields(comb.x.astype(np.complex64),
                                comb.y.astype(np.complex64))
    out = propagate_link(comb, link, model, cfg.step, cfg.master_seed,
                         realization_index)
    report = receive_cut(out, frame, link, tx, cfg.rx)
    record = SweepRecord(
        scenario_id=cfg.scenario_id,
        model=model.kind,
        delta_pmd_ps_sqrtkm=link.pmd_coeff if model.kind == "dpnlse" else 0.0,
        n_channels=tx.n_channels,
        p_ch_dbm=tx.per_channel_power_dbm,
        realization=realization_index,
        snr_db=report.snr_db,
        seed=realization_seed(cfg.master_seed, realization_index)
        if model.kind == "dpnlse" else cfg.master_seed,
        runtime_s=time.perf_counter() - t0,
    )
    return report, record


def _point_worker(args) -> tuple:
    key, cfg, overrides = args
    try:
        _, record = run_single(cfg, **overrides)
    except Exception as exc:  # propagation failures become nan rows
        tx = cfg.tx
        record = SweepRecord(
            scenario_id=cfg.scenario_id,
            model=overrides.get("model_kind") or cfg.model.kind,
            delta_pmd_ps_sqrtkm=cfg.link.pmd_coeff,
            n_channels=overrides.get("n_channels") or tx.n_channels,
            p_ch_dbm=overrides.get("power_dbm", tx.per_channel_power_dbm),
            realization=overrides.get("realization_index", 0),
            snr_db=math.nan,
            seed=cfg.master_seed,
            runtime_s=0.0,
            error=f"{type(exc).__name__}: {exc}",
        )
    return key, record


class Checkpoint:
    """Per-row JSONL checkpoint so interrupted campaigns resume."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.done: dict[str, SweepRecord] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self.done[entry["key"]] = SweepRecord(**entry["record"])

    def record(self, key: str, rec: SweepRecord) -> None:
        self.done[key] = rec
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps({"key": key, "record": asdict(rec)}) + "\n")


def _run_points(cfg, points, workers=1, checkpoint_path=None) -> list[SweepRecord]:
    """Execute keyed sweep points, in a pool if asked; output order is fixed."""
    checkpoint = Checkpoint(checkpoint_path)
    pending = [(key, cfg, ov) for key, ov in points if key not in checkpoint.done]
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, rec in pool.map(_point_worker, pending):
                checkpoint.record(key, rec)
    else:
        for args in pending:
            key, rec = _point_worker(args)
            checkpoint.record(key, rec)
    return [checkpoint.done[key] for key, _ in points]


def run_power_sweep(
    cfg: ScenarioConfig,
    powers_dbm: list[float],
    workers: int = 1,
    checkpoint_path: str | Path | None = None,
) -> list[SweepRecord]:
    """SNR versus per-channel launch power with shared seeds across points."""
    points = [(f"p={p:+.3f}", {"power_dbm": float(p)}) for p in powers_dbm]
    return _run_points(cfg, points, workers, checkpoint_path)


@dataclass(frozen=True)
class McPmdResult:
    """Monte-Carlo SNR ensemble over birefringence realizations."""

    records: list[SweepRecord]
    snr_db: np.ndarray
    cumulative_mean_db: np.ndarray
    std_db: float


def run_mc_pmd(
    cfg: ScenarioConfig,
    n_realizations: int | None = None,
    workers: int = 1,
    checkpoint_path: str | Path | None = None,
) -> McPmdResult:
    """Repeat one scenario over independent birefringence realizations."""
    if cfg.model.kind != "dpnlse":
        raise ValueError("Monte-Carlo PMD runs require the dpnlse model")
    n = cfg.n_mc_realizations if n_realizations is None else int(n_realizations)
    points = [(f"mc={k}", {"realization_index": k}) for k in range(n)]
    records = _run_points(cfg, points, workers, checkpoint_path)
    snr = np.array([r.snr_db for r in records])
    ok = snr[np.isfinite(snr)]
    cumulative = (np.cumsum(ok) / np.arange(1, len(ok) + 1)) if len(ok) else np.array([])
    std = float(np.std(ok)) if len(ok) else math.nan
    return McPmdResult(records=records, snr_db=snr,
                       cumulative_mean_db=cumulative, std_db=std)


@dataclass(frozen=True)
class LogBandwidthFit:
    """Least-squares fit snr_db = intercept + slope * log10(bandwidth_hz)."""

    slope_db_per_decade: float
    intercept_db: float
    r_squared: float


def fit_log_bandwidth(points: list[tuple[float, float]]) -> LogBandwidthFit:
    """Fit an SNR decrease proportional to the log of the optical bandwidth.

    points are (bandwidth_hz, snr_db) pairs; at least three distinct
    bandwidths are required. A negative slope means SNR falls with bandwidth.
    """
    if len(points) < 3:
        raise ValueError("log-bandwidth fit needs at least 3 points")
    bw = np.array([p[0] for p in points], dtype=float)
    snr = np.array([p[1] for p in points], dtype=float)
    if len(np.unique(bw)) < 3:
        raise ValueError("log-bandwidth fit needs at least 3 distinct bandwidths")
    if np.any(bw <= 0):
        raise ValueError("bandwidths must be positive")
    x = np.log10(bw)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, _, rank, _ = np.linalg.lstsq(a, snr, rcond=None)
    if rank < 2:
        raise ValueError("rank-deficient input: bandwidths do not span a line")
    fitted = a @ coef
    ss_res = float(np.sum((snr - fitted) ** 2))
    ss_tot = float(np.sum((snr - np.mean(snr)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LogBandwidthFit(slope_db_per_decade=float(coef[0]),
                           intercept_db=float(coef[1]), r_squared=r2)


def run_bandwidth_sweep(
    cfg: ScenarioConfig,
    channel_counts: list[int],
    workers: int = 1,
    checkpoint_path: str | Path | None = None,
) -> tuple[list[SweepRecord], LogBandwidthFit]:
    """SNR versus WDM channel count at fixed per-channel power, plus fit."""
    for count in channel_counts:
        if count < 1 or count % 2 == 0:
            raise ValueError(f"channel counts must be odd, got {count}")
    points = [(f"nch={c}", {"n_channels": int(c)}) for c in channel_counts]
    records = _run_points(cfg, points, workers, checkpoint_path)
    fit_points = [
        (rec.n_channels * cfg.tx.spacing, rec.snr_db)
        for rec in records
        if math.isfinite(rec.snr_db)
    ]
    fit = fit_log_bandwidth(fit_points)
    return records, fit


@dataclass(frozen=True)
class HistogramStudy:
    """Before/after eye histograms of a single-channel experiment."""

    before: EyeHistogram
    after: EyeHistogram


def _single_channel_signal(
    fmt: ModulationFormat | str,
    n_symbols: int,
    seed: int,
    symbol_rate: float = 32e9,
    roll_off: float = 0.15,
    samples_per_symbol: int = 48,
) -> tuple[DualPolSignal, object]:
    tx = TxSpec(format=ModulationFormat.parse(fmt), symbol_rate=symbol_rate,
                roll_off=roll_off, n_channels=1, n_symbols=n_symbols,
                rng_seed=seed, per_channel_power_dbm=0.0)
    return build_wdm(tx, samples_per_symbol=samples_per_symbol)


def run_pmd_only_histogram(
    pmd_coeff: float,
    length_km: float,
    fmt: ModulationFormat | str = ModulationFormat.QPSK,
    n_symbols: int = 20000,
    n_phases: int = 24,
    seed: int = 1,
    mean_section_km: float = 1.0,
    symbol_rate: float = 32e9,
) -> HistogramStudy:
    """Eye statistics before/after a fiber with only birefringence active.

    The fiber has no attenuation, no dispersion and no Kerr effect; only the
    randomized waveplate chain acts on the signal.
    """
    sig, _ = _single_channel_signal(fmt, n_symbols, seed, symbol_rate)
    before = eye_histogram(sig, symbol_rate, n_phases)
    fiber = FiberSpec(length_km=length_km, alpha_db_km=0.0, beta2_ps2_km=0.0,
                      gamma_w_km=0.0, pmd_coeff=pmd_coeff)
    realization = gen_birefringence(fiber, mean_section_km, seed, 0)
    out = propagate_dpnlse(sig, fiber, realization)
    after = eye_histogram(out, symbol_rate, n_phases, bin_edges=before.bin_edges)
    return HistogramStudy(before=before, after=after)


def run_cd_only_histogram(
    beta2_ps2_km: float,
    length_km: float,
    fmt: ModulationFormat | str = ModulationFormat.QPSK,
    n_symbols: int = 20000,
    n_phases: int = 24,
    seed: int = 1,
    symbol_rate: float = 32e9,
) -> HistogramStudy:
    """Eye statistics before/after a dispersion-only fiber (no loss, no Kerr)."""
    sig, _ = _single_channel_signal(fmt, n_symbols, seed, symbol_rate)
    before = eye_histogram(sig, symbol_rate, n_phases)
    fiber = FiberSpec(length_km=length_km, alpha_db_km=0.0,
                      beta2_ps2_km=beta2_ps2_km, gamma_w_km=0.0)
    out = propagate_manakov(sig, fiber)
    after = eye_histogram(out, symbol_rate, n_phases, bin_edges=before.bin_edges)
    return HistogramStudy(before=before, after=after)


def records_to_csv(records: list[SweepRecord]) -> str:
    """Full sweep table including the wall-time diagnostic column."""
    lines = [SweepRecord.CSV_HEADER]
    lines.extend(rec.csv_row() for rec in records)
    return "\n".join(lines) + "\n"


def curve_csv(records: list[SweepRecord], x_field: str) -> str:
    """Deterministic two-column plot data (x, snr_db) for one curve."""
    lines = [f"{x_field},snr_db"]
    for rec in records:
        x = getattr(rec, x_field)
        lines.append(f"{x:.6g},{rec.snr_db:.6f}")
    return "\n".join(lines) + "\n"
