"""JSON scenario configs: validation, defaults, normalization, presets.

A config is a single JSON document with sections {tx, link, model, rx,
step, experiment}. Validation is strict: unknown keys are rejected (no
silent typos), every violation is reported with its field path, and the
normalized config (defaults filled, dispersion converted to beta2) can be
echoed back for hashing and reproduction.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .experiments import ModelSpec, RxSpec, ScenarioConfig
from .fiber import EdfaSpec, FiberSpec, LinkSpec, Span, StepConfig
from .tx import ModulationFormat, TxSpec
from .units import dispersion_to_beta2, wavelength_m

MAX_SAMPLES_PER_SYMBOL = 4096


class ConfigError(ValueError):
    """Invalid configuration; carries one message per violation."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in errors))


_TX_KEYS = {
    "format": "qpsk",
    "symbol_rate_baud": 32e9,
    "roll_off": 0.15,
    "n_channels": 1,
    "spacing_hz": 50e9,
    "per_channel_power_dbm": 0.0,
    "n_symbols": 8192,
    "filter_span_symbols": 64,
}
_LINK_KEYS = {
    "n_spans": 1,
    "span_length_km": 100.0,
    "alpha_db_km": 0.2,
    "beta2_ps2_km": None,
    "dispersion_ps_nm_km": None,
    "gamma_w_km": 1.3,
    "pmd_coeff_ps_sqrt_km": 0.0,
    "edfa_gain_db": None,
    "edfa_noise_figure_db": 5.0,
    "center_frequency_hz": 193.4e12,
}
_MODEL_KEYS = {"kind": "manakov", "mean_section_km": 1.0}
_RX_KEYS = {
    "equalizer_taps": 17,
    "lms_step": 1e-3,
    "guard_fraction": 0.05,
    "ramp_fraction": 0.1,
}
_STEP_KEYS = {
    "policy": "nonlinear_phase",
    "phi_max_rad": 3e-3,
    "dz_km": None,
    "max_step_km": 1.0,
}
_EXPERIMENT_KEYS = {
    "master_seed": 1,
    "n_mc_realizations": 1,
    "powers_dbm": None,
    "channel_counts": None,
    "optimum_power_dbm": None,
}
_SECTIONS = {
    "tx": _TX_KEYS,
    "link": _LINK_KEYS,
    "model": _MODEL_KEYS,
    "rx": _RX_KEYS,
    "step": _STEP_KEYS,
    "experiment": _EXPERIMENT_KEYS,
}


def _merge_section(doc: dict, section: str, errors: list[str]) -> dict:
    known = _SECTIONS[section]
    given = doc.get(section, {})
    if not isinstance(given, dict):
        errors.append(f"{section}: must be an object")
        return dict(known)
    merged = dict(known)
    for key, value in given.items():
        if key not in known:
            errors.append(f"{section}.{key}: unknown key")
        else:
            merged[key] = value
    return merged


def validate_config(source: str | Path | dict) -> tuple[ScenarioConfig, dict]:
    """Parse and validate a config; returns (scenario, normalized dict).

    Raises ConfigError with one entry per violation, each prefixed with the
    offending field path.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError([f"config file not found: {path}"])
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be a JSON object"])

    errors: list[str] = []
    for key in doc:
        if key not in (*_SECTIONS, "scenario_id"):
            errors.append(f"{key}: unknown section")
    scenario_id = doc.get("scenario_id", "scenario")
    if not isinstance(scenario_id, str) or not scenario_id:
        errors.append("scenario_id: must be a non-empty string")

    tx_d = _merge_section(doc, "tx", errors)
    link_d = _merge_section(doc, "link", errors)
    model_d = _merge_section(doc, "model", errors)
    rx_d = _merge_section(doc, "rx", errors)
    step_d = _merge_section(doc, "step", errors)
    exp_d = _merge_section(doc, "experiment", errors)

    # cross-field physics checks with explicit diagnostics
    try:
        fmt = ModulationFormat.parse(tx_d["format"])
        tx_d["format"] = fmt.value
    except ValueError as exc:
        errors.append(f"tx.format: {exc}")
    rs = tx_d["symbol_rate_baud"]
    ro = tx_d["roll_off"]
    if not 0.0 < ro <= 1.0:
        errors.append(f"tx.roll_off: must be in (0, 1], got {ro}")
    if not rs > 0:
        errors.append(f"tx.symbol_rate_baud: must be positive, got {rs}")
    nch = tx_d["n_channels"]
    if not isinstance(nch, int) or nch < 1 or nch % 2 == 0:
        errors.append(
            f"tx.n_channels: must be an odd integer >= 1 so a central "
            f"channel-under-test exists, got {nch}"
        )
    spacing = tx_d["spacing_hz"]
    if rs > 0 and 0 < ro <= 1 and spacing < rs * (1.0 + ro):
        errors.append(
            f"tx.spacing_hz: {spacing/1e9:g} GHz overlaps the occupied bandwidth "
            f"{rs*(1+ro)/1e9:g} GHz at roll-off {ro}"
        )
    nsym = tx_d["n_symbols"]
    if not isinstance(nsym, int) or nsym < 1:
        errors.append(f"tx.n_symbols: must be a positive integer, got {nsym}")
    elif rs > 0:
        offsets_per_bin = spacing * nsym / rs
        if abs(offsets_per_bin - round(offsets_per_bin)) > 1e-6:
            errors.append(
                "tx.spacing_hz: channel offsets must land on the DFT grid "
                "(spacing * n_symbols / symbol_rate must be an integer)"
            )

    if link_d["beta2_ps2_km"] is not None and link_d["dispersion_ps_nm_km"] is not None:
        errors.append("link: give either beta2_ps2_km or dispersion_ps_nm_km, not both")
    if link_d["beta2_ps2_km"] is None and link_d["dispersion_ps_nm_km"] is None:
        link_d["beta2_ps2_km"] = -21.27
    if link_d["dispersion_ps_nm_km"] is not None and not errors:
        lam = wavelength_m(link_d["center_frequency_hz"])
        link_d["beta2_ps2_km"] = dispersion_to_beta2(link_d["dispersion_ps_nm_km"], lam)
    if not isinstance(link_d["n_spans"], int) or link_d["n_spans"] < 0:
        errors.append(
            f"link.n_spans: must be an integer >= 0 (0 is back-to-back), "
            f"got {link_d['n_spans']}"
        )
    if not link_d["span_length_km"] > 0:
        errors.append("link.span_length_km: must be positive")
    for key in ("alpha_db_km", "gamma_w_km", "pmd_coeff_ps_sqrt_km"):
        if link_d[key] < 0:
            errors.append(f"link.{key}: must be >= 0, got {link_d[key]}")
    if link_d["edfa_gain_db"] is not None and link_d["edfa_gain_db"] < 0:
        errors.append("link.edfa_gain_db: must be >= 0 or null for loss recovery")

    if model_d["kind"] not in ("manakov", "dpnlse"):
        errors.append(f"model.kind: must be manakov or dpnlse, got {model_d['kind']!r}")
    if not model_d["mean_section_km"] > 0:
        errors.append("model.mean_section_km: must be positive")
    elif model_d["kind"] == "dpnlse" and model_d["mean_section_km"] > link_d["span_length_km"]:
        errors.append("model.mean_section_km: cannot exceed the span length")

    taps = rx_d["equalizer_taps"]
    if not isinstance(taps, int) or taps < 1 or taps % 2 == 0:
        errors.append(f"rx.equalizer_taps: must be an odd positive integer, got {taps}")
    if not 0 < rx_d["lms_step"] < 1:
        errors.append("rx.lms_step: must be in (0, 1)")
    for key in ("guard_fraction", "ramp_fraction"):
        if not 0 <= rx_d[key] < 0.5:
            errors.append(f"rx.{key}: must be in [0, 0.5)")

    if step_d["policy"] not in ("nonlinear_phase", "fixed"):
        errors.append(f"step.policy: must be nonlinear_phase or fixed, got {step_d['policy']!r}")
    elif step_d["policy"] == "fixed" and (step_d["dz_km"] is None or step_d["dz_km"] <= 0):
        errors.append("step.dz_km: fixed policy needs a positive step")
    elif step_d["policy"] == "nonlinear_phase" and not 0 < step_d["phi_max_rad"] <= 0.05:
        errors.append("step.phi_max_rad: must be in (0, 0.05] rad")

    seed = exp_d["master_seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        errors.append("experiment.master_seed: must be an integer in [0, 2^64)")
    if not isinstance(exp_d["n_mc_realizations"], int) or exp_d["n_mc_realizations"] < 1:
        errors.append("experiment.n_mc_realizations: must be a positive integer")

    if not errors:
        tx = TxSpec(
            format=tx_d["format"],
            symbol_rate=float(rs),
            roll_off=float(ro),
            n_channels=nch,
            spacing=float(spacing),
            per_channel_power_dbm=float(tx_d["per_channel_power_dbm"]),
            n_symbols=nsym,
            rng_seed=seed,
            filter_span_symbols=int(tx_d["filter_span_symbols"]),
            center_frequency=float(link_d["center_frequency_hz"]),
        )
        if tx.samples_per_symbol() > MAX_SAMPLES_PER_SYMBOL:
            errors.append(
                "tx: aggregate WDM band needs more than "
                f"{MAX_SAMPLES_PER_SYMBOL} samples/symbol; narrow the comb"
            )
    if errors:
        raise ConfigError(errors)

    fiber = FiberSpec(
        length_km=float(link_d["span_length_km"]),
        alpha_db_km=float(link_d["alpha_db_km"]),
        beta2_ps2_km=float(link_d["beta2_ps2_km"]),
        gamma_w_km=float(link_d["gamma_w_km"]),
        pmd_coeff=float(link_d["pmd_coeff_ps_sqrt_km"]),
    )
    gain = link_d["edfa_gain_db"]
    edfa_spec = EdfaSpec(
        gain_db=float(gain) if gain is not None else None,
        noise_figure_db=(
            float(link_d["edfa_noise_figure_db"])
            if link_d["edfa_noise_figure_db"] is not None else None
        ),
    )
    link = LinkSpec.uniform(link_d["n_spans"], fiber, edfa_spec)
    scenario = ScenarioConfig(
        scenario_id=scenario_id,
        tx=tx,
        link=link,
        model=ModelSpec(kind=model_d["kind"],
                        mean_section_km=float(model_d["mean_section_km"])),
        rx=RxSpec(
            equalizer_taps=taps,
            lms_step=float(rx_d["lms_step"]),
            guard_fraction=float(rx_d["guard_fraction"]),
            ramp_fraction=float(rx_d["ramp_fraction"]),
        ),
        step=StepConfig(
            policy=step_d["policy"],
            phi_max_rad=float(step_d["phi_max_rad"]),
            dz_km=step_d["dz_km"],
            max_step_km=float(step_d["max_step_km"]),
        ),
        master_seed=seed,
        n_mc_realizations=exp_d["n_mc_realizations"],
        optimum_power_dbm=exp_d["optimum_power_dbm"],
    )
    normalized = {
        "scenario_id": scenario_id,
        "tx": tx_d,
        "link": link_d,
        "model": model_d,
        "rx": rx_d,
        "step": step_d,
        "experiment": exp_d,
    }
    return scenario, normalized


def preset_path(name: str) -> Path:
    """Path of a named preset config shipped with the package."""
    base = resources.files("wdmsim") / "presets" / f"{name}.json"
    path = Path(str(base))
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.json"))
        raise ConfigError(
            [f"unknown preset {name!r}; available: {', '.join(available)}"]
        )
    return path


def load_preset(name: str) -> tuple[ScenarioConfig, dict]:
    """Load and validate one of the shipped scenario presets."""
    return validate_config(preset_path(name))
