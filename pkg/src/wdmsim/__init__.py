"""Wide-band WDM coherent transmission simulator.

Propagates PDM-QAM combs through multi-span amplified fiber links using
either the birefringence-averaged Kerr model or the coupled
dual-polarization equations with coarse-step birefringence emulation, and
measures the generalized SNR with a data-aided coherent receiver.
"""

__version__ = "0.1.0"

from .fiber import (
    BirefringenceRealization,
    EdfaSpec,
    FiberSpec,
    LinkSpec,
    Span,
    StepConfig,
    Waveplate,
    edfa,
    gen_birefringence,
    pmd_coherence_bandwidth,
    propagate_dpnlse,
    propagate_manakov,
)
from .rx import (
    EqualizerState,
    EyeHistogram,
    SnrReport,
    cd_compensate,
    estimate_snr,
    extract_channel,
    eye_histogram,
    lms_equalize,
)
from .signal import DualPolSignal, frequency_shift, load_signal, measure_power, save_signal
from .tx import ModulationFormat, SymbolFrame, TxSpec, build_wdm, map_symbols, rrc_shape

__all__ = [
    "BirefringenceRealization",
    "DualPolSignal",
    "EdfaSpec",
    "EqualizerState",
    "EyeHistogram",
    "FiberSpec",
    "LinkSpec",
    "ModulationFormat",
    "SnrReport",
    "Span",
    "StepConfig",
    "SymbolFrame",
    "TxSpec",
    "Waveplate",
    "build_wdm",
    "cd_compensate",
    "edfa",
    "estimate_snr",
    "extract_channel",
    "eye_histogram",
    "frequency_shift",
    "gen_birefringence",
    "lms_equalize",
    "load_signal",
    "map_symbols",
    "measure_power",
    "pmd_coherence_bandwidth",
    "propagate_dpnlse",
    "propagate_manakov",
    "rrc_shape",
    "save_signal",
]
