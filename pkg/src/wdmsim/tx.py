"""WDM transmitter chain: symbol mapping, RRC shaping, comb assembly.

Gray mapping tables (fixed conventions of this package):

QPSK, bits (b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt(2)
    (0,0) -> (+1+1j)/sqrt(2)   (0,1) -> (+1-1j)/sqrt(2)
    (1,0) -> (-1+1j)/sqrt(2)   (1,1) -> (-1-1j)/sqrt(2)

16-QAM, bits (b0, b1, b2, b3): (b0, b1) select the I level and (b2, b3)
the Q level through the Gray ladder 00 -> +3, 01 -> +1, 11 -> -1,
10 -> -3, scaled by 1/sqrt(10) for unit mean energy.

Bit streams are drawn from counter-based generators keyed by
(rng_seed, "bits", channel offset index, polarization), so the stream of a
given channel never depends on how many neighbours are simulated.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as _fft

from . import rng
from .signal import DualPolSignal, OutOfBandError, frequency_shift, measure_power


class ModulationFormat(str, Enum):
    QPSK = "qpsk"
    QAM16 = "16qam"

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self is ModulationFormat.QPSK else 4

    @classmethod
    def parse(cls, value: "str | ModulationFormat") -> "ModulationFormat":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"qpsk": cls.QPSK, "pdmqpsk": cls.QPSK,
                   "16qam": cls.QAM16, "qam16": cls.QAM16, "pdm16qam": cls.QAM16}
        if key not in aliases:
            raise ValueError(f"unknown modulation format {value!r}")
        return aliases[key]


_GRAY_LEVELS_4 = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}


def constellation(fmt: ModulationFormat) -> np.ndarray:
    """Unit-average-energy alphabet in Gray bit order (index = bit word)."""
    fmt = ModulationFormat.parse(fmt)
    if fmt is ModulationFormat.QPSK:
        return np.array([((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)
                         for b0 in (0, 1) for b1 in (0, 1)])
    points = np.empty(16, dtype=complex)
    for b0 in (0, 1):
        for b1 in (0, 1):
            for b2 in (0, 1):
                for b3 in (0, 1):
                    i_level = _GRAY_LEVELS_4[(b0, b1)]
                    q_level = _GRAY_LEVELS_4[(b2, b3)]
                    points[(b0 << 3) | (b1 << 2) | (b2 << 1) | b3] = (
                        i_level + 1j * q_level
                    ) / np.sqrt(10.0)
    return points


def map_symbols(bits: np.ndarray, fmt: ModulationFormat) -> np.ndarray:
    """Map a bit sequence onto the unit-energy Gray-labeled alphabet."""
    fmt = ModulationFormat.parse(fmt)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be a 1-D sequence of 0/1")
    bps = fmt.bits_per_symbol
    if len(bits) % bps != 0:
        raise ValueError(f"bit count {len(bits)} not divisible by {bps}")
    words = bits.reshape(-1, bps)
    index = np.zeros(len(words), dtype=np.int64)
    for j in range(bps):
        index = (index << 1) | words[:, j]
    return constellation(fmt)[index]


def rrc_impulse_response(t_over_t_symbol: np.ndarray, roll_off: float) -> np.ndarray:
    """Root-raised-cosine impulse response, unnormalized closed form.

    Evaluated at t/T with the usual limits: h(0) = 1 - beta + 4 beta / pi and
    the removable singularity at |t| = T / (4 beta).
    """
    if not 0.0 < roll_off <= 1.0:
        raise ValueError(f"roll-off must be in (0, 1], got {roll_off}")
    beta = roll_off
    t = np.asarray(t_over_t_symbol, dtype=float)
    h = np.empty_like(t)

    tiny = 1e-12
    at_zero = np.abs(t) < tiny
    at_sing = np.abs(np.abs(t) - 1.0 / (4.0 * beta)) < tiny
    regular = ~(at_zero | at_sing)

    h[at_zero] = 1.0 - beta + 4.0 * beta / np.pi
    h[at_sing] = (beta / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
    )
    tr = t[regular]
    num = np.sin(np.pi * tr * (1.0 - beta)) + 4.0 * beta * tr * np.cos(
        np.pi * tr * (1.0 + beta)
    )
    den = np.pi * tr * (1.0 - (4.0 * beta * tr) ** 2)
    h[regular] = num / den
    return h


@lru_cache(maxsize=32)
def rrc_taps(roll_off: float, samples_per_symbol: int, span_symbols: int) -> np.ndarray:
    """Unit-energy RRC taps spanning span_symbols, centered on the middle tap.

    Emits a warning when the span captures less than 99.99% of the energy of
    a much longer reference filter.
    """
    if samples_per_symbol < 2:
        raise ValueError("samples per symbol must be >= 2")
    if span_symbols < 16 or span_symbols % 2 != 0:
        raise ValueError("filter span must be even and >= 16 symbols")
    n_taps = span_symbols * samples_per_symbol + 1
    center = n_taps // 2
    t = (np.arange(n_taps) - center) / samples_per_symbol
    h = rrc_impulse_response(t, roll_off)

    ref_span = max(4 * span_symbols, 512)
    t_ref = (np.arange(ref_span * samples_per_symbol + 1) - ref_span * samples_per_symbol // 2) / samples_per_symbol
    e_ref = float(np.sum(rrc_impulse_response(t_ref, roll_off) ** 2))
    if float(np.sum(h**2)) < 0.9999 * e_ref:
        warnings.warn(
            f"RRC span of {span_symbols} symbols captures less than 99.99% of "
            f"the tap energy at roll-off {roll_off}",
            stacklevel=2,
        )
    h = h / np.sqrt(np.sum(h**2))
    h.setflags(write=False)
    return h


def _circular_kernel(taps: np.ndarray, n: int) -> np.ndarray:
    """DFT of the taps arranged for zero-delay circular convolution."""
    if len(taps) > n:
        raise ValueError("filter longer than the signal block")
    kernel = np.zeros(n)
    center = len(taps) // 2
    idx = (np.arange(len(taps)) - center) % n
    kernel[idx] = taps
    return _fft.fft(kernel)


def circular_filter(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Circularly convolve samples with taps, compensating the group delay."""
    kernel_f = _circular_kernel(taps, len(samples))
    out = _fft.ifft(_fft.fft(samples) * kernel_f)
    if not np.iscomplexobj(samples):
        return out.real
    return out.astype(samples.dtype)


def rrc_shape(
    symbols_x: np.ndarray,
    symbols_y: np.ndarray,
    symbol_rate: float,
    roll_off: float,
    samples_per_symbol: int,
    filter_span_symbols: int = 64,
    center_frequency: float = 193.4e12,
) -> DualPolSignal:
    """Upsample and RRC-shape one channel; symbol k lands on sample k*sps."""
    symbols_x = np.asarray(symbols_x, dtype=complex)
    symbols_y = np.asarray(symbols_y, dtype=complex)
    if symbols_x.shape != symbols_y.shape or symbols_x.ndim != 1:
        raise ValueError("need equal-length 1-D symbol sequences for x and y")
    sps = int(samples_per_symbol)
    taps = rrc_taps(roll_off, sps, filter_span_symbols)
    n = len(symbols_x) * sps
    out = []
    for syms in (symbols_x, symbols_y):
        train = np.zeros(n, dtype=complex)
        train[::sps] = syms
        out.append(circular_filter(train, taps))
    return DualPolSignal(out[0], out[1], sample_rate=symbol_rate * sps,
                         center_frequency=center_frequency)


@dataclass(frozen=True)
class TxSpec:
    """WDM transmitter configuration."""

    format: ModulationFormat = ModulationFormat.QPSK
    symbol_rate: float = 32e9
    roll_off: float = 0.15
    n_channels: int = 1
    spacing: float = 50e9
    per_channel_power_dbm: float = 0.0
    n_symbols: int = 8192
    rng_seed: int = 0
    filter_span_symbols: int = 64
    center_frequency: float = 193.4e12

    def __post_init__(self):
        object.__setattr__(self, "format", ModulationFormat.parse(self.format))
        if not 0.0 < self.roll_off <= 1.0:
            raise ValueError(f"roll-off must be in (0, 1], got {self.roll_off}")
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ValueError(
                f"n_channels must be odd and >= 1 so a central channel-under-test "
                f"exists, got {self.n_channels}"
            )
        if self.spacing < self.symbol_rate * (1.0 + self.roll_off):
            raise ValueError(
                f"channel spacing {self.spacing/1e9:.2f} GHz overlaps the "
                f"{self.symbol_rate*(1+self.roll_off)/1e9:.2f} GHz occupied bandwidth"
            )
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")

    @property
    def wdm_bandwidth(self) -> float:
        """Total optical bandwidth n_channels x spacing, in Hz."""
        return self.n_channels * self.spacing

    @property
    def channel_offsets(self) -> np.ndarray:
        """Signed channel offset indices, CUT = 0."""
        half = (self.n_channels - 1) // 2
        return np.arange(-half, half + 1)

    def samples_per_symbol(self) -> int:
        """Smallest power-of-two oversampling covering the comb plus guard."""
        needed = self.wdm_bandwidth + 2.0 * (1.0 + self.roll_off) * self.symbol_rate
        sps = 2
        while sps * self.symbol_rate < needed:
            sps *= 2
        return sps

    @property
    def sample_rate(self) -> float:
        return self.samples_per_symbol() * self.symbol_rate


@dataclass(frozen=True)
class ChannelSymbols:
    """Ground-truth bits and symbols of one channel, both polarizations."""

    bits_x: np.ndarray
    bits_y: np.ndarray
    symbols_x: np.ndarray
    symbols_y: np.ndarray


@dataclass(frozen=True)
class SymbolFrame:
    """Ground truth for every channel of a generated comb, keyed by offset."""

    format: ModulationFormat
    channels: dict[int, ChannelSymbols] = field(default_factory=dict)

    @property
    def cut(self) -> ChannelSymbols:
        return self.channels[0]


def channel_bits(seed: int, offset_index: int, polarization: int, n_bits: int) -> np.ndarray:
    """Deterministic bit stream for one channel/polarization."""
    gen = rng.stream(seed, "bits", offset_index, polarization)
    return gen.integers(0, 2, size=n_bits, dtype=np.int64)


def modulate_channel(spec: TxSpec, offset_index: int) -> ChannelSymbols:
    """Draw bits and map symbols for a single channel."""
    n_bits = spec.n_symbols * spec.format.bits_per_symbol
    bits_x = channel_bits(spec.rng_seed, offset_index, 0, n_bits)
    bits_y = channel_bits(spec.rng_seed, offset_index, 1, n_bits)
    return ChannelSymbols(
        bits_x=bits_x,
        bits_y=bits_y,
        symbols_x=map_symbols(bits_x, spec.format),
        symbols_y=map_symbols(bits_y, spec.format),
    )


def build_wdm(
    spec: TxSpec, samples_per_symbol: int | None = None
) -> tuple[DualPolSignal, SymbolFrame]:
    """Generate the full WDM comb and its ground-truth symbol frame.

    Each channel is modulated independently, shaped, scaled to the requested
    per-channel average power, shifted to (k - (N-1)/2) * spacing and summed
    in a fixed channel order for bit-reproducibility.
    """
    sps = spec.samples_per_symbol() if samples_per_symbol is None else int(samples_per_symbol)
    sample_rate = sps * spec.symbol_rate
    half_occupied = ((spec.n_channels - 1) * spec.spacing
                     + (1.0 + spec.roll_off) * spec.symbol_rate) / 2.0
    if half_occupied >= sample_rate / 2.0:
        raise OutOfBandError(
            f"aggregate WDM band {2*half_occupied/1e9:.1f} GHz does not fit "
            f"under the {sample_rate/1e9:.1f} GHz sampling rate"
        )
    power_w = 1e-3 * 10.0 ** (spec.per_channel_power_dbm / 10.0)

    n = spec.n_symbols * sps
    total_x = np.zeros(n, dtype=complex)
    total_y = np.zeros(n, dtype=complex)
    frame = SymbolFrame(format=spec.format)
    for offset_index in spec.channel_offsets:
        ch = modulate_channel(spec, int(offset_index))
        frame.channels[int(offset_index)] = ch
        sig = rrc_shape(
            ch.symbols_x, ch.symbols_y, spec.symbol_rate, spec.roll_off,
            sps, spec.filter_span_symbols, spec.center_frequency,
        )
        scale = np.sqrt(power_w / measure_power(sig))
        sig = sig.with_fields(sig.x * scale, sig.y * scale)
        if offset_index != 0:
            sig = frequency_shift(sig, float(offset_index) * spec.spacing)
        total_x += sig.x
        total_y += sig.y
    comb = DualPolSignal(total_x, total_y, sample_rate, spec.center_frequency)
    return comb, frame


def save_symbol_frame(frame: SymbolFrame, path: str | Path) -> None:
    """Persist a symbol frame as interleaved complex pairs plus a sidecar."""
    path = Path(path)
    offsets = sorted(frame.channels)
    blocks = []
    for off in offsets:
        ch = frame.channels[off]
        for syms in (ch.symbols_x, ch.symbols_y):
            buf = np.empty(2 * len(syms))
            buf[0::2] = syms.real
            buf[1::2] = syms.imag
            blocks.append(buf)
    np.concatenate(blocks).astype("<f8").tofile(path)
    sidecar = {
        "format": frame.format.value,
        "channel_offsets": [int(o) for o in offsets],
        "n_symbols": len(frame.channels[offsets[0]].symbols_x),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_symbol_frame(path: str | Path) -> SymbolFrame:
    """Load a symbol frame written by :func:`save_symbol_frame`.

    Bit streams are not persisted; loaded frames carry symbols only.
    """
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    fmt = ModulationFormat.parse(sidecar["format"])
    n = sidecar["n_symbols"]
    raw = np.fromfile(path, dtype="<f8").reshape(-1, 2 * n)
    frame = SymbolFrame(format=fmt)
    empty = np.empty(0, dtype=np.int64)
    for i, off in enumerate(sidecar["channel_offsets"]):
        sx = raw[2 * i, 0::2] + 1j * raw[2 * i, 1::2]
        sy = raw[2 * i + 1, 0::2] + 1j * raw[2 * i + 1, 1::2]
        frame.channels[int(off)] = ChannelSymbols(empty, empty, sx, sy)
    return frame
