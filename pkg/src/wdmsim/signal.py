"""Sampled dual-polarization baseband signals and elementary spectral ops.

A :class:`DualPolSignal` carries the complex field envelopes of the two
polarizations in sqrt(W), the simulation sample rate (which equals the total
simulated bandwidth) and the absolute optical center frequency. Signals are
treated as circularly periodic: all frequency-domain operations act on the
DFT of the sample block, so there are no filter edge transients. Instances
are immutable; every operation returns a new signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as _fft


class OutOfBandError(ValueError):
    """A requested frequency lies outside the simulated band."""


def _as_field(samples, dtype) -> np.ndarray:
    arr = np.array(samples, dtype=dtype, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"polarization samples must be 1-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DualPolSignal:
    """Two-polarization complex baseband sample buffer.

    Attributes
    ----------
    x, y : np.ndarray
        Complex field samples of the two polarizations, in sqrt(W).
    sample_rate : float
        Samples per second; also the total simulated bandwidth in Hz.
    center_frequency : float
        Absolute optical frequency of the baseband origin, in Hz.
    """

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    center_frequency: float = 193.4e12

    def __post_init__(self):
        dtype = np.complex64 if np.asarray(self.x).dtype == np.complex64 else np.complex128
        object.__setattr__(self, "x", _as_field(self.x, dtype))
        object.__setattr__(self, "y", _as_field(self.y, dtype))
        if len(self.x) != len(self.y):
            raise ValueError(
                f"polarizations must have equal length, got {len(self.x)} and {len(self.y)}"
            )
        if len(self.x) < 1:
            raise ValueError("signal must contain at least one sample")
        if not self.sample_rate > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("signal contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return len(self.x)

    @property
    def dtype(self) -> np.dtype:
        return self.x.dtype

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def time_grid(self) -> np.ndarray:
        """Sample instants in seconds, starting at t = 0."""
        return np.arange(self.n_samples) / self.sample_rate

    def frequency_grid(self) -> np.ndarray:
        """Baseband DFT bin frequencies in Hz (fftfreq ordering)."""
        return _fft.fftfreq(self.n_samples, d=1.0 / self.sample_rate)

    def with_fields(self, x: np.ndarray, y: np.ndarray) -> "DualPolSignal":
        """New signal with the same grid metadata and replaced samples."""
        return DualPolSignal(x, y, self.sample_rate, self.center_frequency)


def measure_power(sig: DualPolSignal) -> float:
    """Mean instantaneous power |x|^2 + |y|^2 over the block, in W."""
    return float(np.mean(np.abs(sig.x) ** 2) + np.mean(np.abs(sig.y) ** 2))


def frequency_shift(sig: DualPolSignal, delta_f: float) -> DualPolSignal:
    """Shift the signal by delta_f Hz within the simulated band.

    Multiplies both polarizations by exp(i 2 pi delta_f t). The shift must
    stay below Nyquist; the center frequency metadata is unchanged because
    the shift happens inside the baseband grid.
    """
    if abs(delta_f) >= sig.sample_rate / 2.0:
        raise OutOfBandError(
            f"shift {delta_f/1e9:.3f} GHz exceeds Nyquist "
            f"{sig.sample_rate/2e9:.3f} GHz"
        )
    if delta_f == 0.0:
        return sig
    phase = np.exp(2j * np.pi * delta_f * sig.time_grid()).astype(sig.dtype)
    return sig.with_fields(sig.x * phase, sig.y * phase)


def spectral_power(sig: DualPolSignal) -> float:
    """Total power computed in the frequency domain (Parseval check)."""
    n = sig.n_samples
    px = np.sum(np.abs(_fft.fft(sig.x)) ** 2) / n**2
    py = np.sum(np.abs(_fft.fft(sig.y)) ** 2) / n**2
    return float(px + py)


def save_signal(sig: DualPolSignal, path: str | Path) -> None:
    """Dump a signal as interleaved little-endian floats plus a JSON sidecar.

    Layout: (xRe, xIm, yRe, yIm) per sample; the sidecar at <path>.json holds
    {sample_rate_hz, center_frequency_hz, n_samples, precision}.
    """
    path = Path(path)
    single = sig.dtype == np.complex64
    ftype = "<f4" if single else "<f8"
    buf = np.empty((sig.n_samples, 4), dtype=ftype)
    buf[:, 0] = sig.x.real
    buf[:, 1] = sig.x.imag
    buf[:, 2] = sig.y.real
    buf[:, 3] = sig.y.imag
    buf.tofile(path)
    sidecar = {
        "sample_rate_hz": sig.sample_rate,
        "center_frequency_hz": sig.center_frequency,
        "n_samples": sig.n_samples,
        "precision": "single" if single else "double",
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_signal(path: str | Path) -> DualPolSignal:
    """Load a signal written by :func:`save_signal`."""
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    single = sidecar["precision"] == "single"
    ftype = "<f4" if single else "<f8"
    raw = np.fromfile(path, dtype=ftype).reshape(sidecar["n_samples"], 4)
    ctype = np.complex64 if single else np.complex128
    x = (raw[:, 0] + 1j * raw[:, 1]).astype(ctype)
    y = (raw[:, 2] + 1j * raw[:, 3]).astype(ctype)
    return DualPolSignal(x, y, sidecar["sample_rate_hz"], sidecar["center_frequency_hz"])
