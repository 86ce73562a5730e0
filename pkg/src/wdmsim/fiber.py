"""Split-step fiber propagation with optional coarse-step birefringence.

Two propagation models are provided:

* :func:`propagate_manakov` solves the birefringence-averaged equation:
  both polarizations see the same Kerr phase (8/9) gamma (|x|^2 + |y|^2) dz.
* :func:`propagate_dpnlse` solves the coupled dual-polarization equations
  with explicit birefringence: the fiber is a concatenation of randomized
  waveplates, each rotating the principal axes and applying its differential
  group delay as a frequency-domain phase split, while the Kerr step uses
  the local-frame coefficients gamma (|x|^2 + (2/3)|y|^2) dz (and the
  symmetric expression for y). The rapidly oscillating ellipticity terms
  that average out over the birefringence beat length are omitted; that is
  the fidelity boundary of this engine.

Both use the symmetrized split-step scheme with linear half-steps merged
between consecutive nonlinear steps. Waveplate boundaries subdivide steps,
so each waveplate's linear operator is applied exactly.

Per-section DGD is sqrt(3 pi / 8) * pmd_coeff * sqrt(section length): the
magnitudes are deterministic and the scattering of the section axes turns
the concatenation into an isotropic random walk, so the mean end-to-end DGD
over an ensemble converges to pmd_coeff * sqrt(L).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import fft as _fft

from . import rng
from .signal import DualPolSignal
from .units import PLANCK, attenuation_linear, effective_length_km

MAX_STEP_PHASE_RAD = 0.3  # fixed-step runs beyond this are rejected
MANAKOV_KERR_FACTOR = 8.0 / 9.0
CROSS_KERR_FACTOR = 2.0 / 3.0
SECTION_DGD_FACTOR = math.sqrt(3.0 * math.pi / 8.0)


class PropagationError(RuntimeError):
    """Raised when a propagation run cannot proceed safely."""


@dataclass(frozen=True)
class FiberSpec:
    """Physical description of one fiber segment.

    length in km, alpha in dB/km, beta2 in ps^2/km, gamma in 1/(W km),
    pmd_coeff in ps/sqrt(km). effective_area_um2 is informational only.
    """

    length_km: float
    alpha_db_km: float = 0.2
    beta2_ps2_km: float = -21.27
    gamma_w_km: float = 1.3
    pmd_coeff: float = 0.0
    effective_area_um2: float | None = None

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError(f"fiber length must be positive, got {self.length_km}")
        if self.alpha_db_km < 0 or self.gamma_w_km < 0 or self.pmd_coeff < 0:
            raise ValueError("alpha, gamma and the PMD coefficient must be >= 0")

    @property
    def effective_length_km(self) -> float:
        return effective_length_km(self.alpha_db_km, self.length_km)

    @property
    def loss_db(self) -> float:
        return self.alpha_db_km * self.length_km


@dataclass(frozen=True)
class EdfaSpec:
    """Lumped amplifier: gain_db defaults to the span loss when None;
    noise_figure_db None disables ASE injection."""

    gain_db: float | None = None
    noise_figure_db: float | None = 5.0


@dataclass(frozen=True)
class Span:
    fiber: FiberSpec
    edfa: EdfaSpec = EdfaSpec()

    @property
    def edfa_gain_db(self) -> float:
        gain = self.edfa.gain_db if self.edfa.gain_db is not None else self.fiber.loss_db
        if gain < 0:
            raise ValueError("EDFA gain must be >= 0 dB")
        return gain


@dataclass(frozen=True)
class LinkSpec:
    """Ordered chain of (fiber, EDFA) spans."""

    spans: tuple[Span, ...]

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))

    @classmethod
    def uniform(cls, n_spans: int, fiber: FiberSpec, edfa: EdfaSpec = EdfaSpec()) -> "LinkSpec":
        """Identical spans; n_spans = 0 is the back-to-back (no fiber) case."""
        return cls(spans=tuple(Span(fiber, edfa) for _ in range(n_spans)))

    @property
    def n_spans(self) -> int:
        return len(self.spans)

    @property
    def total_length_km(self) -> float:
        return sum(s.fiber.length_km for s in self.spans)

    @property
    def total_beta2_ps2(self) -> float:
        """Accumulated dispersion sum(beta2 * L) in ps^2."""
        return sum(s.fiber.beta2_ps2_km * s.fiber.length_km for s in self.spans)

    @property
    def pmd_coeff(self) -> float:
        return self.spans[0].fiber.pmd_coeff if self.spans else 0.0


@dataclass(frozen=True)
class StepConfig:
    """Step-size policy of the symmetrized split-step integrator.

    "nonlinear_phase" bounds the peak per-step Kerr phase by phi_max_rad
    (and the step length by max_step_km); "fixed" uses dz_km throughout.
    """

    policy: Literal["nonlinear_phase", "fixed"] = "nonlinear_phase"
    phi_max_rad: float = 3e-3
    dz_km: float | None = None
    max_step_km: float = 1.0

    def __post_init__(self):
        if self.policy == "fixed":
            if self.dz_km is None or not self.dz_km > 0:
                raise ValueError("fixed step policy needs dz_km > 0")
        elif self.policy == "nonlinear_phase":
            if not 0.0 < self.phi_max_rad <= 0.05:
                raise ValueError(
                    f"phi_max_rad must be in (0, 0.05] rad, got {self.phi_max_rad}"
                )
        else:
            raise ValueError(f"unknown step policy {self.policy!r}")
        if not self.max_step_km > 0:
            raise ValueError("max_step_km must be positive")


@dataclass(frozen=True)
class Waveplate:
    """One birefringent section: length, lumped DGD, PSP rotation."""

    length_km: float
    dgd_ps: float
    rotation: np.ndarray  # 2x2 unitary Jones operator

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=complex, copy=True)
        if rot.shape != (2, 2):
            raise ValueError("rotation must be a 2x2 Jones operator")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        if not self.length_km > 0:
            raise ValueError("waveplate length must be positive")


@dataclass(frozen=True)
class BirefringenceRealization:
    """One span's waveplate sequence, reconstructable from (seed, span)."""

    waveplates: tuple[Waveplate, ...]
    master_seed: int
    span_index: int

    @property
    def total_length_km(self) -> float:
        return math.fsum(w.length_km for w in self.waveplates)

    def to_json(self) -> str:
        plates = [
            {
                "length_km": w.length_km,
                "dgd_ps": w.dgd_ps,
                "rotation": [[z.real, z.imag] for z in w.rotation.ravel()],
            }
            for w in self.waveplates
        ]
        return json.dumps(
            {"master_seed": self.master_seed, "span_index": self.span_index,
             "waveplates": plates},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "BirefringenceRealization":
        data = json.loads(text)
        plates = []
        for p in data["waveplates"]:
            rot = np.array(
                [complex(re, im) for re, im in p["rotation"]], dtype=complex
            ).reshape(2, 2)
            plates.append(Waveplate(p["length_km"], p["dgd_ps"], rot))
        return cls(tuple(plates), data["master_seed"], data["span_index"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BirefringenceRealization":
        return cls.from_json(Path(path).read_text())


def _haar_rotation(gen: np.random.Generator) -> np.ndarray:
    """Haar-uniform Jones rotation (uniform scattering on the Poincare sphere).

    A unit quaternion drawn uniformly on S^3 gives a rotation whose Stokes
    action has zero mean, so consecutive waveplate axes decorrelate in a
    single section and the DGD increments add up as an isotropic random
    walk. Weaker scatterings (for example a uniform retardation about a
    uniform axis) leave a residual 1/3 axis correlation per section and
    would inflate the mean end-to-end DGD by about sqrt(2).
    """
    q = gen.normal(size=4)
    while np.linalg.norm(q) < 1e-12:
        q = gen.normal(size=4)
    a, b, c, d = q / np.linalg.norm(q)
    return np.array(
        [
            [a + 1j * b, c + 1j * d],
            [-c + 1j * d, a - 1j * b],
        ]
    )


def gen_birefringence(
    fiber: FiberSpec,
    mean_section_km: float,
    seed: int,
    span_index: int,
) -> BirefringenceRealization:
    """Draw one span's waveplate sequence, deterministic in (seed, span).

    Section lengths are uniform in [0.5, 1.5] x mean with the last section
    truncated so the boundaries exactly tile the span; each section carries
    DGD sqrt(3 pi / 8) * pmd_coeff * sqrt(length) and an independent
    Haar-uniform rotation of its principal axes.
    """
    if not 0.0 < mean_section_km <= fiber.length_km:
        raise ValueError(
            f"mean section length must be in (0, {fiber.length_km}] km, "
            f"got {mean_section_km}"
        )
    gen = rng.stream(seed, "biref", span_index)
    length = fiber.length_km
    boundaries = [0.0]
    while boundaries[-1] < length:
        step = gen.uniform(0.5, 1.5) * mean_section_km
        boundaries.append(min(boundaries[-1] + step, length))
    plates = []
    for z0, z1 in zip(boundaries[:-1], boundaries[1:]):
        seg = z1 - z0
        plates.append(
            Waveplate(
                length_km=seg,
                dgd_ps=SECTION_DGD_FACTOR * fiber.pmd_coeff * math.sqrt(seg),
                rotation=_haar_rotation(gen),
            )
        )
    return BirefringenceRealization(tuple(plates), seed, span_index)


class _LinearOperator:
    """Frequency-domain loss + dispersion factor exp(coef * dz), cached per dz."""

    def __init__(self, omega: np.ndarray, alpha_db_km: float, beta2_ps2_km: float, dtype):
        alpha_lin = attenuation_linear(alpha_db_km)
        beta2_s2_km = beta2_ps2_km * 1e-24
        self.coef = -0.5 * alpha_lin + 0.5j * beta2_s2_km * omega**2
        self.dtype = dtype
        self._dz = None
        self._op = None

    def factor(self, dz: float) -> np.ndarray:
        if dz != self._dz:
            op = np.exp(self.coef * dz)
            self._op = op if self.dtype == np.complex128 else op.astype(self.dtype)
            self._dz = dz
        return self._op


def _section_plan(fiber, realization):
    """(length, rotation, dgd_ps) tuples covering the fiber, in order."""
    if realization is None:
        return [(fiber.length_km, None, 0.0)]
    total = realization.total_length_km
    if abs(total - fiber.length_km) > 1e-9 * max(fiber.length_km, 1.0):
        raise ValueError(
            f"realization covers {total} km but the fiber is {fiber.length_km} km"
        )
    return [(w.length_km, w.rotation, w.dgd_ps) for w in realization.waveplates]


def _propagate(sig, fiber, step, realization):
    """Shared symmetrized SSFM driver for both propagation models."""
    manakov = realization is None
    dtype = sig.dtype
    x = np.array(sig.x, dtype=dtype)
    y = np.array(sig.y, dtype=dtype)
    n = len(x)
    omega = 2.0 * np.pi * _fft.fftfreq(n, d=1.0 / sig.sample_rate)
    lin = _LinearOperator(omega, fiber.alpha_db_km, fiber.beta2_ps2_km, dtype)
    gamma = fiber.gamma_w_km
    # peak Kerr phase per unit length and W: governs the adaptive step
    gamma_step = gamma * (MANAKOV_KERR_FACTOR if manakov else 1.0)

    fx = _fft.fft(x)
    fy = _fft.fft(y)
    peak_power = float(np.max(np.abs(x) ** 2 + np.abs(y) ** 2))
    pending = 0.0  # linear length accumulated but not yet applied

    def choose_step(remaining: float) -> float:
        if step.policy == "fixed":
            h = min(step.dz_km, remaining)
            if gamma_step * peak_power * h > MAX_STEP_PHASE_RAD:
                raise PropagationError(
                    f"fixed step of {step.dz_km} km gives a peak nonlinear phase "
                    f"of {gamma_step * peak_power * h:.3f} rad > {MAX_STEP_PHASE_RAD}"
                )
            return h
        h = step.max_step_km
        if gamma_step * peak_power > 0.0:
            h = min(h, step.phi_max_rad / (gamma_step * peak_power))
        return min(h, remaining)

    z_done = 0.0
    for seg_length, rotation, dgd_ps in _section_plan(fiber, realization):
        if rotation is not None:
            fx, fy = rotation[0, 0] * fx + rotation[0, 1] * fy, \
                     rotation[1, 0] * fx + rotation[1, 1] * fy
            if dgd_ps != 0.0:
                half_dgd = np.exp(-0.5j * omega * (dgd_ps * 1e-12)).astype(dtype)
                fx = fx * half_dgd
                fy = fy * np.conj(half_dgd)
        if gamma == 0.0:
            pending += seg_length
            z_done += seg_length
            continue
        zloc = 0.0
        while seg_length - zloc > 1e-12 * fiber.length_km:
            h = choose_step(seg_length - zloc)
            x = _fft.ifft(fx * lin.factor(pending + h / 2.0))
            y = _fft.ifft(fy * lin.factor(pending + h / 2.0))
            px = np.abs(x) ** 2
            py = np.abs(y) ** 2
            total = px + py
            peak_power = float(total.max())
            if not math.isfinite(peak_power):
                raise PropagationError(
                    f"non-finite field at z = {z_done + zloc:.3f} km"
                )
            if manakov:
                phase = np.exp((1j * MANAKOV_KERR_FACTOR * gamma * h) * total)
                x = x * phase
                y = y * phase
            else:
                x = x * np.exp((1j * gamma * h) * (px + CROSS_KERR_FACTOR * py))
                y = y * np.exp((1j * gamma * h) * (py + CROSS_KERR_FACTOR * px))
            fx = _fft.fft(x)
            fy = _fft.fft(y)
            pending = h / 2.0
            zloc += h
        z_done += seg_length
    x = _fft.ifft(fx * lin.factor(pending))
    y = _fft.ifft(fy * lin.factor(pending))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise PropagationError("non-finite field at fiber output")
    return sig.with_fields(x.astype(dtype), y.astype(dtype))


def propagate_manakov(
    sig: DualPolSignal, fiber: FiberSpec, step: StepConfig = StepConfig()
) -> DualPolSignal:
    """Propagate under the birefringence-averaged (8/9) Kerr model."""
    return _propagate(sig, fiber, step, None)


def propagate_dpnlse(
    sig: DualPolSignal,
    fiber: FiberSpec,
    realization: BirefringenceRealization,
    step: StepConfig = StepConfig(),
) -> DualPolSignal:
    """Propagate the coupled equations through an explicit waveplate chain."""
    return _propagate(sig, fiber, step, realization)


def edfa(
    sig: DualPolSignal,
    gain_db: float,
    nf_db: float | None,
    seed: int,
) -> DualPolSignal:
    """Flat-gain amplifier with lumped ASE, deterministic in the seed.

    The field is scaled by sqrt(G); circular complex Gaussian noise is added
    independently per polarization with the flat per-polarization PSD
    S_ase = (h f0 / 2) (G * 10^(NF/10) - 1) over the simulated band.
    nf_db None (or -inf) disables the noise.
    """
    if gain_db < 0:
        raise ValueError(f"EDFA gain must be >= 0 dB, got {gain_db}")
    g = 10.0 ** (gain_db / 10.0)
    x = sig.x * np.sqrt(g)
    y = sig.y * np.sqrt(g)
    if nf_db is not None and not math.isinf(nf_db):
        psd = 0.5 * PLANCK * sig.center_frequency * (g * 10.0 ** (nf_db / 10.0) - 1.0)
        noise_power = max(psd, 0.0) * sig.sample_rate  # per polarization, W
        gen = rng.stream(seed, "ase")
        sigma = np.sqrt(noise_power / 2.0)
        n = sig.n_samples
        x = x + (gen.normal(0.0, sigma, n) + 1j * gen.normal(0.0, sigma, n))
        y = y + (gen.normal(0.0, sigma, n) + 1j * gen.normal(0.0, sigma, n))
    return sig.with_fields(x.astype(sig.dtype), y.astype(sig.dtype))


def ase_psd_w_hz(gain_db: float, nf_db: float, center_frequency: float) -> float:
    """Per-polarization ASE power spectral density of one amplifier."""
    g = 10.0 ** (gain_db / 10.0)
    return 0.5 * PLANCK * center_frequency * (g * 10.0 ** (nf_db / 10.0) - 1.0)


def pmd_coherence_bandwidth(pmd_coeff: float, effective_length_km: float) -> float:
    """Bandwidth over which the birefringence orientation stays flat, Hz.

    sqrt(3 / (4 pi^2 pmd_coeff^2 L_eff)); the averaged-Kerr model is formally
    valid only within this band. Returns +inf for pmd_coeff = 0.
    """
    if pmd_coeff < 0:
        raise ValueError("PMD coefficient must be >= 0")
    if not effective_length_km > 0:
        raise ValueError("effective length must be positive")
    if pmd_coeff == 0.0:
        return math.inf
    ps2 = pmd_coeff**2 * effective_length_km  # ps^2
    return math.sqrt(3.0 / (4.0 * math.pi**2 * ps2 * 1e-24))
