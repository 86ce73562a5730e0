"""Unit conventions and conversions used throughout the simulator.

Internal conventions: lengths in km, powers in W, frequencies in Hz.
Fiber coefficients keep their customary engineering units (attenuation in
dB/km, dispersion in ps^2/km or ps/(nm km), nonlinearity in 1/(W km)) and
are converted at the point of use with the helpers below.
"""

from __future__ import annotations

import math

from scipy.constants import c as LIGHT_SPEED  # m/s
from scipy.constants import h as PLANCK  # J s

LN10 = math.log(10.0)


def db_to_linear(value_db: float) -> float:
    """Convert a dB ratio to a linear power ratio."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Convert a linear power ratio to dB."""
    if value <= 0:
        raise ValueError(f"ratio must be positive, got {value}")
    return 10.0 * math.log10(value)


def dbm_to_watt(power_dbm: float) -> float:
    """Convert a power level in dBm to W."""
    return 1e-3 * 10.0 ** (power_dbm / 10.0)


def watt_to_dbm(power_w: float) -> float:
    """Convert a power in W to dBm."""
    if power_w <= 0:
        raise ValueError(f"power must be positive, got {power_w}")
    return 10.0 * math.log10(power_w / 1e-3)


def attenuation_linear(alpha_db_km: float) -> float:
    """Power attenuation coefficient in 1/km from a dB/km figure.

    P(z) = P(0) exp(-alpha_lin z); the field decays with alpha_lin / 2.
    """
    return alpha_db_km * LN10 / 10.0


def attenuation_db_km(alpha_lin: float) -> float:
    """Inverse of :func:`attenuation_linear`."""
    return alpha_lin * 10.0 / LN10


def effective_length_km(alpha_db_km: float, length_km: float) -> float:
    """Effective nonlinear interaction length (1 - exp(-alpha L)) / alpha.

    Tends to the geometric length as the attenuation goes to zero.
    """
    if length_km < 0:
        raise ValueError("length must be non-negative")
    alpha_lin = attenuation_linear(alpha_db_km)
    if alpha_lin == 0.0:
        return length_km
    return -math.expm1(-alpha_lin * length_km) / alpha_lin


def wavelength_m(frequency_hz: float) -> float:
    """Vacuum wavelength for an optical carrier frequency."""
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    return LIGHT_SPEED / frequency_hz


def dispersion_to_beta2(d_ps_nm_km: float, wavelength: float) -> float:
    """Convert D in ps/(nm km) to beta2 in ps^2/km at the given wavelength (m).

    beta2 = -D lambda^2 / (2 pi c).
    """
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    d_si = d_ps_nm_km * 1e-6  # s/m^2
    beta2_si = -d_si * wavelength**2 / (2.0 * math.pi * LIGHT_SPEED)  # s^2/m
    return beta2_si * 1e27  # ps^2/km


def beta2_to_dispersion(beta2_ps2_km: float, wavelength: float) -> float:
    """Inverse of :func:`dispersion_to_beta2`."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    beta2_si = beta2_ps2_km * 1e-27
    d_si = -beta2_si * 2.0 * math.pi * LIGHT_SPEED / wavelength**2
    return d_si * 1e6
