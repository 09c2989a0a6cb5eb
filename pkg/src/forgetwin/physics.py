"""Segment-wise induction heating model.

A bar is a row of equal-length segments with uniform temperature and no
axial conduction between them. Each segment absorbs a fraction ``k`` of the
coil power it sits under and loses heat by free convection and radiation::

    m * C_V * dT / dt = k * P_coil - P_conv - P_rad

Temperatures are in degrees Celsius throughout; the Kelvin offset only
appears inside the radiation term, where 273 (not 273.15) is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._accel import HAS_NUMBA, njit

STEFAN_BOLTZMANN = 5.670374419e-8
KELVIN_OFFSET = 273.0


@dataclass(frozen=True)
class MaterialParams:
    specific_heat: float = 650.0  # J/(kg*C)
    emissivity: float = 0.15
    curie_temp: float = 800.0
    k_below: float = 0.90
    k_above: float = 0.20
    bar_mass: float = 412.0  # kg, whole bar
    bar_diameter: float = 0.1  # m

    def __post_init__(self):
        if not (0.0 < self.k_above <= self.k_below <= 1.0):
            raise ValueError("need 0 < k_above <= k_below <= 1")
        if self.specific_heat <= 0 or self.bar_mass <= 0 or self.bar_diameter <= 0:
            raise ValueError("specific_heat, bar_mass and bar_diameter must be positive")
        if not (0.0 <= self.emissivity <= 1.0):
            raise ValueError("emissivity must lie in [0, 1]")


@dataclass(frozen=True)
class Environment:
    ambient_temp: float = 20.0
    stefan_boltzmann: float = STEFAN_BOLTZMANN
    conv_coeff: float = 1.86
    conv_exponent: float = 1.3

    def __post_init__(self):
        if self.stefan_boltzmann <= 0:
            raise ValueError("stefan_boltzmann must be positive")


@dataclass(frozen=True)
class Segment:
    temperature: float
    length: float
    mass: float

    def __post_init__(self):
        if self.length <= 0 or self.mass <= 0:
            raise ValueError("segment length and mass must be positive")


def segment_mass(mat: MaterialParams, seg_length: float, bar_length: float) -> float:
    """Mass of one segment; the bar's mass is spread evenly along its length."""
    return mat.bar_mass * seg_length / bar_length


def transfer_efficiency(temp: float, mat: MaterialParams) -> float:
    # at exactly the Curie point the reduced coupling applies
    return mat.k_below if temp < mat.curie_temp else mat.k_above


def convective_loss(temp: float, env: Environment, diameter: float, length: float) -> float:
    if temp <= env.ambient_temp:
        return 0.0
    return math.pi * diameter * length * env.conv_coeff * (temp - env.ambient_temp) ** env.conv_exponent


def radiative_loss(temp: float, env: Environment, mat: MaterialParams, diameter: float, length: float) -> float:
    """Radiated power of a segment's lateral surface, in W."""
    if temp <= env.ambient_temp:
        return 0.0
    ts = temp + KELVIN_OFFSET
    ta = env.ambient_temp + KELVIN_OFFSET
    return math.pi * diameter * length * env.stefan_boltzmann * mat.emissivity * (ts**4 - ta**4)


def net_power(temp: float, coil_power_share: float, mat: MaterialParams, env: Environment, length: float) -> float:
    d = mat.bar_diameter
    return (
        transfer_efficiency(temp, mat) * coil_power_share
        - convective_loss(temp, env, d, length)
        - radiative_loss(temp, env, mat, d, length)
    )


def step_segment(seg: Segment, coil_power_share: float, mat: MaterialParams, env: Environment, dt: float) -> Segment:
    """Advance one segment by an explicit Euler step of length ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if coil_power_share < 0:
        raise ValueError("coil power share must be non-negative")
    p_tot = net_power(seg.temperature, coil_power_share, mat, env, seg.length)
    new_t = seg.temperature + p_tot * dt / (seg.mass * mat.specific_heat)
    return replace(seg, temperature=max(new_t, env.ambient_temp))


# --- array kernels -------------------------------------------------------
# Both variants take plain floats so the jitted one compiles once.

def _heat_step_numpy(temps, shares, seg_len, seg_mass, c_v, emissivity, t_curie,
                     k_below, k_above, diameter, t_amb, sigma, h_conv, n_conv, dt):
    k = np.where(temps < t_curie, k_below, k_above)
    hot = temps > t_amb
    dtemp = np.where(hot, temps - t_amb, 0.0)
    area = math.pi * diameter * seg_len
    p_conv = area * h_conv * dtemp**n_conv
    ts = temps + KELVIN_OFFSET
    ta = t_amb + KELVIN_OFFSET
    p_rad = np.where(hot, area * sigma * emissivity * (ts**4 - ta**4), 0.0)
    new = temps + (k * shares - p_conv - p_rad) * dt / (seg_mass * c_v)
    return np.maximum(new, t_amb)


@njit(cache=True)
def _heat_step_loop(temps, shares, seg_len, seg_mass, c_v, emissivity, t_curie,
                    k_below, k_above, diameter, t_amb, sigma, h_conv, n_conv, dt):
    n = temps.shape[0]
    out = np.empty(n)
    area = math.pi * diameter * seg_len
    ta4 = (t_amb + KELVIN_OFFSET) ** 4
    scale = dt / (seg_mass * c_v)
    for i in range(n):
        t = temps[i]
        k = k_below if t < t_curie else k_above
        p = k * shares[i]
        if t > t_amb:
            p -= area * h_conv * (t - t_amb) ** n_conv
            p -= area * sigma * emissivity * ((t + KELVIN_OFFSET) ** 4 - ta4)
        t_new = t + p * scale
        out[i] = t_new if t_new > t_amb else t_amb
    return out


_heat_kernel = _heat_step_loop if HAS_NUMBA else _heat_step_numpy


def step_temperatures(temps: np.ndarray, shares: np.ndarray, seg_len: float, seg_mass: float,
                      mat: MaterialParams, env: Environment, dt: float) -> np.ndarray:
    """Vectorised :func:`step_segment` over a whole bar."""
    return _heat_kernel(
        np.ascontiguousarray(temps, dtype=np.float64),
        np.ascontiguousarray(shares, dtype=np.float64),
        float(seg_len), float(seg_mass), mat.specific_heat, mat.emissivity, mat.curie_temp,
        mat.k_below, mat.k_above, mat.bar_diameter, env.ambient_temp, env.stefan_boltzmann,
        env.conv_coeff, env.conv_exponent, float(dt),
    )
