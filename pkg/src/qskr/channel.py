"""Free-space channel: path loss, log-normal turbulence, SIC ordering, dBm."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import DegenerateChannelError, DomainError

DEFAULT_WAVELENGTH = 1550e-9
DEFAULT_SYMBOL_RATE = 1e8


@dataclass(frozen=True)
class GeometryParams:
    d_k: float
    d_t: float = 0.1
    d_r: float = 1.0
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        for name in ("d_k", "d_t", "d_r", "wavelength"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"GeometryParams.{name} must be > 0")


@dataclass(frozen=True)
class TurbulenceParams:
    sigma_x: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_x > 0.0:
            raise DomainError("sigma_x must be > 0")


@dataclass(frozen=True)
class ChannelState:
    """Per-user transmittances and the SIC decoding order.

    ``decoding_order[0]`` is decoded first and therefore sees interference
    from every other user.
    """

    t_loss: tuple
    t_turb: tuple
    t_k: tuple
    decoding_order: tuple

    def __post_init__(self):
        t = np.asarray(self.t_k, dtype=float)
        if np.any(t <= 0.0) or np.any(t > 1.0):
            raise DegenerateChannelError("every transmittance must lie in (0, 1]")
        if sorted(self.decoding_order) != list(range(len(t))):
            raise ValueError("decoding_order must be a permutation of user indices")

    @property
    def k_users(self):
        return len(self.t_k)

    @property
    def t(self):
        return np.asarray(self.t_k, dtype=float)

    @classmethod
    def from_transmittance(cls, t_k, powers=None):
        """Bypass geometry and build a state from given transmittances."""
        t = np.asarray(t_k, dtype=float)
        ones = (1.0,) * len(t)
        return cls(tuple(t), ones, tuple(t), decoding_order(t, powers))

    def with_order_for(self, powers):
        """Re-rank ties in transmittance using the given powers."""
        return ChannelState(self.t_loss, self.t_turb, self.t_k, decoding_order(self.t_k, powers))


def decoding_order(t_k, powers=None):
    """Indices sorted by transmittance, then power, then index (first wins)."""
    t = np.asarray(t_k, dtype=float)
    p = np.zeros_like(t) if powers is None else np.asarray(powers, dtype=float)
    return tuple(sorted(range(len(t)), key=lambda i: (-t[i], -p[i], i)))


def path_loss_raw(geom):
    return (math.pi * geom.d_t * geom.d_r / (2.0 * geom.wavelength)) ** 2 / geom.d_k**2


def path_loss(geom):
    """Aperture-limited path loss, clipped at 1.

    At 10 cm / 1 m apertures and 1550 nm the unclipped value exceeds 1
    for every distance below about 101 km.
    """
    return min(1.0, path_loss_raw(geom))


def sample_turbulence_log(params, n):
    """Raw ``ln T`` draws: Normal(-sigma^2/2, sigma^2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(params.seed)
    s = params.sigma_x
    return rng.normal(-0.5 * s * s, s, size=n)


def sample_turbulence(params, n):
    """Log-normal turbulence transmissivities clipped to (0, 1]."""
    return np.minimum(np.exp(sample_turbulence_log(params, n)), 1.0)


def assemble_channel(geoms, turb, powers=None, t_loss=None):
    """Combine path loss and one turbulence draw per user.

    ``t_loss`` overrides the geometric path loss (e.g. a tabulated
    distance profile).
    """
    k = len(geoms) if t_loss is None else len(t_loss)
    if k < 1:
        raise ValueError("need at least one user")
    if t_loss is None:
        t_loss = np.array([path_loss(g) for g in geoms])
    t_loss = np.asarray(t_loss, dtype=float)
    t_turb = sample_turbulence(turb, k)
    t = np.minimum(t_loss * t_turb, 1.0)
    if np.any(t <= 0.0):
        raise DegenerateChannelError("a user has zero transmittance after clipping")
    return ChannelState(tuple(t_loss), tuple(t_turb), tuple(t), decoding_order(t, powers))


def photon_energy(wavelength):
    return constants.h * constants.c / wavelength


def variance_to_dbm(v_a, wavelength=DEFAULT_WAVELENGTH, symbol_rate=DEFAULT_SYMBOL_RATE):
    """Optical power of a Gaussian modulation with variance ``v_a``.

    The mean photon number per symbol is ``(v_a - 1) / 2``; vacuum maps
    to ``-inf`` dBm.
    """
    if v_a < 1.0:
        raise DomainError("variance below vacuum")
    watts = 0.5 * (v_a - 1.0) * photon_energy(wavelength) * symbol_rate
    if watts == 0.0:
        return -math.inf
    return 10.0 * math.log10(watts / 1e-3)


def dbm_to_variance(p_dbm, wavelength=DEFAULT_WAVELENGTH, symbol_rate=DEFAULT_SYMBOL_RATE):
    if p_dbm == -math.inf:
        return 1.0
    watts = 1e-3 * 10.0 ** (p_dbm / 10.0)
    return 1.0 + 2.0 * watts / (photon_energy(wavelength) * symbol_rate)


def interpolate_profile(table, distances):
    """Piecewise-linear ``T(d)`` from ``[(d, T), ...]``, flat beyond the ends."""
    pts = sorted(table)
    xs = np.array([p[0] for p in pts], dtype=float)
    ys = np.array([p[1] for p in pts], dtype=float)
    return np.interp(np.asarray(distances, dtype=float), xs, ys)
