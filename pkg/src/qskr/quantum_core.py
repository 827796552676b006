"""Gaussian quantum-information primitives for a single user link.

All entropies are in bits.  Variances are in shot-noise units (SNU).

The two-mode state shared by a user and the receiver has covariance

    [[V I2,      Gamma ],
     [Gamma^T,   b I2  ]],   Gamma = sqrt(T (V^2 - 1)) diag(1, -1)

and Eve's information is bounded by h(l1) + h(l2) - h(l_het) where l1, l2
are its symplectic eigenvalues and l_het is the conditional eigenvalue
after the receiver's measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonPhysicalStateError

LN2 = math.log(2.0)
LOG2_E_HALF = math.log2(math.e / 2.0)

# eigenvalues in [1 - CLAMP_TOL, 1) are treated as rounding and clamped to 1
CLAMP_TOL = 1e-9

OMEGA = np.array(
    [[0.0, 1.0, 0.0, 0.0],
     [-1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, 0.0, 1.0],
     [0.0, 0.0, -1.0, 0.0]]
)


def entropy_h(x):
    """Von Neumann entropy contribution of a thermal mode, in bits.

    ``h(x) = (x+1)/2 log2((x+1)/2) - (x-1)/2 log2((x-1)/2)`` with the
    continuous limit ``h(1) = 0``.  Accepts scalars or arrays.

    Raises:
        DomainError: if any ``x < 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 1.0) or np.any(np.isnan(x)):
        raise DomainError(f"entropy_h requires x >= 1, got {x.min() if x.size else x}")
    # m log((m+1)/m) + log(m+1) avoids the cancellation of the two
    # x log x terms for large arguments
    m = (x - 1.0) / 2.0
    with np.errstate(divide="ignore"):
        tail = np.where(m > 0.0, m * np.log1p(1.0 / np.where(m > 0.0, m, 1.0)), 0.0)
    out = (tail + np.log1p(m)) / LN2
    return float(out) if out.ndim == 0 else out


def entropy_h_prime(x):
    """Derivative of :func:`entropy_h`, ``0.5 log2((x+1)/(x-1))``; infinite at 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 1.0):
        raise DomainError("entropy_h_prime requires x >= 1")
    with np.errstate(divide="ignore"):
        out = 0.5 * np.log2((x + 1.0) / (x - 1.0))
    return float(out) if out.ndim == 0 else out


def entropy_h_asym(x):
    """Large-argument form of the entropy function, ``log2(e x / 2)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("entropy_h_asym requires x > 0")
    out = LOG2_E_HALF + np.log2(x)
    return float(out) if out.ndim == 0 else out


def clamped_entropy(x):
    """``h(max(x, 1))``: the entropy with sub-vacuum arguments pinned to 0."""
    return entropy_h(np.maximum(np.asarray(x, dtype=float), 1.0))


@dataclass(frozen=True)
class LinkNoise:
    """Noise seen by one user at the receiver.

    ``b_k`` is the received variance for the modulation variance the
    record was built for; use :meth:`b_at` to re-evaluate it at any other
    modulation variance.
    """

    b_k: float
    v_interference: float
    w_k: float
    delta_det_sq: float
    t_k: float

    def __post_init__(self):
        for name in ("b_k", "v_interference", "w_k", "delta_det_sq"):
            if not getattr(self, name) >= 0.0:
                raise DomainError(f"LinkNoise.{name} must be >= 0")
        if not 0.0 <= self.t_k <= 1.0:
            raise DomainError("LinkNoise.t_k must lie in [0, 1]")

    @classmethod
    def build(cls, v_a, t_k, w_k, delta_det_sq, v_interference=0.0):
        b = t_k * v_a + (1.0 - t_k) * w_k + delta_det_sq + v_interference
        return cls(float(b), float(v_interference), float(w_k), float(delta_det_sq), float(t_k))

    @property
    def floor(self):
        """The part of ``b_k`` that does not depend on the user's own power."""
        return (1.0 - self.t_k) * self.w_k + self.delta_det_sq + self.v_interference

    def b_at(self, v_a):
        return self.t_k * v_a + self.floor


@dataclass(frozen=True)
class SymplecticSpectrum:
    lambda1: float
    lambda2: float
    lambda_het: float


@dataclass(frozen=True)
class CovarianceBlock:
    v_a: float
    gamma: np.ndarray = field(repr=False)
    b_k: float

    def matrix(self):
        eye = np.eye(2)
        return np.block([[self.v_a * eye, self.gamma], [self.gamma.T, self.b_k * eye]])


def covariance_block(v_a, noise):
    if v_a < 1.0:
        raise DomainError(f"modulation variance must be >= 1, got {v_a}")
    g = math.sqrt(noise.t_k * (v_a * v_a - 1.0))
    return CovarianceBlock(float(v_a), np.diag([g, -g]), noise.b_at(v_a))


def characteristic_coefficients(v_a, noise):
    """Return ``(A, B)`` of the quadratic whose roots are l1^2 and l2^2."""
    t, f = noise.t_k, noise.floor
    # A = V^2 (1 - 2T) + 2T + b^2 regrouped into non-negative terms
    a_coef = (v_a * (1.0 - t)) ** 2 + 2.0 * t * v_a * f + 2.0 * t + f * f
    root_b = t + (1.0 - t) * v_a * noise.w_k + v_a * (noise.delta_det_sq + noise.v_interference)
    return a_coef, root_b * root_b


def symplectic_spectrum(v_a, noise):
    """Closed-form symplectic eigenvalues of the user/receiver state.

    The discriminant factors as ``A^2 - 4B = d^2 s^2`` with
    ``d = V (1 - T) - f`` and ``s^2 = (V (1 - T) + f)^2 + 4 T (V f + 1)``,
    where ``f`` is the power-independent part of ``b``.  Hence
    ``l1 = (s + |d|) / 2`` and ``l2 = sqrt(B) / l1``, free of cancellation.

    Raises:
        DomainError: for ``v_a < 1``.
    """
    if v_a < 1.0:
        raise DomainError(f"modulation variance must be >= 1, got {v_a}")
    t, f = noise.t_k, noise.floor
    u = v_a * (1.0 - t)
    s = math.sqrt((u + f) ** 2 + 4.0 * t * (v_a * f + 1.0))
    lam1 = 0.5 * (s + abs(u - f))
    root_b = t + (1.0 - t) * v_a * noise.w_k + v_a * (noise.delta_det_sq + noise.v_interference)
    lam2 = root_b / lam1 if lam1 > 0.0 else 0.0
    # V - T (V^2 - 1) / (b + 1) with the V^2 terms cancelled by hand
    lam_het = (v_a * (f + 1.0) + t) / (noise.b_at(v_a) + 1.0)
    return SymplecticSpectrum(lam1, lam2, lam_het)


def symplectic_spectrum_asym(v_a, noise):
    """Large-modulation forms of the three eigenvalues."""
    if v_a <= 0.0:
        raise DomainError("modulation variance must be > 0")
    b = noise.b_at(v_a)
    if b == 0.0:
        raise ZeroDivisionError("received variance b_k is zero")
    lam1 = math.hypot(v_a, b)
    lam2 = v_a * (noise.v_interference + noise.delta_det_sq) / lam1
    lam_het = v_a - noise.t_k * v_a * v_a / b
    return SymplecticSpectrum(lam1, lam2, lam_het)


@dataclass(frozen=True)
class HolevoTerms:
    """Breakdown of a Holevo bound; ``clamped`` names terms pinned to h(1)."""

    s1: float
    s2: float
    s_het: float
    clamped: tuple = ()

    @property
    def chi(self):
        return self.s1 + self.s2 - self.s_het


def _checked_entropy(value, name, strict, clamped):
    if value >= 1.0:
        return entropy_h(value)
    if value < 1.0 - CLAMP_TOL:
        if strict:
            raise NonPhysicalStateError(f"{name} = {value:.6g} < 1")
        clamped.append(name)
    return 0.0


def holevo_terms_explicit(v_a, noise, strict=False):
    """Exact Holevo bound split into its three entropy terms.

    Sub-vacuum eigenvalues that are not round-off raise
    :class:`NonPhysicalStateError` when ``strict``; otherwise they are
    clamped and listed in ``HolevoTerms.clamped``.
    """
    spec = symplectic_spectrum(v_a, noise)
    clamped = []
    s1 = _checked_entropy(spec.lambda1, "lambda1", strict, clamped)
    s2 = _checked_entropy(spec.lambda2, "lambda2", strict, clamped)
    s_het = _checked_entropy(spec.lambda_het, "lambda_het", strict, clamped)
    return HolevoTerms(s1, s2, s_het, tuple(clamped))


def holevo_explicit(v_a, noise, strict=False):
    """Upper bound on Eve's information about one user's key, in bits."""
    return holevo_terms_explicit(v_a, noise, strict).chi


def asym_first_term(v_a, b, log_v_prefactor=False):
    """``h~(l~1)`` evaluated in log space.

    With ``log_v_prefactor`` the extra ``log2(v_a)`` of the expanded
    closed form is included.
    """
    out = LOG2_E_HALF + math.log2(math.hypot(v_a, b))
    if log_v_prefactor:
        out += math.log2(v_a)
    return out


def holevo_terms_asym(v_a, noise, log_v_prefactor=False):
    if v_a < 1.0:
        raise DomainError(f"modulation variance must be >= 1, got {v_a}")
    spec = symplectic_spectrum_asym(v_a, noise)
    clamped = []
    s1 = asym_first_term(v_a, noise.b_at(v_a), log_v_prefactor)
    s2 = _checked_entropy(spec.lambda2, "lambda2", False, clamped)
    s_het = _checked_entropy(spec.lambda_het, "lambda_het", False, clamped)
    return HolevoTerms(s1, s2, s_het, tuple(clamped))


def holevo_asym(v_a, noise, log_v_prefactor=False):
    """Large-modulation approximation of :func:`holevo_explicit`."""
    return holevo_terms_asym(v_a, noise, log_v_prefactor).chi
