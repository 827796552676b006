"""Successive convex approximation of the asymptotic sum key rate.

Each iteration replaces the non-concave parts of the asymptotic sum SKR
by first-order expansions at the current allocation and maximises the
resulting concave surrogate over

    lower <= V <= upper,    sum_i T_i V_i <= rhs

with an SQP solver (projected gradient ascent is kept as an option).  Variables are indexed by user; SIC
positions only enter through the interference masks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, nnls

from . import quantum_core as qc
from .errors import DomainError, InfeasibleError
from .rates import as_vector, interference_masks

LN2 = qc.LN2
# fraction of the remaining gap to l2 = 1 that a clamped user keeps per step
CLAMP_APPROACH = 0.1
# l2 this close to 1 is treated as sitting on the clamp
NEAR_CLAMP = 1e-12


@dataclass(frozen=True)
class FeasibleSet:
    """Box intersected with one halfspace ``coeff . V <= rhs``."""

    lower: np.ndarray
    upper: np.ndarray
    coeff: np.ndarray
    rhs: float

    def __post_init__(self):
        if np.any(self.lower >= self.upper):
            raise InfeasibleError("lower bound must be below the cap for every user")
        if not self.rhs > 0.0:
            raise InfeasibleError(f"receiver budget left after noise is {self.rhs:.6g} <= 0")
        if self.coeff @ self.lower > self.rhs:
            raise InfeasibleError("receiver budget cannot accommodate every user at the floor")
        if np.any(self.coeff <= 0.0):
            raise DomainError("halfspace coefficients must be positive")

    @classmethod
    def from_config(cls, config, channel, lower=1.0):
        t = channel.t
        rhs = config.v_max_bs - float(np.sum((1.0 - t) * config.w_arr)) - config.delta_det_sq
        k = config.k_users
        return cls(np.full(k, float(lower)), config.v_max_user_arr.copy(), t.copy(), rhs)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        scale = max(1.0, self.rhs)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper * (1 + tol))
                    and self.coeff @ x <= self.rhs + tol * scale)

    def project(self, y):
        """Euclidean projection; exact up to the root-finder tolerance."""
        return project_box_halfspace(np.asarray(y, dtype=float), self.lower, self.upper,
                                     self.coeff, self.rhs)

    def scaled(self, s):
        """The same set in coordinates ``z = V / s``."""
        return FeasibleSet(self.lower / s, self.upper / s, self.coeff * s, self.rhs)

    def constraint_gradients(self):
        """Rows of ``g_i(x) <= 0`` gradients: upper caps, floors, halfspace."""
        k = len(self.lower)
        return np.vstack([np.eye(k), -np.eye(k), self.coeff[None, :]])

    def slacks(self, x):
        return np.concatenate([self.upper - x, x - self.lower, [self.rhs - self.coeff @ x]])


def project_box_halfspace(y, lower, upper, a, r):
    """Project ``y`` onto ``{lower <= x <= upper, a.x <= r}`` with ``a > 0``.

    The KKT solution is ``clip(y - mu a)``; ``mu >= 0`` is found by a
    bracketing root search on the monotone map ``mu -> a.clip(y - mu a)``.
    """
    x = np.clip(y, lower, upper)
    if a @ x <= r:
        return x

    def excess(mu):
        return a @ np.clip(y - mu * a, lower, upper) - r

    hi = float(np.max((y - lower) / a))
    if excess(hi) > 0.0:
        raise InfeasibleError("halfspace does not meet the box")
    mu = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    x = np.clip(y - mu * a, lower, upper)
    # the root is exact to rounding; a final rescale of the free part keeps a.x <= r
    over = a @ x - r
    if over > 0.0:
        free = (x > lower) & (x < upper)
        if np.any(free):
            x[free] -= over * a[free] / (a[free] @ a[free])
            x = np.clip(x, lower, upper)
    return x


# -------------------------------------------------------------- objective


@dataclass(frozen=True)
class Model:
    """Vectorised constants of the asymptotic objective for one channel."""

    t: np.ndarray
    w_rate: np.ndarray  # weights of undecoded users in the rate bound
    mask: np.ndarray  # mask[k, j]: user j is undecoded when k is decoded
    noise_rate: np.ndarray  # (1 - T_k) W_k + delta^2
    delta_sq: float
    eta: float
    log_v_prefactor: bool

    @classmethod
    def build(cls, channel, config):
        t = channel.t
        w_rate = t.copy() if config.interference_weighting == "transmittance" else np.ones_like(t)
        mask = interference_masks(channel).astype(float)
        noise = (1.0 - t) * config.w_arr + config.delta_det_sq
        return cls(t, w_rate, mask, noise, config.delta_det_sq, config.eta, config.log_v_prefactor)

    @property
    def jac_u(self):
        return self.mask * self.t[None, :]

    @property
    def jac_b(self):
        return np.diag(self.t) + self.jac_u

    @property
    def jac_d(self):
        return self.mask * self.w_rate[None, :]

    def state(self, x):
        u = self.mask @ (self.t * x)
        b = self.t * x + self.noise_rate + u
        d = self.mask @ (self.w_rate * x) + self.noise_rate
        r = np.hypot(x, b)
        lam2 = x * (u + self.delta_sq) / r
        lam_het = x - self.t * x * x / b
        return u, b, d, r, lam2, lam_het


def _h_clamped(x):
    return qc.entropy_h(np.maximum(x, 1.0))


def _h_clamped_prime(x):
    out = np.zeros_like(x)
    above = x > 1.0
    out[above] = qc.entropy_h_prime(x[above])
    return out


def asymptotic_terms(x, model, pinned=None):
    """Per-user ``(i_low, chi)`` of the asymptotic key rate.

    Users flagged in ``pinned`` take ``h(l2) = 0`` regardless of ``l2``:
    the clamped branch continued past the clamp.
    """
    x = np.asarray(x, dtype=float)
    u, b, d, r, lam2, lam_het = model.state(x)
    i_low = np.log2(1.0 + model.t * x / d)
    s1 = qc.LOG2_E_HALF + np.log2(r)
    if model.log_v_prefactor:
        s1 = s1 + np.log2(x)
    s2 = _h_clamped(lam2)
    if pinned is not None:
        s2 = np.where(pinned, 0.0, s2)
    chi = s1 + s2 - _h_clamped(lam_het)
    return i_low, chi


def asymptotic_objective(alloc, channel, config):
    """Sum of ``eta I_k - chi_k`` with the large-modulation Holevo bound."""
    model = Model.build(channel, config)
    i_low, chi = asymptotic_terms(as_vector(alloc), model)
    return float(np.sum(model.eta * i_low - chi))


def _objective(x, model, pinned=None):
    i_low, chi = asymptotic_terms(x, model, pinned)
    return float(np.sum(model.eta * i_low - chi))


def _lam2_jacobian(x, model, u, r, b):
    dr = (np.diag(x) + b[:, None] * model.jac_b) / r[:, None]
    c = u + model.delta_sq
    return (np.diag(c / r) + (x / r)[:, None] * model.jac_u
            - (x * c / r**2)[:, None] * dr), dr


def _lam_het_jacobian(x, model, b):
    t = model.t
    return np.diag(1.0 - 2.0 * t * x / b) + (t * x * x / b**2)[:, None] * model.jac_b


def objective_gradient(x, model):
    """Analytic gradient of :func:`asymptotic_objective` (one-sided at clamps)."""
    u, b, d, r, lam2, lam_het = model.state(x)
    n = model.t * x + d
    jac_d = model.jac_d
    jac_n = np.diag(model.t) + jac_d
    g = model.eta / LN2 * (jac_n.T @ (1.0 / n) - jac_d.T @ (1.0 / d))
    j2, dr = _lam2_jacobian(x, model, u, r, b)
    g -= dr.T @ (1.0 / (r * LN2))
    if model.log_v_prefactor:
        g -= 1.0 / (x * LN2)
    g -= j2.T @ _h_clamped_prime(lam2)
    g += _lam_het_jacobian(x, model, b).T @ _h_clamped_prime(lam_het)
    return g


# -------------------------------------------------------------- surrogates


@dataclass(frozen=True)
class SurrogatePoint:
    """Expansion point of one user's surrogate.

    ``regime`` records whether the user's modulation variance exceeds its
    received variance at the reference; the surrogate itself does not
    branch on it.
    """

    v_ref: float
    lambda1_ref: float
    lambda2_ref: float
    lambda_het_ref: float
    b_ref: float
    regime: bool

    @classmethod
    def at(cls, v_a, noise):
        spec = qc.symplectic_spectrum_asym(v_a, noise)
        b = noise.b_at(v_a)
        return cls(float(v_a), spec.lambda1, spec.lambda2, spec.lambda_het, b, bool(v_a > b))


def reference_points(x, channel, config):
    model = Model.build(channel, config)
    u = model.mask @ (model.t * x)
    refs = []
    for k in range(len(x)):
        noise = qc.LinkNoise.build(x[k], model.t[k], config.w[k], config.delta_det_sq, u[k])
        refs.append(SurrogatePoint.at(x[k], noise))
    return tuple(refs)


def surrogate_h1(v_a, noise, ref):
    """Convex upper model of ``h~(l~1)`` anchored at ``ref``.

    ``log2 r`` is replaced by its tangent in ``r = |(v_a, b)|``, which is
    convex in ``v_a`` and never below the true term.
    """
    r = math.hypot(v_a, noise.b_at(v_a))
    return qc.LOG2_E_HALF + math.log2(ref.lambda1_ref) + (r - ref.lambda1_ref) / (ref.lambda1_ref * LN2)


def surrogate_h1_slope(v_a, noise, ref):
    b = noise.b_at(v_a)
    return (v_a + noise.t_k * b) / (math.hypot(v_a, b) * ref.lambda1_ref * LN2)


def _lam2_scalar(v_a, noise):
    return v_a * (noise.v_interference + noise.delta_det_sq) / math.hypot(v_a, noise.b_at(v_a))


def _lam2_scalar_slope(v_a, noise):
    b = noise.b_at(v_a)
    r = math.hypot(v_a, b)
    c = noise.v_interference + noise.delta_det_sq
    return c / r - v_a * c * (v_a + noise.t_k * b) / r**3


def surrogate_h2(v_a, noise, ref):
    """Tangent of ``h(l~2(v_a))`` at ``ref``; ``(value, degenerate)``.

    With ``l~2 <= 1`` at the reference the entropy is pinned at 0 and the
    surrogate degenerates to the constant 0.
    """
    if ref.lambda2_ref <= 1.0:
        return 0.0, True
    slope = qc.entropy_h_prime(ref.lambda2_ref) * _lam2_scalar_slope(ref.v_ref, noise)
    return qc.entropy_h(ref.lambda2_ref) + slope * (v_a - ref.v_ref), False


def surrogate_h2_slope(noise, ref):
    if ref.lambda2_ref <= 1.0:
        return 0.0
    return qc.entropy_h_prime(ref.lambda2_ref) * _lam2_scalar_slope(ref.v_ref, noise)


def _lam2_tangent(lam0):
    """Tangent point ``kappa`` of ``h`` used for a user whose ``l2`` is ``lam0``.

    Above the clamp the tangent is taken at ``lam0`` itself.  At or below
    it, ``kappa > 1`` is chosen so that the tangent crosses zero at
    ``1 - CLAMP_APPROACH (1 - lam0)``, which keeps the capped tangent at
    0 around the anchor while charging a steep price for crossing 1.
    """
    if lam0 > 1.0 + NEAR_CLAMP:
        return float(lam0)
    target = 1.0 - CLAMP_APPROACH * (1.0 - lam0)

    def root_gap(kappa):
        return kappa - qc.entropy_h(kappa) / qc.entropy_h_prime(kappa) - target

    lo = 1.0 + NEAR_CLAMP
    if root_gap(lo) <= 0.0:
        return lo  # within rounding of the clamp: steepest representable tangent
    hi = 2.0  # the tangent root falls from 1 as kappa grows
    while root_gap(hi) > 0.0:
        hi = 1.0 + 2.0 * (hi - 1.0)
    return brentq(root_gap, lo, hi, xtol=1e-15)


@dataclass(frozen=True)
class Surrogate:
    """Concave lower model of the asymptotic objective anchored at ``x0``.

    Per user it keeps ``log2(T V + D)`` exact and replaces

    * ``-log2 D`` by its tangent,
    * ``log2 |(V, b)|`` by its tangent in the norm (an upper model),
    * ``-h(max(l2, 1))`` by ``min(0, -tangent of h at kappa)`` with ``l2``
      linearised (see :func:`_lam2_tangent`),
    * ``h(max(l_het, 1))`` by ``min(chord, h_ext)`` of the concave
      ``l_het``: the chord runs from ``(1, 0)`` to the knee halfway to the
      anchor, ``h_ext`` is ``h`` continued linearly below the knee.

    The two ``min`` pieces make the model non-smooth; :meth:`value` is
    exact and :meth:`gradient` returns a supergradient.
    """

    model: Model
    x0: np.ndarray
    log_d0: np.ndarray
    d0: np.ndarray
    r0: np.ndarray
    h2_const: np.ndarray  # tangent of h evaluated at l2(x0)
    h2_grad: np.ndarray  # rows: h'(kappa) grad l2 at x0
    het_active: np.ndarray
    het_knee: np.ndarray
    het_h_knee: np.ndarray
    het_dh_knee: np.ndarray
    het_chord: np.ndarray

    @classmethod
    def build(cls, x0, model):
        x0 = np.array(x0, dtype=float)
        u, b, d, r, lam2, lam_het = model.state(x0)
        j2, _ = _lam2_jacobian(x0, model, u, r, b)
        kappa = np.array([_lam2_tangent(l) for l in lam2])
        h2_slope = qc.entropy_h_prime(kappa)
        h2_const = qc.entropy_h(kappa) + h2_slope * (lam2 - kappa)
        active = lam_het > 1.0
        knee = np.where(active, 1.0 + 0.5 * (lam_het - 1.0), 2.0)
        h_knee = qc.entropy_h(knee)
        return cls(model, x0, np.log2(d), d, r, h2_const, h2_slope[:, None] * j2, active,
                   knee, h_knee, qc.entropy_h_prime(knee), h_knee / (knee - 1.0))

    # smooth part: rate bound and first Holevo term
    def smooth_value(self, x, state=None):
        m = self.model
        u, b, d, r, lam2, lam_het = state or m.state(x)
        rate = np.log2(m.t * x + d) - self.log_d0 - (d - self.d0) / (self.d0 * LN2)
        s1 = qc.LOG2_E_HALF + np.log2(self.r0) + (r - self.r0) / (self.r0 * LN2)
        if m.log_v_prefactor:
            s1 = s1 + np.log2(self.x0) + (x - self.x0) / (self.x0 * LN2)
        return float(np.sum(m.eta * rate - s1))

    def smooth_gradient(self, x, state=None):
        m = self.model
        u, b, d, r, lam2, lam_het = state or m.state(x)
        jac_d = m.jac_d
        jac_n = np.diag(m.t) + jac_d
        g = m.eta / LN2 * (jac_n.T @ (1.0 / (m.t * x + d)) - jac_d.T @ (1.0 / self.d0))
        dr = (np.diag(x) + b[:, None] * m.jac_b) / r[:, None]
        g -= dr.T @ (1.0 / (self.r0 * LN2))
        if m.log_v_prefactor:
            g -= 1.0 / (self.x0 * LN2)
        return g

    def neg_h2_tangent(self, x):
        """``-(tangent of h)(l2_lin(x))`` per user; affine in ``x``."""
        return -(self.h2_const + self.h2_grad @ (x - self.x0))

    def het_pieces(self, lam):
        """Chord and extended-``h`` values per user (meaningful where active)."""
        chord = self.het_chord * (lam - 1.0)
        lam_safe = np.maximum(lam, self.het_knee)
        ext = np.where(lam >= self.het_knee, qc.entropy_h(lam_safe),
                       self.het_h_knee + self.het_dh_knee * (lam - self.het_knee))
        return chord, ext

    def het_slopes(self, lam):
        lam_safe = np.maximum(lam, self.het_knee)
        ext = np.where(lam >= self.het_knee, qc.entropy_h_prime(lam_safe), self.het_dh_knee)
        return self.het_chord, ext

    def value(self, x):
        m = self.model
        state = m.state(x)
        if np.any(m.t * x + state[2] <= 0.0):
            return -np.inf
        chord, ext = self.het_pieces(state[5])
        het = np.where(self.het_active, np.minimum(chord, ext), 0.0)
        neg_s2 = np.minimum(0.0, self.neg_h2_tangent(x))
        return self.smooth_value(x, state) + float(np.sum(neg_s2 + het))

    def gradient(self, x):
        m = self.model
        state = m.state(x)
        g = self.smooth_gradient(x, state)
        live = self.neg_h2_tangent(x) < 0.0
        g -= self.h2_grad[live].sum(axis=0)
        lam = state[5]
        chord, ext = self.het_pieces(lam)
        s_chord, s_ext = self.het_slopes(lam)
        slope = np.where(self.het_active, np.where(chord <= ext, s_chord, s_ext), 0.0)
        g += _lam_het_jacobian(x, m, state[1]).T @ slope
        return g


def surrogate_objective(alloc, channel, config, anchor):
    """Value of the concave surrogate built at allocation ``anchor``."""
    model = Model.build(channel, config)
    return Surrogate.build(as_vector(anchor), model).value(as_vector(alloc))


# -------------------------------------------------------------- inner solver


@dataclass(frozen=True)
class SubproblemResult:
    x: np.ndarray
    value: float
    iterations: int
    pg_norm: float
    converged: bool
    solver: str = "slsqp"


INNER_METHODS = ("slsqp", "pg")


def _pg_ascent(f, grad, zset, z, tol, max_iter):
    """Projected (super)gradient ascent with BB steps; ``(z, f, iters, pg)``."""
    fz, gz = f(z), grad(z)
    best_z, best_f = z, fz
    alpha = 1.0 / max(np.max(np.abs(gz)), 1e-12)
    pg = np.max(np.abs(zset.project(z + gz) - z))
    it = 0
    while pg > tol and it < max_iter:
        it += 1
        step = alpha
        slack = 16.0 * np.finfo(float).eps * max(1.0, abs(fz))
        while True:
            z_new = zset.project(z + step * gz)
            dz = z_new - z
            f_new = f(z_new)
            if f_new >= fz + 1e-4 * (gz @ dz) - slack or np.max(np.abs(dz)) < 1e-16:
                break
            step *= 0.5
        g_new = grad(z_new)
        curv = -(dz @ (g_new - gz))
        alpha = (dz @ dz) / curv if curv > 0.0 else min(step * 4.0, 1e12)
        stalled = np.max(np.abs(dz)) < 1e-16
        z, fz, gz = z_new, f_new, g_new
        if fz > best_f:
            best_z, best_f = z, fz
        pg = np.max(np.abs(zset.project(z + gz) - z))
        if stalled:
            break
    if pg > tol and fz < best_f:
        z, fz = best_z, best_f
        pg = np.max(np.abs(zset.project(z + grad(z)) - z))
    return z, fz, it, pg


def _slsqp_epigraph(sur, zset, sc, z0, max_iter):
    """Solve the surrogate subproblem with its ``min`` pieces as epigraph constraints.

    Variables are ``(z, s, t)`` with ``V = sc z``; ``s <= min(0, -tangent)``
    carries the ``l2`` term and ``t <= min(chord, h_ext)`` the ``l_het``
    term of the users where it is active.
    """
    k = len(z0)
    het = np.flatnonzero(sur.het_active)
    n_t = len(het)
    m = sur.model

    def split(y):
        return y[:k] * sc, y[k:2 * k], y[2 * k:]

    def obj(y):
        x, s, t = split(y)
        return -(sur.smooth_value(x) + s.sum() + t.sum())

    def obj_grad(y):
        x, _, _ = split(y)
        return -np.concatenate([sur.smooth_gradient(x) * sc, np.ones(k), np.ones(n_t)])

    def cons(y):
        x, s, t = split(y)
        lam = m.state(x)[5][het]
        chord, ext = sur.het_pieces(m.state(x)[5])
        return np.concatenate([[zset.rhs - zset.coeff @ y[:k]], sur.neg_h2_tangent(x) - s,
                               chord[het] - t, ext[het] - t]) if n_t else \
            np.concatenate([[zset.rhs - zset.coeff @ y[:k]], sur.neg_h2_tangent(x) - s])

    def cons_jac(y):
        x, _, _ = split(y)
        rows = [np.concatenate([-zset.coeff, np.zeros(k + n_t)])[None, :],
                np.hstack([-sur.h2_grad * sc[None, :], -np.eye(k), np.zeros((k, n_t))])]
        if n_t:
            state = m.state(x)
            jl = _lam_het_jacobian(x, m, state[1])[het] * sc[None, :]
            s_chord, s_ext = sur.het_slopes(state[5])
            eye_t = -np.eye(n_t)
            rows.append(np.hstack([s_chord[het, None] * jl, np.zeros((n_t, k)), eye_t]))
            rows.append(np.hstack([s_ext[het, None] * jl, np.zeros((n_t, k)), eye_t]))
        return np.vstack(rows)

    x0 = z0 * sc
    s0 = np.minimum(0.0, sur.neg_h2_tangent(x0))
    chord0, ext0 = sur.het_pieces(m.state(x0)[5])
    t0 = np.minimum(chord0, ext0)[het]
    y0 = np.concatenate([z0, s0, t0])
    upper = [None if not np.isfinite(u) else u for u in zset.upper]
    bounds = list(zip(zset.lower, upper)) + [(None, 0.0)] * k + [(None, None)] * n_t
    res = minimize(obj, y0, jac=obj_grad, method="SLSQP", bounds=bounds,
                   constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                   options={"ftol": 1e-15, "maxiter": max_iter})
    return zset.project(res.x[:k]), int(res.nit), res.status == 0


def solve_subproblem(surrogate, feasible, start, tol=1e-8, max_iter=10_000, method="slsqp"):
    """Maximise ``surrogate`` over ``feasible``.

    Both solvers work in coordinates ``z = V / V_start``.  ``"slsqp"``
    (default) passes the two ``min`` pieces of the surrogate to scipy's
    SQP as epigraph constraints, so every function it sees is smooth.
    ``"pg"`` is projected supergradient ascent with Barzilai-Borwein trial
    steps and Armijo backtracking, stopping once ``|P(z + g) - z|_inf <=
    tol`` or after ``max_iter`` steps; it is reliable only while no
    ``min`` piece switches near the optimum.  The result never has a
    lower surrogate value than ``start``.
    """
    if method not in INNER_METHODS:
        raise ValueError(f"method must be one of {INNER_METHODS}")
    x_start = as_vector(start)
    if not feasible.contains(x_start):
        raise InfeasibleError("subproblem start is not feasible")
    s = np.maximum(x_start, 1.0)
    zset = feasible.scaled(s)

    def f(z):
        return surrogate.value(z * s)

    def grad(z):
        return surrogate.gradient(z * s) * s

    z_start = zset.project(x_start / s)
    f_start = f(z_start)
    if method == "pg":
        z, fz, iters, pg = _pg_ascent(f, grad, zset, z_start, tol, max_iter)
        converged = pg <= tol
    else:
        z, iters, converged = _slsqp_epigraph(surrogate, zset, s, z_start, min(max_iter, 1000))
        fz = f(z)
        pg = float(np.max(np.abs(zset.project(z + grad(z)) - z)))
        # a vanishing projected supergradient certifies the maximum of a concave model
        converged = converged or pg <= tol
    if fz < f_start:
        z, fz = z_start, f_start
    return SubproblemResult(feasible.project(z * s), float(fz), iters, float(pg),
                            bool(converged), method)


# -------------------------------------------------------------- KKT


@dataclass(frozen=True)
class KktReport:
    """First-order optimality report.

    ``multipliers`` follow :meth:`FeasibleSet.constraint_gradients` rows
    (caps, floors, receiver budget) and then one entry per user for the
    ``l2 <= 1`` clamp, non-zero only for users in ``on_clamp``.
    """

    stationarity: float
    complementarity: float
    multipliers: np.ndarray
    active: np.ndarray
    gradient: np.ndarray
    on_clamp: np.ndarray
    tol: float

    @property
    def residual(self):
        return max(self.stationarity, self.complementarity)

    @property
    def passed(self):
        return self.residual <= self.tol


def numeric_gradient(func, x, rel_step=1e-6):
    """Central differences with steps relative to each coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel_step * max(abs(x[i]), 1.0)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return g


def kkt_check(alloc, channel, config, feasible, tol=1e-5, active_tol=1e-7, clamp_tol=1e-6):
    """First-order optimality residuals for ``max f`` over ``feasible``.

    The gradient is a central difference of the true asymptotic
    objective.  ``h(l2)`` has unbounded slope just above ``l2 = 1``, so a
    user within ``clamp_tol`` of that point is treated as sitting on the
    constraint ``l2 <= 1``: its entropy is held on the clamped branch for
    the difference quotient and ``grad l2`` joins the active set.
    Nonnegative multipliers come from NNLS on ``grad f = sum mu_i grad g_i``;
    the stationarity residual is the infinity norm of the remainder and
    complementarity the largest ``mu_i |slack_i|``.
    """
    x = as_vector(alloc)
    model = Model.build(channel, config)
    u, b, d, r, lam2, lam_het = model.state(x)
    on_clamp = np.abs(lam2 - 1.0) <= clamp_tol
    gradient = numeric_gradient(lambda y: _objective(y, model, on_clamp), x)
    j2, _ = _lam2_jacobian(x, model, u, r, b)
    grads = np.vstack([feasible.constraint_gradients(), j2])
    slack = np.concatenate([feasible.slacks(x), 1.0 - lam2])
    bound_scale = np.concatenate([np.abs(feasible.upper), np.abs(feasible.lower), [feasible.rhs]])
    finite = np.isfinite(slack[:-len(x)])
    near = slack[:-len(x)] <= active_tol * np.maximum(np.where(finite, bound_scale, 1.0), 1.0)
    active = np.concatenate([finite & near, on_clamp])
    mu = np.zeros(len(slack))
    resid_vec = gradient.copy()
    if np.any(active):
        a_mat = grads[active].T
        mu_act, _ = nnls(a_mat, gradient)
        mu[active] = mu_act
        resid_vec = gradient - a_mat @ mu_act
    comp = float(np.max(mu[active] * np.abs(slack[active]))) if np.any(active) else 0.0
    return KktReport(float(np.max(np.abs(resid_vec))), comp, mu, active, gradient, on_clamp, tol)


# -------------------------------------------------------------- outer loop


@dataclass
class ScaTrace:
    iterates: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    surrogate_objectives: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    regimes: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_unconverged: int = 0
    kkt: KktReport | None = None
    converged: bool = False
    iterations_used: int = 0

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def objective(self):
        return self.objectives[-1]

    @property
    def kkt_residual(self):
        return self.kkt.residual if self.kkt is not None else math.nan


def default_init(feasible, fraction=0.9):
    """Common variance at ``fraction`` of the receiver budget, within caps."""
    v = min(float(np.min(feasible.upper)), fraction * feasible.rhs / float(np.sum(feasible.coeff)))
    return np.maximum(np.full(len(feasible.lower), v), feasible.lower)


def _regimes(x, model):
    _, b, *_ = model.state(x)
    return x > b


def _max_step(x, direction, feasible):
    """Largest ``gamma`` keeping ``x + gamma d`` in the feasible set."""
    gam = math.inf
    up, down = direction > 0.0, direction < 0.0
    if np.any(up):
        gam = min(gam, float(np.min((feasible.upper[up] - x[up]) / direction[up])))
    if np.any(down):
        gam = min(gam, float(np.min((feasible.lower[down] - x[down]) / direction[down])))
    slope = feasible.coeff @ direction
    if slope > 0.0:
        gam = min(gam, (feasible.rhs - feasible.coeff @ x) / slope)
    return max(gam, 1.0)


def _expand_step(x, direction, f_one, model, feasible, max_doublings=20):
    """Double a successful unit step while the true objective keeps rising.

    The surrogate's tangent to ``log2 |(V, b)|`` only lets ``V`` shrink by
    a factor of about ``eta`` per iteration; extrapolating along the same
    direction recovers most of the lost speed without affecting
    monotonicity.
    """
    gam_max = _max_step(x, direction, feasible)
    best = (1.0, x + direction, f_one)
    gam = 1.0
    for _ in range(max_doublings):
        if gam >= gam_max:
            break
        gam = min(2.0 * gam, gam_max)
        x_try = feasible.project(x + gam * direction)
        f_try = _objective(x_try, model)
        if not f_try > best[2]:
            break
        best = (gam, x_try, f_try)
    return best


def run_sca(config, channel, init=None, tau_sca=1e-6, t_max=100, inner_tol=1e-8,
            inner_max_iter=10_000, kkt_tol=1e-5, feasible=None, inner_method="slsqp"):
    """Maximise the asymptotic sum SKR by successive convex approximation.

    Each step solves the surrogate subproblem and then moves towards its
    solution with the largest step in ``{1, 1/2, ...}`` that does not
    decrease the true objective; a full step is extended by doubling
    while the objective keeps rising and the point stays feasible.  Stops when the objective changes by at
    most ``tau_sca`` or after ``t_max`` subproblems.
    """
    if tau_sca <= 0.0 or t_max < 1:
        raise ValueError("need tau_sca > 0 and t_max >= 1")
    feasible = feasible or FeasibleSet.from_config(config, channel)
    model = Model.build(channel, config)
    x = default_init(feasible) if init is None else as_vector(init).copy()
    if not feasible.contains(x):
        raise InfeasibleError("initial allocation is not feasible")
    trace = ScaTrace()
    f = _objective(x, model)
    trace.iterates.append(x.copy())
    trace.objectives.append(f)
    trace.surrogate_objectives.append(f)
    trace.regimes.append(_regimes(x, model))
    for t in range(1, t_max + 1):
        sur = Surrogate.build(x, model)
        sub = solve_subproblem(sur, feasible, x, inner_tol, inner_max_iter, inner_method)
        trace.inner_iterations.append(sub.iterations)
        if not sub.converged:
            trace.inner_unconverged += 1
        direction = sub.x - x
        slope = float(objective_gradient(x, model) @ direction)
        gamma, x_new, f_new = 1.0, sub.x, _objective(sub.x, model)
        while f_new < f + 1e-4 * gamma * max(slope, 0.0) and gamma > 1e-12:
            gamma *= 0.5
            x_new = x + gamma * direction
            f_new = _objective(x_new, model)
        if f_new < f:
            gamma, x_new, f_new = 0.0, x, f
        elif gamma == 1.0:
            gamma, x_new, f_new = _expand_step(x, direction, f_new, model, feasible)
        delta = f_new - f
        x, f = x_new, f_new
        trace.iterates.append(x.copy())
        trace.objectives.append(f)
        trace.surrogate_objectives.append(sub.value)
        trace.step_sizes.append(gamma)
        trace.regimes.append(_regimes(x, model))
        trace.iterations_used = t
        # a stalled step after a failed subproblem is not evidence of a stationary point
        if abs(delta) <= tau_sca and (sub.converged or gamma > 0.0):
            trace.converged = True
            break
    if trace.inner_unconverged:
        warnings.warn(f"{trace.inner_unconverged} subproblem(s) did not converge",
                      RuntimeWarning, stacklevel=2)
    trace.kkt = kkt_check(x, channel, config, feasible, kkt_tol)
    return trace


def start_points(feasible):
    """Deterministic starts: the interior uniform point and the variance floor."""
    return (default_init(feasible), feasible.lower.copy())


def run_sca_multistart(config, channel, inits=None, **kwargs):
    """Run :func:`run_sca` from several starts and keep the best final objective.

    ``inits`` defaults to :func:`start_points`.  Each run is a complete
    SCA with its own trace; ties go to the earlier start.  Returns
    ``(best_trace, all_traces)``.
    """
    feasible = kwargs.pop("feasible", None) or FeasibleSet.from_config(config, channel)
    inits = start_points(feasible) if inits is None else inits
    traces = [run_sca(config, channel, init=x0, feasible=feasible, **kwargs) for x0 in inits]
    best = max(range(len(traces)), key=lambda i: (traces[i].objective, -i))
    return traces[best], traces
