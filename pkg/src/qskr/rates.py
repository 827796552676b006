"""Per-user key-rate bounds, sum secret key rate, and the sum-rate integral."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from . import quantum_core as qc
from .channel import ChannelState
from .errors import DomainError, NonPhysicalStateError, QskrError

INTERFERENCE_WEIGHTINGS = ("raw", "transmittance")
VARIANTS = ("explicit", "asymptotic")


def _per_user(value, k, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (k,))
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol parameters.

    ``w`` and ``v_max_user`` accept a scalar or one value per user and are
    stored per user.  ``tau_d`` (detector efficiency) is carried for
    completeness; no rate expression uses it.

    ``interference_weighting`` selects the undecoded-user term of the
    legitimate rate bound: ``"raw"`` sums raw variances, while
    ``"transmittance"`` weights each by its channel transmittance.
    ``log_v_prefactor`` adds the extra ``log2(V_a)`` to the first term
    of the asymptotic Holevo bound.
    """

    k_users: int = 16
    eta: float = 0.92
    delta_det_sq: float = 0.16
    w: tuple = 0.1
    v_max_user: tuple = math.inf
    v_max_bs: float = 1000.0
    tau_d: float = 0.6
    interference_weighting: str = "raw"
    log_v_prefactor: bool = False

    def __post_init__(self):
        if int(self.k_users) != self.k_users or self.k_users < 1:
            raise DomainError("k_users must be a positive integer")
        object.__setattr__(self, "k_users", int(self.k_users))
        object.__setattr__(self, "w", _per_user(self.w, self.k_users, "w"))
        object.__setattr__(self, "v_max_user", _per_user(self.v_max_user, self.k_users, "v_max_user"))
        if not 0.0 < self.eta <= 1.0:
            raise DomainError("eta must lie in (0, 1]")
        if self.delta_det_sq < 0.0 or min(self.w) < 0.0:
            raise DomainError("noise variances must be >= 0")
        if min(self.v_max_user) <= 1.0 or not self.v_max_bs > 1.0:
            raise DomainError("variance limits must exceed 1")
        if self.interference_weighting not in INTERFERENCE_WEIGHTINGS:
            raise DomainError(f"interference_weighting must be one of {INTERFERENCE_WEIGHTINGS}")

    @property
    def w_arr(self):
        return np.asarray(self.w)

    @property
    def v_max_user_arr(self):
        return np.asarray(self.v_max_user)

    def with_users(self, k_users, **changes):
        """Copy with a new user count; per-user fields are re-broadcast from user 0."""
        return replace(self, k_users=k_users, w=changes.pop("w", self.w[0]),
                       v_max_user=changes.pop("v_max_user", self.v_max_user[0]), **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PowerAllocation:
    """Modulation variances, one per user, in SNU."""

    v_a: np.ndarray

    def __post_init__(self):
        v = np.array(self.v_a, dtype=float).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "v_a", v)

    def __len__(self):
        return len(self.v_a)


def as_vector(alloc):
    return np.asarray(getattr(alloc, "v_a", alloc), dtype=float)


@dataclass(frozen=True)
class SkrReport:
    i_low: np.ndarray
    chi: np.ndarray
    skr_user: np.ndarray
    variant: str
    clamped: tuple = field(default=())

    @property
    def skr_sum(self):
        return float(np.sum(self.skr_user))

    @property
    def positive_sum(self):
        """Sum over users of ``max(0, skr)``."""
        return float(np.sum(np.maximum(self.skr_user, 0.0)))

    def total(self, clip_negative_users=False):
        return self.positive_sum if clip_negative_users else self.skr_sum


def interference_masks(channel, mode="sic"):
    """Boolean matrix ``M[k, i]``: does user ``i`` interfere with user ``k``.

    ``mode`` is ``"sic"`` (users decoded after ``k``), ``"all"`` (every
    other user) or ``"none"`` (orthogonal access).
    """
    k = channel.k_users
    if mode == "none":
        return np.zeros((k, k), dtype=bool)
    if mode == "all":
        return ~np.eye(k, dtype=bool)
    if mode != "sic":
        raise ValueError(f"unknown interference mode {mode!r}")
    rank = np.empty(k, dtype=int)
    rank[list(channel.decoding_order)] = np.arange(k)
    return rank[None, :] > rank[:, None]


def interference_variance(alloc, channel, user_index):
    """``V_I``: transmittance-weighted variance of users still undecoded."""
    v = as_vector(alloc)
    mask = interference_masks(channel)[user_index]
    return float(np.sum(channel.t[mask] * v[mask]))


def _rate_interference(v, t, mask, weighting):
    weights = t if weighting == "transmittance" else np.ones_like(t)
    return mask.astype(float) @ (weights * v)


def lower_bound_terms(v, t, w, delta_det_sq, s_interf):
    """Vectorised legitimate-rate bound given the rate-interference sums."""
    denom = s_interf + (1.0 - t) * w + delta_det_sq
    if np.any(denom <= 0.0):
        raise ZeroDivisionError("zero noise in the rate bound denominator")
    return np.log2(1.0 + t * v / denom)


def lower_bound(alloc, channel, config, user_index, mode="sic"):
    """Lower bound on user ``user_index``'s achievable key rate, in bits.

    The undecoded-user term follows ``config.interference_weighting``.
    """
    v = as_vector(alloc)
    t = channel.t
    s = _rate_interference(v, t, interference_masks(channel, mode), config.interference_weighting)
    k = user_index
    return float(lower_bound_terms(v[k], t[k], config.w[k], config.delta_det_sq, s[k]))


def _with_user(exc, k):
    msg = f"user {k}: {exc}"
    try:
        new = type(exc)(msg)
    except TypeError:
        new = QskrError(msg)
    new.user_index = k
    return new


def sum_skr(alloc, channel, config, variant="explicit", mode="sic", strict=False):
    """Sum secret key rate ``sum_k eta I_k - chi_k``.

    ``mode`` picks who interferes with whom (see
    :func:`interference_masks`).  Per-user values may be negative; they
    are reported raw.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    v = as_vector(alloc)
    t = channel.t
    if len(v) != channel.k_users or len(v) != config.k_users:
        raise ValueError("allocation, channel and config disagree on the user count")
    mask = interference_masks(channel, mode)
    s = _rate_interference(v, t, mask, config.interference_weighting)
    u = mask.astype(float) @ (t * v)
    w = config.w_arr
    i_low = lower_bound_terms(v, t, w, config.delta_det_sq, s)
    chi = np.empty_like(v)
    clamped = []
    for k in range(len(v)):
        noise = qc.LinkNoise.build(v[k], t[k], w[k], config.delta_det_sq, u[k])
        try:
            if variant == "explicit":
                terms = qc.holevo_terms_explicit(v[k], noise, strict=strict)
            else:
                terms = qc.holevo_terms_asym(v[k], noise, config.log_v_prefactor)
        except QskrError as exc:
            raise _with_user(exc, k) from exc
        chi[k] = terms.chi
        if terms.clamped:
            clamped.append((k, terms.clamped))
    skr = config.eta * i_low - chi
    return SkrReport(i_low, chi, skr, variant, tuple(clamped))


def gaussian_noise_variance(channel, config):
    """Receiver noise of the joint output: detector plus all excess noise."""
    return config.delta_det_sq + float(np.sum((1.0 - channel.t) * config.w_arr))


@dataclass(frozen=True)
class SumRateEstimate:
    bits: float
    stderr: float = 0.0


def _log_gauss(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


# tensor nodes whose weight is below this fraction of the largest are dropped
PRUNE_REL = 1e-20


@functools.lru_cache(maxsize=16)
def _tensor_rule(n, k):
    """Product Gauss-Hermite rule for a standard normal in ``k`` dimensions.

    The mixture integrand is evaluated on a rule centred and scaled to
    the posterior, where it is nearly constant, so nodes with negligible
    weight contribute nothing and are pruned.
    """
    z, w = hermegauss(n)
    log_w1 = np.log(w / np.sqrt(2.0 * np.pi))
    grids = np.meshgrid(*([np.arange(n)] * k), indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    log_w = log_w1[idx].sum(axis=1)
    keep = log_w >= log_w.max() + math.log(PRUNE_REL)
    nodes, log_w = z[idx[keep]], log_w[keep]
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    return nodes, log_w


def sum_rate_integral(alloc, channel, config, method="quadrature", resolution=64,
                      samples=1_000_000, seed=0, inner_nodes=8):
    """Numerical ``H(Y) - H(Y|X)`` for the superposed Gaussian channel, in bits.

    ``quadrature`` uses a tensor Gauss-Hermite rule with ``resolution``
    nodes per dimension (K <= 3).  ``monte_carlo`` samples the received
    signal ``samples`` times and evaluates the mixture density with a
    small inner rule; it returns the estimate with its standard error.
    """
    v = as_vector(alloc)
    a = np.sqrt(channel.t)
    noise_var = gaussian_noise_variance(channel, config)
    k = len(v)
    if np.all(v == 0.0):
        return SumRateEstimate(0.0)
    keep = v > 0.0
    v, a = v[keep], a[keep]
    k = len(v)
    y_var = float(np.sum(a * a * v)) + noise_var
    if method == "quadrature":
        if k > 3:
            raise DomainError("tensor quadrature supports at most 3 active users")
        nodes, log_w = _tensor_rule(resolution, k)
        z, wy = hermegauss(resolution)
        wy = wy / np.sqrt(2.0 * np.pi)
        y = np.sqrt(y_var) * z
        chunk = max(1, 2**22 // len(log_w))
        log_p = _mixture_log_density_batch(y, v, a, noise_var, nodes, log_w, chunk)
        ratio = np.exp(log_p - _log_gauss(y, 0.0, y_var))
        h_y = -np.sum(wy * ratio * log_p)
        # H(Y|X=x) is translation invariant in x, so one y-rule serves every X node
        yc = np.sqrt(noise_var) * z
        h_y_x = -float(np.sum(wy * _log_gauss(yc, 0.0, noise_var)))
        return SumRateEstimate(float(h_y - h_y_x) / math.log(2.0))
    if method == "monte_carlo":
        rng = np.random.default_rng(seed)
        nodes, log_w = _tensor_rule(inner_nodes if k == 1 else (2 if k <= 3 else 1), k)
        xs = rng.normal(size=(samples, k)) * np.sqrt(v)
        ys = xs @ a + rng.normal(size=samples) * np.sqrt(noise_var)
        log_cond = _log_gauss(ys, xs @ a, noise_var)
        log_p = _mixture_log_density_batch(ys, v, a, noise_var, nodes, log_w)
        terms = (log_cond - log_p) / math.log(2.0)
        return SumRateEstimate(float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(samples)))
    raise ValueError(f"unknown method {method!r}")


def _mixture_log_density_batch(y, v, a, noise_var, nodes, log_w, chunk=20000):
    out = np.empty(len(y))
    for start in range(0, len(y), chunk):
        out[start:start + chunk] = _mixture_log_density_vec(y[start:start + chunk], v, a,
                                                            noise_var, nodes, log_w)
    return out


def _mixture_log_density_vec(y, v, a, noise_var, nodes, log_w):
    """``log p(y)`` with p(y) = E_X[N(y; a.X, noise_var)] by a tensor rule.

    The rule for each ``y`` is centred on and scaled to the posterior of
    X given y, which keeps the integrand well resolved at any SNR.  With
    ``x = y mu + L z`` the log-integrand is a quadratic in ``y`` whose
    node-dependent parts are precomputed, so all ``(y, node)`` pairs cost
    one outer product.
    """
    prec = np.diag(1.0 / v) + np.outer(a, a) / noise_var
    cov = np.linalg.inv(prec)
    chol = np.linalg.cholesky(cov)
    k = len(v)
    mu = cov @ a / noise_var
    lz = nodes @ chol.T
    log_q = -0.5 * (k * np.log(2.0 * np.pi) + 2.0 * np.sum(np.log(np.diag(chol)))) \
        - 0.5 * np.sum(nodes**2, axis=1)
    const = -0.5 * (np.sum(np.log(2.0 * np.pi * v)) + np.log(2.0 * np.pi * noise_var))
    quad_y = -0.5 / noise_var - 0.5 * mu @ prec @ mu + (a @ mu) / noise_var
    lin = lz @ a / noise_var - lz @ (prec @ mu)
    node_part = log_w - 0.5 * np.sum((lz @ prec) * lz, axis=1) - log_q
    terms = np.outer(y, lin) + node_part[None, :]
    return const + quad_y * y * y + logsumexp(terms, axis=1)


def large_power_limits(c, channel, config):
    """Limit of each user's rate bound when ``V_a = c * V`` and ``V -> inf``.

    Users with no undecoded interferers grow without bound and get
    ``inf``.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0.0):
        raise DomainError("coefficients must be positive")
    t = channel.t
    mask = interference_masks(channel)
    s = _rate_interference(c, t, mask, config.interference_weighting)
    out = np.full(len(c), math.inf)
    finite = mask.any(axis=1)
    out[finite] = np.log2(1.0 + t[finite] * c[finite] / s[finite])
    return out
