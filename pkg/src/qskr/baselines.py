"""Benchmark allocators: orthogonal access, uniform power, and no-SIC decoding."""

from __future__ import annotations

import enum

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleError
from .rates import PowerAllocation, SkrReport, as_vector, sum_skr
from .sca import FeasibleSet


class BaselineKind(enum.Enum):
    QOMA = "qoma"
    UQPA = "uqpa"
    CIH = "cih"


def _fit_to_budget(v, feasible):
    """Shrink ``v`` uniformly (floored, capped) until the receiver budget holds."""
    lo, hi, a = feasible.lower, feasible.upper, feasible.coeff

    def used(s):
        return a @ np.clip(s * v, lo, hi) - feasible.rhs

    if used(1.0) <= 0.0:
        return np.clip(v, lo, hi)
    s = brentq(used, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    out = np.clip(s * v, lo, hi)
    return out if a @ out <= feasible.rhs else np.clip(np.nextafter(s, 0.0) * v, lo, hi)


def water_fill_caps(total, weights, caps):
    """Split ``total`` proportionally to ``weights`` without exceeding ``caps``.

    Capped users keep their cap; the rest is re-split among the others.
    """
    weights = np.asarray(weights, dtype=float)
    caps = np.asarray(caps, dtype=float)
    out = np.zeros_like(weights)
    free = np.ones(len(weights), dtype=bool)
    remaining = float(total)
    while np.any(free):
        share = remaining * weights[free] / weights[free].sum()
        over = share > caps[free]
        if not np.any(over):
            out[free] = share
            break
        idx = np.flatnonzero(free)[over]
        out[idx] = caps[idx]
        remaining -= caps[idx].sum()
        free[idx] = False
    return out


def allocate_qoma(config, channel):
    """Transmittance-proportional split of the receiver cap.

    ``V_k = V_max^BS T_k / sum T``; per-user caps are water-filled and the
    vector is then shrunk, if needed, to meet the receiver budget.
    """
    feasible = FeasibleSet.from_config(config, channel)
    t = channel.t
    v = water_fill_caps(config.v_max_bs, t, config.v_max_user_arr)
    return PowerAllocation(_fit_to_budget(v, feasible))


def allocate_uqpa(config, channel):
    """The largest common variance that meets every cap and the receiver budget."""
    feasible = FeasibleSet.from_config(config, channel)
    v = min(float(np.min(feasible.upper)), feasible.rhs / float(np.sum(feasible.coeff)))
    if v < 1.0:
        raise InfeasibleError("uniform allocation falls below the vacuum floor")
    return PowerAllocation(np.full(config.k_users, v))


def evaluate_qoma(alloc, channel, config, variant="explicit", oma_resource_scaling=True):
    """SKR with orthogonal resources: no interference, rates shared ``1/K``."""
    rep = sum_skr(alloc, channel, config, variant, mode="none")
    if not oma_resource_scaling:
        return rep
    f = 1.0 / config.k_users
    return SkrReport(rep.i_low * f, rep.chi * f, rep.skr_user * f, rep.variant, rep.clamped)


def evaluate_cih(alloc, channel, config, variant="explicit"):
    """SKR when every other user is treated as interference (no SIC).

    ``alloc=None`` evaluates on the uniform allocation.
    """
    if alloc is None:
        alloc = allocate_uqpa(config, channel)
    return sum_skr(alloc, channel, config, variant, mode="all")


def evaluate_uqpa(alloc, channel, config, variant="explicit"):
    return sum_skr(alloc, channel, config, variant, mode="sic")


def run_baseline(kind, config, channel, variant="explicit", oma_resource_scaling=True):
    """Allocate and evaluate one benchmark; returns ``(allocation, report)``."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.QOMA:
        alloc = allocate_qoma(config, channel)
        return alloc, evaluate_qoma(alloc, channel, config, variant, oma_resource_scaling)
    alloc = allocate_uqpa(config, channel)
    if kind is BaselineKind.UQPA:
        return alloc, evaluate_uqpa(alloc, channel, config, variant)
    return alloc, evaluate_cih(alloc, channel, config, variant)


def is_feasible(alloc, config, channel, tol=1e-9):
    return FeasibleSet.from_config(config, channel).contains(as_vector(alloc), tol)
