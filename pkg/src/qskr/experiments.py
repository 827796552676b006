"""Sweep harness: scenarios, grid evaluation, CSV and JSON output."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, sca
from .channel import (ChannelState, GeometryParams, TurbulenceParams, assemble_channel,
                      dbm_to_variance, interpolate_profile)
from .errors import ConfigError, QskrError
from .rates import SystemConfig, sum_skr

SCHEMES = ("sca", "qoma", "uqpa", "cih")
CHANNEL_MODES = ("geometric", "profile", "fixed")

# axes each scenario must define; a second entry lists optional extras
SCENARIO_AXES = {
    "sweep_power": (("p_dbm",), ()),
    "sweep_distance": (("distance_m",), ()),
    "sweep_turbulence": (("sigma_x",), ()),
    "heatmap_t_p": (("t", "p_dbm"), ()),
    "heatmap_t_w": (("t", "w"), ()),
    "approx_compare": (("p_dbm",), ("w",)),
    "sum_rate_compare": (("p_dbm",), ()),
}
SCENARIOS = tuple(SCENARIO_AXES)
AXIS_UNITS = {"p_dbm": "dBm", "distance_m": "m", "sigma_x": "", "t": "", "w": "SNU"}

DEFAULT_GRIDS = {
    "sweep_power": (("p_dbm", -100.0, -20.0, 9),),
    "sweep_distance": (("distance_m", 20.0, 260.0, 13),),
    "sweep_turbulence": (("sigma_x", 0.3, 0.6, 4),),
    "heatmap_t_p": (("t", 0.1, 0.9, 9), ("p_dbm", -100.0, -20.0, 9)),
    "heatmap_t_w": (("t", 0.1, 0.9, 9), ("w", 0.01, 0.2, 5)),
    "approx_compare": (("p_dbm", -100.0, -20.0, 17),),
    "sum_rate_compare": (("p_dbm", -100.0, -20.0, 9),),
}


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.name not in AXIS_UNITS:
            raise ConfigError(f"unknown axis {self.name!r}", key=self.name)
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError("axis needs at least one step", key=self.name)
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def unit(self):
        return AXIS_UNITS[self.name]

    def values(self):
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class ChannelSpec:
    """How per-user transmittances are produced at each grid point.

    ``geometric`` places users evenly on ``[d_min, d_max]`` and uses the
    aperture path loss; ``profile`` reads the loss from a ``(d, T)``
    table; ``fixed`` gives every user ``transmittance`` and no
    turbulence.  For the distance sweep the axis value replaces ``d_max``
    and users sit on ``[axis - (d_max - d_min), axis]``.
    """

    mode: str = "geometric"
    d_min: float = 50.0
    d_max: float = 200.0
    d_t: float = 0.1
    d_r: float = 1.0
    wavelength: float = 1550e-9
    sigma_x: float = 0.3
    symbol_rate: float = 1e8
    transmittance: float = 0.5
    profile: tuple = ()

    def __post_init__(self):
        if self.mode not in CHANNEL_MODES:
            raise ConfigError(f"channel mode must be one of {CHANNEL_MODES}", key="mode")
        if self.mode == "profile" and len(self.profile) < 2:
            raise ConfigError("profile mode needs at least two (d, T) points", key="profile")
        if not 0.0 < self.transmittance <= 1.0:
            raise ConfigError("transmittance must lie in (0, 1]", key="transmittance")
        if not 0.0 < self.d_min <= self.d_max:
            raise ConfigError("need 0 < d_min <= d_max", key="d_min")
        if not self.sigma_x > 0.0:
            raise ConfigError("sigma_x must be > 0", key="sigma_x")
        if not self.symbol_rate > 0.0:
            raise ConfigError("symbol_rate must be > 0", key="symbol_rate")
        object.__setattr__(self, "profile", tuple((float(d), float(t)) for d, t in self.profile))


@dataclass(frozen=True)
class SolverSpec:
    tau_sca: float = 1e-8
    t_max: int = 100
    inner_tol: float = 1e-8
    inner_method: str = "slsqp"
    kkt_tol: float = 1e-5

    def __post_init__(self):
        if not self.tau_sca > 0.0 or self.t_max < 1:
            raise ConfigError("need tau_sca > 0 and t_max >= 1", key="tau_sca")
        if self.inner_method not in sca.INNER_METHODS:
            raise ConfigError(f"inner_method must be one of {sca.INNER_METHODS}",
                              key="inner_method")


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: scenario, grid, Monte-Carlo trials, seed and output path.

    ``p_dbm`` fixes the receiver power for scenarios without a power
    axis; ``None`` keeps ``SystemConfig.v_max_bs``.
    """

    scenario: str = "sweep_power"
    grid: tuple = ()
    mc_trials: int = 1
    seed: int = 0
    output_path: str = "results.csv"
    p_dbm: float | None = None
    variant: str = "explicit"
    oma_resource_scaling: bool = True
    clip_negative_users: bool = False
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)

    def __post_init__(self):
        if self.scenario not in SCENARIO_AXES:
            raise ConfigError(f"scenario must be one of {SCENARIOS}", key="scenario")
        grid = self.grid or tuple(Axis(*a) for a in DEFAULT_GRIDS[self.scenario])
        object.__setattr__(self, "grid", tuple(grid))
        required, optional = SCENARIO_AXES[self.scenario]
        names = [a.name for a in self.grid]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate grid axis", key="grid")
        missing = set(required) - set(names)
        extra = set(names) - set(required) - set(optional)
        if missing or extra:
            raise ConfigError(f"{self.scenario} needs axes {required} (optional {optional}), "
                              f"got {tuple(names)}", key="grid")
        if int(self.mc_trials) != self.mc_trials or self.mc_trials < 1:
            raise ConfigError("mc_trials must be >= 1", key="mc_trials")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits", key="seed")
        if self.variant not in ("explicit", "asymptotic"):
            raise ConfigError("variant must be explicit or asymptotic", key="variant")

    def grid_points(self):
        """Cartesian product of the axes, first axis slowest."""
        return [dict(zip((a.name for a in self.grid), vals))
                for vals in itertools.product(*(a.values() for a in self.grid))]

    def columns(self):
        return [a.name for a in self.grid] + value_columns(self.scenario) + ["failed_trials"]


def value_columns(scenario):
    if scenario == "approx_compare":
        return ["chi_explicit", "chi_asym", "chi_rel_gap", "skr_explicit", "skr_asym",
                "chi_explicit_stderr", "chi_asym_stderr"]
    cols = [f"skr_{s}" for s in SCHEMES]
    if scenario == "sum_rate_compare":
        cols += [f"rate_{s}" for s in SCHEMES]
    cols += [f"skr_{s}_stderr" for s in SCHEMES]
    return cols + ["sca_iterations", "sca_kkt_residual"]


# ------------------------------------------------------------ evaluation


def point_setup(spec, config, point, trial):
    """System config and channel for one grid point and Monte-Carlo trial."""
    ch = spec.channel
    k = config.k_users
    changes = {}
    p = point.get("p_dbm", spec.p_dbm)
    if p is not None:
        changes["v_max_bs"] = dbm_to_variance(p, ch.wavelength, ch.symbol_rate)
    if "w" in point:
        changes["w"] = point["w"]
    cfg = config.with_users(k, **changes) if changes else config
    sigma = point.get("sigma_x", ch.sigma_x)
    turb = TurbulenceParams(sigma, seed=spec.seed + trial)
    if "t" in point or ch.mode == "fixed":
        t = point.get("t", ch.transmittance)
        return cfg, ChannelState.from_transmittance(np.full(k, t))
    span = ch.d_max - ch.d_min
    d_far = point.get("distance_m", ch.d_max)
    distances = np.linspace(max(d_far - span, 1e-9), d_far, k)
    if ch.mode == "profile":
        t_loss = interpolate_profile(ch.profile, distances)
        return cfg, assemble_channel(None, turb, t_loss=t_loss)
    geoms = [GeometryParams(d, ch.d_t, ch.d_r, ch.wavelength) for d in distances]
    return cfg, assemble_channel(geoms, turb)


def _total(report, spec):
    return report.total(spec.clip_negative_users)


def evaluate_trial(spec, config, point, trial):
    """Values of one trial at one grid point, keyed by column name."""
    cfg, channel = point_setup(spec, config, point, trial)
    if spec.scenario == "approx_compare":
        alloc = baselines.allocate_uqpa(cfg, channel)
        ex = sum_skr(alloc, channel, cfg, "explicit")
        asym = sum_skr(alloc, channel, cfg, "asymptotic")
        return {"chi_explicit": float(np.sum(ex.chi)), "chi_asym": float(np.sum(asym.chi)),
                "skr_explicit": _total(ex, spec), "skr_asym": _total(asym, spec)}
    out = {}
    s = spec.solver
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        trace, runs = sca.run_sca_multistart(cfg, channel, tau_sca=s.tau_sca, t_max=s.t_max,
                                             inner_tol=s.inner_tol, kkt_tol=s.kkt_tol,
                                             inner_method=s.inner_method)
    reports = {"sca": sum_skr(trace.final, channel, cfg, spec.variant)}
    for kind in ("qoma", "uqpa", "cih"):
        _, reports[kind] = baselines.run_baseline(kind, cfg, channel, spec.variant,
                                                  spec.oma_resource_scaling)
    for name, rep in reports.items():
        out[f"skr_{name}"] = _total(rep, spec)
        if spec.scenario == "sum_rate_compare":
            out[f"rate_{name}"] = float(np.sum(rep.i_low))
    out["sca_iterations"] = float(sum(t.iterations_used for t in runs))
    out["sca_kkt_residual"] = float(max(t.kkt_residual for t in runs))
    out["_sca_converged"] = all(t.converged for t in runs)
    return out


def _stderr(values):
    return float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


def evaluate_point(args):
    """Average all trials at one grid point into a row dict plus run stats."""
    spec, config, index, point = args
    trials, failures, errors = [], 0, []
    for j in range(spec.mc_trials):
        try:
            trials.append(evaluate_trial(spec, config, point, j))
        except (QskrError, ArithmeticError, ValueError) as exc:
            failures += 1
            errors.append(f"trial {j}: {type(exc).__name__}: {exc}")
    row = dict(point)
    stats = {"sca_runs": 0, "sca_converged": 0, "sca_iterations": 0, "kkt_max": 0.0}
    if failures:
        row.update({c: math.nan for c in value_columns(spec.scenario)})
    else:
        keys = [k for k in trials[0] if not k.startswith("_")]
        for k in keys:
            row[k] = float(np.mean([t[k] for t in trials]))
        if spec.scenario == "approx_compare":
            row["chi_rel_gap"] = (row["chi_asym"] - row["chi_explicit"]) / row["chi_explicit"]
            for k in ("chi_explicit", "chi_asym"):
                row[f"{k}_stderr"] = _stderr([t[k] for t in trials])
        else:
            for name in SCHEMES:
                row[f"skr_{name}_stderr"] = _stderr([t[f"skr_{name}"] for t in trials])
            row["sca_kkt_residual"] = max(t["sca_kkt_residual"] for t in trials)
            stats = {"sca_runs": len(trials),
                     "sca_converged": sum(t["_sca_converged"] for t in trials),
                     "sca_iterations": int(sum(t["sca_iterations"] for t in trials)),
                     "kkt_max": row["sca_kkt_residual"]}
    row["failed_trials"] = failures
    return index, row, stats, errors


def format_cell(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return "%.9g" % value


def emit_plotdata(rows, path, columns):
    """Stream ``rows`` (an iterable of dicts) to a CSV file; returns the row count.

    Fields follow ``columns``; floats use 9 significant digits and
    failures print as ``nan``.
    """
    n = 0
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row[c]) for c in columns])
            n += 1
    return n


@dataclass
class RunSummary:
    scenario: str
    output_path: str
    summary_path: str
    rows: int
    failed_points: int
    config_sha256: str
    wall_time_s: float
    sca_runs: int
    sca_converged: int
    sca_iterations: int
    kkt_max: float
    errors: list

    @property
    def ok(self):
        return self.failed_points == 0


def config_digest(text):
    return hashlib.sha256(text.encode()).hexdigest()


def run_experiment(spec, config, threads=1, config_text=None):
    """Evaluate every grid point, write the CSV and a JSON summary next to it.

    Grid points are the unit of parallel work; rows are written in grid
    order whatever the number of workers.  A point whose trials fail is
    written with ``nan`` values and counted in the summary.
    """
    from .config import serialize_config

    if config.k_users < 1:
        raise ConfigError("k_users must be >= 1", key="k_users")
    text = config_text if config_text is not None else serialize_config(config, spec)
    points = spec.grid_points()
    tasks = [(spec, config, i, p) for i, p in enumerate(points)]
    totals = {"failed": 0, "sca_runs": 0, "sca_converged": 0, "sca_iterations": 0,
              "kkt_max": 0.0}
    errors = []
    start = time.perf_counter()

    def rows(results):
        for index, row, stats, errs in results:
            if row["failed_trials"]:
                totals["failed"] += 1
                errors.extend(f"point {index}: {e}" for e in errs)
            for k in ("sca_runs", "sca_converged", "sca_iterations"):
                totals[k] += stats[k]
            totals["kkt_max"] = max(totals["kkt_max"], stats["kkt_max"])
            yield row

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            n = emit_plotdata(rows(pool.map(evaluate_point, tasks)), spec.output_path,
                              spec.columns())
    else:
        n = emit_plotdata(rows(map(evaluate_point, tasks)), spec.output_path, spec.columns())
    wall = time.perf_counter() - start
    summary_path = summary_path_for(spec.output_path)
    summary = RunSummary(spec.scenario, spec.output_path, summary_path, n, totals["failed"],
                         config_digest(text), wall, totals["sca_runs"], totals["sca_converged"],
                         totals["sca_iterations"], totals["kkt_max"], errors)
    with open(summary_path, "w") as fh:
        json.dump({k: v for k, v in vars(summary).items() if k != "summary_path"}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def summary_path_for(output_path):
    stem = output_path[:-4] if output_path.endswith(".csv") else output_path
    return stem + ".json"


def with_overrides(spec, scenario=None, seed=None, output_path=None):
    """Copy of ``spec`` with CLI overrides; a new scenario resets the grid."""
    changes = {}
    if scenario is not None and scenario != spec.scenario:
        changes.update(scenario=scenario, grid=())
    if seed is not None:
        changes["seed"] = seed
    if output_path is not None:
        changes["output_path"] = output_path
    return replace(spec, **changes) if changes else spec
