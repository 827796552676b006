"""Line-oriented configuration files.

INI syntax (``key = value`` under ``[section]`` headers, ``#`` comments).
Sections and keys, with defaults in parentheses:

``[system]``
    ``k_users`` (16), ``eta`` (0.92), ``delta_det_sq`` (0.16),
    ``w`` (0.1; one value or a comma list, one per user),
    ``v_max_user`` (inf; same), ``v_max_bs`` (1000), ``tau_d`` (0.6),
    ``interference_weighting`` (raw | transmittance),
    ``log_v_prefactor`` (false)
``[channel]``
    ``mode`` (geometric | profile | fixed), ``d_min`` (50), ``d_max`` (200),
    ``d_t`` (0.1), ``d_r`` (1.0), ``wavelength`` (1.55e-6), ``sigma_x`` (0.3),
    ``symbol_rate`` (1e8), ``transmittance`` (0.5),
    ``profile`` (``d:T, d:T, ...``)
``[experiment]``
    ``scenario`` (sweep_power), ``mc_trials`` (1), ``seed`` (0),
    ``output`` (results.csv), ``p_dbm`` (empty: use ``v_max_bs``),
    ``variant`` (explicit | asymptotic), ``oma_resource_scaling`` (true),
    ``clip_negative_users`` (false)
``[solver]``
    ``tau_sca`` (1e-8), ``t_max`` (100), ``inner_tol`` (1e-8),
    ``inner_method`` (slsqp | pg), ``kkt_tol`` (1e-5)
``[grid]``
    one ``axis = start, stop, steps`` line per axis; axis names are
    ``p_dbm``, ``distance_m``, ``sigma_x``, ``t`` and ``w``.  Omitted:
    the scenario's default grid.
"""

from __future__ import annotations

import configparser
import math
import re
import warnings
from dataclasses import fields

from .errors import ConfigError, DomainError
from .experiments import Axis, ChannelSpec, ExperimentSpec, SolverSpec
from .rates import SystemConfig


def _as_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_int(text):
    return int(text.strip())


def _as_float(text):
    return float(text.strip())


def _as_floats(text):
    vals = tuple(float(x) for x in text.split(","))
    return vals[0] if len(vals) == 1 else vals


def _as_opt_float(text):
    return None if text.strip() == "" else float(text)


def _as_str(text):
    return text.strip()


def _as_profile(text):
    pts = []
    for item in text.split(","):
        if item.strip():
            d, t = item.split(":")
            pts.append((float(d), float(t)))
    return tuple(pts)


def _as_axis(text):
    start, stop, steps = (x.strip() for x in text.split(","))
    return float(start), float(stop), int(steps)


# key -> (parser, range check or None, description of the valid range)
SCHEMA = {
    "system": {
        "k_users": (_as_int, lambda v: v >= 1, ">= 1"),
        "eta": (_as_float, lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
        "delta_det_sq": (_as_float, lambda v: v >= 0.0, ">= 0"),
        "w": (_as_floats, lambda v: min(_tup(v)) >= 0.0, ">= 0"),
        "v_max_user": (_as_floats, lambda v: min(_tup(v)) > 1.0, "> 1"),
        "v_max_bs": (_as_float, lambda v: v > 1.0, "> 1"),
        "tau_d": (_as_float, lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
        "interference_weighting": (_as_str, lambda v: v in ("raw", "transmittance"),
                                   "raw or transmittance"),
        "log_v_prefactor": (_as_bool, None, ""),
    },
    "channel": {
        "mode": (_as_str, lambda v: v in ("geometric", "profile", "fixed"),
                 "geometric, profile or fixed"),
        "d_min": (_as_float, lambda v: v > 0.0, "> 0"),
        "d_max": (_as_float, lambda v: v > 0.0, "> 0"),
        "d_t": (_as_float, lambda v: v > 0.0, "> 0"),
        "d_r": (_as_float, lambda v: v > 0.0, "> 0"),
        "wavelength": (_as_float, lambda v: v > 0.0, "> 0"),
        "sigma_x": (_as_float, lambda v: v > 0.0, "> 0"),
        "symbol_rate": (_as_float, lambda v: v > 0.0, "> 0"),
        "transmittance": (_as_float, lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
        "profile": (_as_profile, lambda v: all(0.0 < t <= 1.0 for _, t in v),
                    "transmittances in (0, 1]"),
    },
    "experiment": {
        "scenario": (_as_str, None, ""),
        "mc_trials": (_as_int, lambda v: v >= 1, ">= 1"),
        "seed": (_as_int, lambda v: 0 <= v < 2**64, "in [0, 2^64)"),
        "output": (_as_str, lambda v: v != "", "nonempty"),
        "p_dbm": (_as_opt_float, None, ""),
        "variant": (_as_str, lambda v: v in ("explicit", "asymptotic"), "explicit or asymptotic"),
        "oma_resource_scaling": (_as_bool, None, ""),
        "clip_negative_users": (_as_bool, None, ""),
    },
    "solver": {
        "tau_sca": (_as_float, lambda v: v > 0.0, "> 0"),
        "t_max": (_as_int, lambda v: v >= 1, ">= 1"),
        "inner_tol": (_as_float, lambda v: v > 0.0, "> 0"),
        "inner_method": (_as_str, lambda v: v in ("slsqp", "pg"), "slsqp or pg"),
        "kkt_tol": (_as_float, lambda v: v > 0.0, "> 0"),
    },
}

# keys that must be present when defaults are not pre-filled
REQUIRED = {"system": ("k_users", "eta", "delta_det_sq", "w", "v_max_bs"),
            "experiment": ("scenario",)}

_EXPERIMENT_FIELDS = {"output": "output_path"}


def _tup(v):
    return v if isinstance(v, tuple) else (v,)


def _line_numbers(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    lines, section = {}, None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    entry = re.compile(r"^([^\s#;=:][^=:]*?)\s*[=:]")
    for n, raw in enumerate(text.splitlines(), start=1):
        m = header.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), n)
            continue
        m = entry.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), n)
    return lines


def _unknown(message, key, line, strict):
    if strict:
        raise ConfigError(message, key=key, line=line)
    warnings.warn(str(ConfigError(message, key=key, line=line)), UserWarning, stacklevel=3)


def parse_config_text(text, strict=True, defaults=True):
    """Parse configuration text into ``(SystemConfig, ExperimentSpec)``.

    Unknown sections or keys raise :class:`ConfigError` when ``strict``
    and warn otherwise.  With ``defaults`` every omitted key takes its
    documented default; without it the keys in ``REQUIRED`` must appear.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}",
                          line=getattr(exc, "lineno", None)) from exc
    where = _line_numbers(text)
    values = {s: {} for s in (*SCHEMA, "grid")}
    for section in parser.sections():
        if section not in values:
            _unknown(f"unknown section [{section}]", None, where.get((section, None)), strict)
            continue
        for key, raw in parser.items(section):
            line = where.get((section, key))
            if section == "grid":
                try:
                    values["grid"][key] = _as_axis(raw)
                except ValueError as exc:
                    raise ConfigError("grid axis must be 'start, stop, steps'",
                                      key=key, line=line) from exc
                continue
            if key not in SCHEMA[section]:
                _unknown(f"unknown key in [{section}]", key, line, strict)
                continue
            conv, check, expect = SCHEMA[section][key]
            try:
                val = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"type mismatch: {raw.strip()!r} ({exc})",
                                  key=key, line=line) from exc
            if check is not None and not check(val):
                raise ConfigError(f"value {raw.strip()!r} out of range, expected {expect}",
                                  key=key, line=line)
            values[section][key] = val
    if not defaults:
        for section, keys in REQUIRED.items():
            for key in keys:
                if key not in values[section]:
                    raise ConfigError(f"missing required key in [{section}]", key=key)
    return _build(values, where)


def _build(values, where):
    def build(cls, section, kwargs):
        try:
            return cls(**kwargs)
        except (ConfigError, DomainError, ValueError) as exc:
            key = getattr(exc, "key", None)
            line = where.get((section, key)) if key else None
            raise ConfigError(str(exc).split(" (key")[0], key=key, line=line) from exc

    system = build(SystemConfig, "system", values["system"])
    channel = build(ChannelSpec, "channel", values["channel"])
    solver = build(SolverSpec, "solver", values["solver"])
    grid = tuple(Axis(name, *spec) for name, spec in values["grid"].items())
    exp = {_EXPERIMENT_FIELDS.get(k, k): v for k, v in values["experiment"].items()}
    spec = build(ExperimentSpec, "experiment",
                 dict(exp, grid=grid, channel=channel, solver=solver))
    return system, spec


def parse_config(path, strict=True, defaults=True):
    """Read a configuration file; see :func:`parse_config_text`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config_text(text, strict, defaults)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return "inf" if value == math.inf else repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{_fmt(d)}:{_fmt(t)}" for d, t in value)
        if len(set(value)) == 1:
            return _fmt(value[0])
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def serialize_config(system, spec):
    """Configuration text that :func:`parse_config_text` maps back to the inputs."""
    out = ["[system]"]
    out += [f"{f.name} = {_fmt(getattr(system, f.name))}" for f in fields(system)]
    out += ["", "[channel]"]
    out += [f"{f.name} = {_fmt(getattr(spec.channel, f.name))}" for f in fields(spec.channel)
            if not (f.name == "profile" and not spec.channel.profile)]
    out += ["", "[experiment]"]
    names = {v: k for k, v in _EXPERIMENT_FIELDS.items()}
    for f in fields(spec):
        if f.name in ("grid", "channel", "solver"):
            continue
        out.append(f"{names.get(f.name, f.name)} = {_fmt(getattr(spec, f.name))}")
    out += ["", "[solver]"]
    out += [f"{f.name} = {_fmt(getattr(spec.solver, f.name))}" for f in fields(spec.solver)]
    out += ["", "[grid]"]
    out += [f"{a.name} = {_fmt(a.start)}, {_fmt(a.stop)}, {a.steps}" for a in spec.grid]
    return "\n".join(out) + "\n"
