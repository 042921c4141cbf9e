"""Run-configuration handling for the command line tools.

A run configuration is a single JSON object.  Every leaf can be overridden
from the command line with ``--set path=value`` using dotted paths, e.g.
``--set mc.paths=50000`` or ``--set model.overrides.alpha=1e-4``.  The
filled-in ("effective") configuration is written next to the outputs so a
run can be reproduced exactly from its output directory.

Schema by example::

    {
      "model": {
        "builtin": "tumor",            # one of the built-in names, or null
        "overrides": {"beta1": 0.5},   # parameter overrides for a built-in
        # -- or a custom model --
        "name": "mymodel",
        "variables": ["x", "y"],
        "parameters": {"a": 1.0},
        "drift": ["a - x", "x*y"],
        "diffusion": [["x + a", "0"], ["y + a"]],   # upper triangle, by rows
        # -- or a transition table --
        "table": {"changes": [[1, 0], [-1, 0]], "rates": ["a", "x*y"]}
      },
      "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
      "k": 40,
      "probes": [[0.5, 0.5]],
      "elliptic": {"enabled": true, "tol": 1e-10,
                   "section": {"axis": 0, "value": 0.5}},
      "parabolic": {"enabled": false, "eta": 0.01, "horizon": 0.6,
                    "snapshot_times": [], "stop_below": null},
      "mc": {"enabled": false, "dt": 1e-5, "paths": 20000, "seed": 12345,
             "time_cap": 1.0, "workers": 1, "survival_times": []},
      "output": {"directory": "out", "formats": ["text", "json"]}
    }

Exactly one of ``builtin``, ``drift``/``diffusion``, or ``table`` selects the
model.  Probes must lie strictly inside the domain and match its dimension.
"""

import copy
import json

from .expressions import ExpressionError
from .meshing import BoxDomain
from .models import (
    TransitionTable,
    builtin_model,
    builtin_names,
    builtin_parameters,
    model_from_expressions,
    model_from_table,
    rumor_table,
    tumor_table,
)


class ConfigError(Exception):
    """Raised for malformed, inconsistent, or incomplete run configurations."""


DEFAULTS = {
    "model": {"builtin": None, "overrides": {}},
    "domain": {"lower": None, "upper": None},
    "k": 40,
    "probes": [],
    "elliptic": {"enabled": True, "tol": 1e-10, "section": None},
    "parabolic": {
        "enabled": False,
        "eta": None,
        "horizon": None,
        "snapshot_times": [],
        "stop_below": None,
    },
    "mc": {
        "enabled": False,
        "dt": None,
        "paths": 20000,
        "seed": 12345,
        "time_cap": None,
        "workers": 1,
        "survival_times": [],
    },
    "output": {"directory": "out", "formats": ["text", "json"]},
}

# Reference boxes and start points used by ``models`` listings and as
# fallbacks when a config names a built-in without giving a domain.
DEFAULT_DOMAINS = {
    "rumor": ([0.7, 0.1], [0.9, 0.3]),
    "gonorrhea": ([8500.0, 500.0], [9500.0, 1500.0]),
    "sir": ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
    "tumor": ([0.0, 0.0, 0.0], [4.0, 2.0, 2.0]),
}
DEFAULT_PROBES = {
    "rumor": [0.8, 0.2],
    "gonorrhea": [9000.0, 1000.0],
    "sir": [0.8, 0.1, 0.1],
    "tumor": [3.0, 1.5, 1.0],
}
# Parameter values studied side by side in the model literature; shown by
# the ``models`` listing so the alternatives are discoverable.
PARAMETER_ALTERNATIVES = {"gonorrhea": {"alpha": [1e-4, 1.5e-5]}}


def load_config(path):
    """Read a JSON run configuration from ``path``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def parse_override(spec):
    """Split a ``path=value`` override; the value is parsed as JSON if possible."""
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} is not of the form path=value")
    path, raw = spec.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {spec!r} has an empty path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings may be given unquoted
    return keys, value


def apply_overrides(cfg, overrides):
    """Apply ``path=value`` strings to a configuration dict, in order."""
    for spec in overrides:
        keys, value = parse_override(spec)
        node = cfg
        for key in keys[:-1]:
            nxt = node.get(key)
            if nxt is None:
                nxt = {}
                node[key] = nxt
            elif not isinstance(nxt, dict):
                raise ConfigError(
                    f"override {spec!r}: {key!r} is not an object")
            node = nxt
        node[keys[-1]] = value
    return cfg


def _merge(base, patch):
    out = copy.deepcopy(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _as_point(raw, what):
    try:
        point = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers, got {raw!r}")
    return point


def effective_config(cfg):
    """Merge ``cfg`` over the defaults and fill model-derived fallbacks.

    Returns a plain dict ready for :func:`build_model` / :func:`build_domain`;
    raises ConfigError if the result is incomplete or inconsistent.
    """
    eff = _merge(DEFAULTS, cfg)
    model_cfg = eff.get("model") or {}
    name = model_cfg.get("builtin")
    if name is not None:
        if name not in builtin_names():
            raise ConfigError(
                f"unknown built-in model {name!r}; choices: "
                + ", ".join(builtin_names()))
        if eff["domain"].get("lower") is None:
            lo, hi = DEFAULT_DOMAINS[name]
            eff["domain"] = {"lower": list(lo), "upper": list(hi)}
        if not eff["probes"]:
            eff["probes"] = [list(DEFAULT_PROBES[name])]
    _validate(eff)
    return eff


_ALLOWED_KEYS = {
    None: set(DEFAULTS),
    "model": {"builtin", "overrides", "name", "variables", "parameters",
              "drift", "diffusion", "table"},
    "domain": {"lower", "upper"},
    "elliptic": set(DEFAULTS["elliptic"]),
    "parabolic": set(DEFAULTS["parabolic"]),
    "mc": set(DEFAULTS["mc"]),
    "output": set(DEFAULTS["output"]),
}


def check_keys(cfg):
    """Reject unknown keys so mistyped overrides fail loudly."""
    for section, allowed in _ALLOWED_KEYS.items():
        node = cfg if section is None else cfg.get(section)
        if not isinstance(node, dict):
            continue
        unknown = sorted(set(node) - allowed)
        if unknown:
            where = "config" if section is None else f"config section {section!r}"
            raise ConfigError("unknown key(s) in %s: %s"
                              % (where, ", ".join(map(repr, unknown))))


def _validate(eff):
    check_keys(eff)
    domain = eff.get("domain") or {}
    if domain.get("lower") is None or domain.get("upper") is None:
        raise ConfigError("domain.lower and domain.upper are required")
    lower = _as_point(domain["lower"], "domain.lower")
    upper = _as_point(domain["upper"], "domain.upper")
    if len(lower) != len(upper):
        raise ConfigError("domain.lower and domain.upper differ in length")
    if len(lower) not in (2, 3):
        raise ConfigError("only 2- and 3-dimensional domains are supported")
    if any(u <= l for l, u in zip(lower, upper)):
        raise ConfigError("domain.upper must exceed domain.lower componentwise")

    k = eff.get("k")
    if not isinstance(k, int) or k < 2:
        raise ConfigError("k must be an integer >= 2")

    for probe in eff.get("probes", []):
        point = _as_point(probe, "probe")
        if len(point) != len(lower):
            raise ConfigError(
                f"probe {probe!r} does not match the domain dimension")
        if any(not (l < p < u) for l, p, u in zip(lower, point, upper)):
            raise ConfigError(f"probe {probe!r} is not strictly inside the domain")

    par = eff["parabolic"]
    if par.get("horizon") is not None:
        if par["horizon"] <= 0:
            raise ConfigError("parabolic.horizon must be positive")
        if par.get("eta") is not None and not 0 < par["eta"] <= par["horizon"]:
            raise ConfigError("parabolic.eta must lie in (0, horizon]")

    mc = eff["mc"]
    if mc.get("dt") is not None:
        if mc["dt"] <= 0:
            raise ConfigError("mc.dt must be positive")
        if not mc.get("time_cap") or mc["time_cap"] <= 0:
            raise ConfigError("mc.time_cap must be positive")
        if not isinstance(mc.get("paths"), int) or mc["paths"] < 1:
            raise ConfigError("mc.paths must be a positive integer")
        if not eff.get("probes"):
            raise ConfigError("mc requires at least one probe point")


def build_domain(eff):
    d = eff["domain"]
    return BoxDomain(tuple(d["lower"]), tuple(d["upper"]))


def _custom_table(model_cfg):
    variables = model_cfg.get("variables")
    if not variables:
        raise ConfigError("a table model needs model.variables")
    table_cfg = model_cfg["table"]
    changes = table_cfg.get("changes")
    rates = table_cfg.get("rates")
    if not changes or not rates or len(changes) != len(rates):
        raise ConfigError("model.table needs matching changes and rates lists")
    try:
        return TransitionTable(
            tuple(variables),
            [tuple(float(c) for c in ch) for ch in changes],
            list(rates),
            dict(model_cfg.get("parameters") or {}),
        )
    except (ExpressionError, ValueError) as exc:
        raise ConfigError(f"invalid transition table: {exc}") from exc


def build_model(eff):
    """Construct the model selected by the configuration.

    Returns ``(model, table)`` where ``table`` is the transition table the
    model was built from, or None for models given directly by coefficient
    expressions.
    """
    model_cfg = eff.get("model") or {}
    name = model_cfg.get("builtin")
    overrides = model_cfg.get("overrides") or {}
    if name is not None:
        try:
            model = builtin_model(name, overrides)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        table = None
        params = dict(builtin_parameters(name))
        params.update(overrides)
        if name == "rumor":
            table = rumor_table(params)
        elif name == "tumor":
            table = tumor_table(params)
        return model, table

    if "table" in model_cfg:
        table = _custom_table(model_cfg)
        try:
            return model_from_table(model_cfg.get("name", "custom"), table), table
        except (ExpressionError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    if "drift" in model_cfg or "diffusion" in model_cfg:
        variables = model_cfg.get("variables")
        drift = model_cfg.get("drift")
        diffusion = model_cfg.get("diffusion")
        if not variables or not drift or not diffusion:
            raise ConfigError(
                "a custom model needs model.variables, model.drift, and "
                "model.diffusion (upper triangle rows)")
        try:
            model = model_from_expressions(
                model_cfg.get("name", "custom"),
                tuple(variables),
                list(drift),
                [list(row) for row in diffusion],
                parameters=dict(model_cfg.get("parameters") or {}),
            )
        except (ExpressionError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return model, None

    raise ConfigError(
        "model must name a builtin, give drift/diffusion expressions, "
        "or give a transition table")


def model_listing():
    """Describe the built-in models (for the ``models`` subcommand)."""
    rows = []
    for name in builtin_names():
        params = builtin_parameters(name)
        lo, hi = DEFAULT_DOMAINS[name]
        entry = {
            "name": name,
            "dimension": len(lo),
            "variables": list(builtin_model(name).variables),
            "parameters": dict(params),
            "default_domain": {"lower": list(lo), "upper": list(hi)},
            "default_probe": list(DEFAULT_PROBES[name]),
        }
        if name in PARAMETER_ALTERNATIVES:
            entry["parameter_alternatives"] = {
                k: list(v) for k, v in PARAMETER_ALTERNATIVES[name].items()}
        rows.append(entry)
    return rows


def probe_points(eff):
    return [tuple(float(v) for v in p) for p in eff.get("probes", [])]
