"""Command line interface.

Subcommands
-----------
models      list the built-in models with defaults
derive      print drift, diffusion, and diffusion-derivative tables for a
            transition-table model
elliptic    solve the mean exit time problem and write field/section files
parabolic   solve the survival problem and write probe curve files
mc          run the Euler-Maruyama simulator from the first probe point
validate    run elliptic + parabolic + mc on one model and cross-check them

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 validation failure.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .expressions import EvaluationError, ExpressionError
from .meshing import BoxDomain
from .models import build_drift, build_diffusion, validate_spd
from .montecarlo import (
    SimulationConfig,
    compare,
    monitoring_bias_allowance,
    simulate_exit,
)
from .solvers import (
    evaluate_field,
    extract_section,
    integrate_survival,
    mean_exit_time,
    survival_function,
)

FMT = "%.12g"


def _fnum(x):
    return FMT % float(x)


def _write_rows(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(" ".join(_fnum(v) for v in row))
            fh.write("\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_outdir(eff):
    outdir = eff["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    _write_json(os.path.join(outdir, "effective_config.json"), eff)
    return outdir


def _load(args):
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_overrides(cfg, args.set or [])
    return cfgmod.effective_config(cfg)


def _spd_dict(report):
    return {
        "min_eigenvalue": report.min_eigenvalue,
        "at_point": list(report.at_point),
        "n_sampled": report.n_sampled,
        "n_nonpositive": report.n_nonpositive,
        "positive_definite": report.positive_definite,
    }


def _solver_dict(report):
    return {
        "iterations": report.iterations,
        "residual": report.residual,
        "converged": report.converged,
    }


def _probe_entries(field, probes):
    return [
        {"point": list(p), "value": float(evaluate_field(field, p))}
        for p in probes
    ]


def _section_path(outdir, prefix, axis, value):
    return os.path.join(outdir, f"{prefix}_axis{axis}_{value:g}.txt")


# ---------------------------------------------------------------------------
# subcommands


def cmd_models(args):
    rows = cfgmod.model_listing()
    if args.json:
        json.dump(rows, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return 0
    for entry in rows:
        print(f"{entry['name']}  ({entry['dimension']}D; variables "
              + ", ".join(entry["variables"]) + ")")
        print("  parameters: "
              + ", ".join(f"{k}={v:g}" for k, v in sorted(entry["parameters"].items())))
        lo = entry["default_domain"]["lower"]
        hi = entry["default_domain"]["upper"]
        box = " x ".join(f"({l:g},{u:g})" for l, u in zip(lo, hi))
        print(f"  default domain: {box}")
        print("  default probe: ("
              + ", ".join(f"{v:g}" for v in entry["default_probe"]) + ")")
        for pname, choices in entry.get("parameter_alternatives", {}).items():
            print(f"  studied values for {pname}: "
                  + ", ".join(f"{c:g}" for c in choices))
    return 0


def cmd_derive(args):
    # The derivation needs only the model section; no domain required.
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_overrides(cfg, args.set or [])
    cfgmod.check_keys({"model": cfg.get("model") or {}})
    model, table = cfgmod.build_model({"model": cfg.get("model") or {}})
    if table is None:
        raise ConfigError(
            f"model {model.name!r} is defined by closed-form coefficients; "
            "derive needs a transition-table model")
    names = table.variables
    d = len(names)
    drift = build_drift(table)
    diff = build_diffusion(table)
    print(f"model: {model.name}  variables: " + ", ".join(names))
    print("drift:")
    for i in range(d):
        print(f"  b{i + 1} = {drift[i]}")
    print("diffusion:")
    for i in range(d):
        for j in range(i, d):
            print(f"  a{i + 1}{j + 1} = {diff[i][j]}")
    print("diffusion derivatives (column-index partials):")
    for i in range(d):
        for j in range(d):
            print(f"  da{i + 1}{j + 1} = {model.da[i][j]}")
    return 0


def cmd_elliptic(args):
    eff = _load(args)
    model, _ = cfgmod.build_model(eff)
    domain = cfgmod.build_domain(eff)
    probes = cfgmod.probe_points(eff)
    outdir = _ensure_outdir(eff)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        field = mean_exit_time(model, domain, eff["k"], tol=eff["elliptic"]["tol"])
    spd = validate_spd(model, domain)

    mesh = field.mesh
    _write_rows(os.path.join(outdir, "field.txt"),
                np.column_stack([mesh.nodes, field.values]))

    section_cfg = eff["elliptic"].get("section")
    section_files = []
    if section_cfg:
        axis = int(section_cfg["axis"])
        value = float(section_cfg["value"])
        rows = extract_section(field, axis, value)
        path = _section_path(outdir, "section", axis, value)
        _write_rows(path, rows)
        section_files.append(os.path.basename(path))

    summary = {
        "model": model.name,
        "k": eff["k"],
        "domain": eff["domain"],
        "probe_values": _probe_entries(field, probes),
        "solver": _solver_dict(field.report),
        "spd": _spd_dict(spd),
        "field_min": float(field.values.min()),
        "field_max": float(field.values.max()),
        "warnings": sorted(str(w.message) for w in caught),
        "section_files": section_files,
    }
    _write_json(os.path.join(outdir, "elliptic.json"), summary)
    for entry in summary["probe_values"]:
        point = "(" + ", ".join(f"{v:g}" for v in entry["point"]) + ")"
        print(f"mean exit time at {point} = {_fnum(entry['value'])}")
    return 0


def _run_parabolic(eff, model, domain, probe):
    par = eff["parabolic"]
    return survival_function(
        model,
        domain,
        eff["k"],
        par.get("eta"),
        par["horizon"],
        probe,
        snapshot_times=tuple(par.get("snapshot_times") or ()),
        stop_below=par.get("stop_below"),
    )


def cmd_parabolic(args):
    eff = _load(args)
    if not eff["parabolic"].get("horizon"):
        raise ConfigError("parabolic.horizon is required")
    model, _ = cfgmod.build_model(eff)
    domain = cfgmod.build_domain(eff)
    probes = cfgmod.probe_points(eff)
    if not probes:
        raise ConfigError("parabolic needs at least one probe point")
    outdir = _ensure_outdir(eff)

    section_cfg = eff["elliptic"].get("section")
    summaries = []
    for idx, probe in enumerate(probes):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curve = _run_parabolic(eff, model, domain, probe)
        name = "curve.txt" if len(probes) == 1 else f"curve_p{idx}.txt"
        _write_rows(os.path.join(outdir, name),
                    np.column_stack([curve.times, curve.values]))
        for t, snap in sorted(curve.snapshots.items()):
            if section_cfg:
                rows = extract_section(snap, int(section_cfg["axis"]),
                                       float(section_cfg["value"]))
                path = _section_path(outdir, f"snapshot_{t:g}",
                                     int(section_cfg["axis"]),
                                     float(section_cfg["value"]))
            else:
                rows = np.column_stack([snap.mesh.nodes, snap.values])
                path = os.path.join(outdir, f"snapshot_{t:g}.txt")
            _write_rows(path, rows)
        integral = integrate_survival(curve)
        summaries.append({
            "probe": list(probe),
            "curve_file": name,
            "eta": curve.eta,
            "horizon": curve.horizon,
            "steps": int(curve.times.size),
            "final_value": float(curve.values[-1]),
            "integral": integral.integral,
            "tail_indicator": integral.tail_indicator,
            "warnings": sorted(str(w.message) for w in caught),
        })
        print(f"survival at t={_fnum(curve.times[-1])} from probe "
              + "(" + ", ".join(f"{v:g}" for v in probe) + ")"
              + f" = {_fnum(curve.values[-1])}")
    _write_json(os.path.join(outdir, "parabolic.json"), {
        "model": model.name,
        "k": eff["k"],
        "domain": eff["domain"],
        "curves": summaries,
    })
    return 0


def _mc_config(eff):
    mc = eff["mc"]
    return SimulationConfig(
        dt=float(mc["dt"]),
        n_paths=int(mc["paths"]),
        seed=int(mc["seed"]),
        time_cap=float(mc["time_cap"]),
    )


def _stats_dict(stats):
    out = {
        "mean": stats.mean,
        "standard_error": stats.standard_error,
        "n_paths": stats.n_paths,
        "n_exited": stats.n_exited,
        "n_censored": stats.n_censored,
        "n_aborted": stats.n_aborted,
        "seed": stats.seed,
        "dt": stats.dt,
    }
    if stats.survival_times is not None:
        out["survival"] = {
            "times": [float(t) for t in stats.survival_times],
            "values": [float(v) for v in stats.survival_values],
        }
    return out


def cmd_mc(args):
    eff = _load(args)
    mc = eff["mc"]
    if not mc.get("dt") or not mc.get("time_cap"):
        raise ConfigError("mc.dt and mc.time_cap are required")
    model, _ = cfgmod.build_model(eff)
    domain = cfgmod.build_domain(eff)
    probes = cfgmod.probe_points(eff)
    if not probes:
        raise ConfigError("mc needs a probe point to start from")
    outdir = _ensure_outdir(eff)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stats = simulate_exit(
            model, domain, probes[0], _mc_config(eff),
            survival_times=mc.get("survival_times") or None,
            workers=int(mc.get("workers") or 1),
        )
    summary = {
        "model": model.name,
        "start": list(probes[0]),
        "workers": int(mc.get("workers") or 1),
        "warnings": sorted(str(w.message) for w in caught),
    }
    summary.update(_stats_dict(stats))
    _write_json(os.path.join(outdir, "mc.json"), summary)
    if stats.survival_times is not None:
        _write_rows(os.path.join(outdir, "mc_survival.txt"),
                    np.column_stack([stats.survival_times, stats.survival_values]))
    se = "nan" if stats.standard_error != stats.standard_error \
        else _fnum(stats.standard_error)
    print(f"exit time mean = {_fnum(stats.mean)}  se = {se}  "
          f"exited {stats.n_exited}/{stats.n_paths}")
    return 0


def cmd_validate(args):
    eff = _load(args)
    for key, msg in (("horizon", "parabolic.horizon"),):
        if not eff["parabolic"].get(key):
            raise ConfigError(f"validate requires {msg}")
    if not eff["mc"].get("dt") or not eff["mc"].get("time_cap"):
        raise ConfigError("validate requires mc.dt and mc.time_cap")
    model, _ = cfgmod.build_model(eff)
    domain = cfgmod.build_domain(eff)
    probes = cfgmod.probe_points(eff)
    if not probes:
        raise ConfigError("validate needs a probe point")
    probe = probes[0]
    outdir = _ensure_outdir(eff)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        field = mean_exit_time(model, domain, eff["k"], tol=eff["elliptic"]["tol"])
        curve = _run_parabolic(eff, model, domain, probe)
        stats = simulate_exit(model, domain, probe, _mc_config(eff),
                              workers=int(eff["mc"].get("workers") or 1))

    fem_value = float(evaluate_field(field, probe))
    allowance = monitoring_bias_allowance(model, field, stats.dt)
    report = compare(fem_value, stats, bias_allowance=allowance)
    integral = integrate_survival(curve)
    total = integral.integral + integral.tail_indicator
    gap = abs(total - fem_value) / abs(fem_value)

    values = curve.values
    monotone = bool(np.all(np.diff(values) <= 1e-8))
    in_range = bool(np.all(values >= -1e-8) and np.all(values <= 1.0 + 1e-8))
    nonneg = bool(field.values.min() >= -1e-10 * max(field.values.max(), 1e-300))

    checks = {
        "mc_within_tolerance": bool(report.passed),
        "integral_matches_elliptic": bool(gap <= 0.10),
        "survival_monotone": monotone,
        "survival_in_range": in_range,
        "field_nonnegative": nonneg,
    }
    out = {
        "model": model.name,
        "probe": list(probe),
        "seed": stats.seed,
        "elliptic": {
            "value": fem_value,
            "solver": _solver_dict(field.report),
        },
        "parabolic": {
            "eta": curve.eta,
            "horizon": curve.horizon,
            "final_value": float(values[-1]),
            "integral": integral.integral,
            "tail_indicator": integral.tail_indicator,
            "integral_relative_gap": gap,
        },
        "mc": _stats_dict(stats),
        "comparison": {
            "fem_value": report.fem_value,
            "mc_mean": report.mc_mean,
            "standard_error": report.standard_error,
            "z": report.z,
            "z_threshold": report.z_threshold,
            "bias_allowance": report.bias_allowance,
            "passed": report.passed,
        },
        "checks": checks,
        "passed": all(checks.values()),
        "warnings": sorted(str(w.message) for w in caught),
    }
    _write_json(os.path.join(outdir, "validation.json"), out)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if out["passed"] else 3


# ---------------------------------------------------------------------------


def _add_config_arguments(sub):
    sub.add_argument("config", help="path to a JSON run configuration")
    sub.add_argument("--set", action="append", metavar="PATH=VALUE",
                     help="override a configuration leaf (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="firstexit",
        description="Exit-time solvers for stochastic dynamical models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("models", help="list built-in models")
    p.add_argument("--json", action="store_true", help="emit JSON")
    p.set_defaults(func=cmd_models)

    for name, func, help_text in (
        ("derive", cmd_derive, "print drift/diffusion tables for a model"),
        ("elliptic", cmd_elliptic, "solve the mean exit time problem"),
        ("parabolic", cmd_parabolic, "solve the survival problem"),
        ("mc", cmd_mc, "simulate exits with Euler-Maruyama"),
        ("validate", cmd_validate, "cross-check elliptic, parabolic, and mc"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_arguments(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ExpressionError, EvaluationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
