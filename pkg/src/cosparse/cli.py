"""Command-line front end: recovery runs, projections, RIP estimation,
guarantee reports, and experiment sweeps with file outputs.

Config resolution: built-in defaults, then the --config key=value file,
then explicit command-line flags. Every command echoes its full effective
configuration so a run can be reproduced from its outputs alone. Exit
codes: 0 success, 1 usage or I/O error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .experiments import (default_grid_values, phantom_experiment,
                          phase_diagram, save_image_csv, save_pgm,
                          save_phase_csv, save_report_json)
from .operators import (load_operator_csv, make_1d_dif, make_2d_dif,
                        make_fused_lasso, make_identity,
                        make_random_tight_frame)
from .projections import ProjectionScheme, default_scheme, project
from .solvers import (DivergenceError, MeasurementProblem, SolverConfig,
                      VARIANTS, solve)
from .theory import (acosamp_report, aiht_delta_boundary, aiht_report,
                     asp_report, delta_root_acosamp, delta_root_asp,
                     omega_rip_exhaustive, omega_rip_sampled)


class CliError(Exception):
    """Usage or I/O problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the scripting contract reserves 2
    # for solver non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def _progress(msg):
    sys.stderr.write(msg + "\n")
    sys.stderr.flush()


# ---------------------------------------------------------------------------
# config plumbing: (name, parser, default) tables per command

def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean, got %r" % text)


def _parse_float_list(text):
    vals = [float(tok) for tok in str(text).split(",") if tok.strip()]
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


def _parse_size(text):
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise ValueError("expected HxW, got %r" % text)
    h, w = int(parts[0]), int(parts[1])
    if h < 1 or w < 1:
        raise ValueError("size must be positive")
    return h, w


def _parse_a_fraction(text):
    if str(text).strip().lower() == "auto":
        return "auto"
    return float(text)


def _identity(text):
    return text


_COMMON_PARAMS = [
    ("config", _identity, None),
    ("seed", int, 0),
    ("workers", int, None),
    ("out", _identity, "."),
]

_OPERATOR_PARAMS = [
    ("operator", _identity, "dif-1d"),
    ("d", int, None),
    ("p", int, None),
    ("grid", _parse_size, None),
    ("operator_file", _identity, None),
    ("operator_seed", int, 0),
]

_SOLVER_PARAMS = [
    ("variant", _identity, "asp"),
    ("step_rule", _identity, "adaptive"),
    ("mu", float, 1.0),
    ("a_fraction", _parse_a_fraction, 1.0),
    ("lam", float, 1e3),
    ("max_iters", int, 500),
    ("stop", _identity, "default"),
    ("residual_tol", float, 1e-6),
    ("change_tol", float, 1e-6),
    ("scheme", _identity, "auto"),
    ("ls_tol", float, 1e-8),
    ("ls_max_iter", int, None),
]

_COMMAND_PARAMS = {
    "recover": _COMMON_PARAMS + _OPERATOR_PARAMS + _SOLVER_PARAMS + [
        ("matrix", _identity, None),
        ("measurements", _identity, None),
        ("l", int, None),
    ],
    "project": _COMMON_PARAMS + _OPERATOR_PARAMS + [
        ("vector", _identity, None),
        ("l", int, None),
        ("scheme", _identity, "auto"),
    ],
    "phase-diagram": _COMMON_PARAMS + _OPERATOR_PARAMS + _SOLVER_PARAMS + [
        ("grid_points", int, 10),
        ("delta_values", _parse_float_list, None),
        ("rho_values", _parse_float_list, None),
        ("trials", int, 10),
        ("success_tol", float, 1e-6),
        ("noise_sigma", float, 0.0),
        ("pgm", _parse_bool, False),
    ],
    "theory": _COMMON_PARAMS + [
        ("algorithm", _identity, "all"),
        ("sweep", _parse_bool, False),
        ("c_l", float, 1.0),
        ("c_2lp", float, None),
        ("c_values", _parse_float_list, [1.0, 1.05, 1.1]),
        ("sigma_sq", float, 5.0),
        ("eta", float, 100.0),
        ("gamma", float, None),
        ("mu", float, None),
        ("delta_2lp", float, None),
        ("delta_3l2p", float, None),
        ("delta_4l3p", float, None),
        ("x_norm", float, None),
        ("y_norm", float, None),
        ("e_norm", float, None),
    ],
    "rip": _COMMON_PARAMS + _OPERATOR_PARAMS + [
        ("matrix", _identity, None),
        ("m", int, None),
        ("l", int, None),
        ("mode", _identity, "exhaustive"),
        ("trials", int, 200),
        ("corank", _parse_bool, False),
    ],
    "phantom": _COMMON_PARAMS + _SOLVER_PARAMS + [
        ("size", _parse_size, (64, 64)),
        ("lines", int, 10),
        ("snr_db", float, None),
        ("l", int, None),
    ],
}

# flags every command accepts even though defaults differ per command
_FLAG_HELP = {
    "config": "key=value file with defaults for any flag",
    "seed": "base random seed",
    "workers": "parallel workers (default: COSPARSE_WORKERS or 1)",
    "out": "output directory",
}


def _load_config_file(path):
    data = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise CliError("cannot read config file %s: %s" % (path, exc))
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError("config %s line %d: expected key=value"
                               % (path, lineno))
            key, val = line.split("=", 1)
            data[key.strip().replace("-", "_")] = val.strip()
    return data


def _resolve(ns, command):
    """Merge defaults, config file, and explicit flags into one dict."""
    params = _COMMAND_PARAMS[command]
    file_cfg = {}
    config_path = getattr(ns, "config", None)
    if config_path:
        file_cfg = _load_config_file(config_path)
        known = {name for name, _, _ in params}
        for key in file_cfg:
            if key not in known:
                raise CliError("config key %r is not recognized by %s"
                               % (key, command))
    resolved = {}
    for name, parse, default in params:
        cli_val = getattr(ns, name, None)
        if cli_val is not None:
            resolved[name] = cli_val
        elif name in file_cfg:
            try:
                resolved[name] = parse(file_cfg[name])
            except ValueError as exc:
                raise CliError("config value %s=%s: %s"
                               % (name, file_cfg[name], exc))
        else:
            resolved[name] = default
    if resolved.get("workers") is None:
        env = os.environ.get("COSPARSE_WORKERS")
        resolved["workers"] = int(env) if env else 1
    return resolved


def _echo_dict(command, cfg):
    echo = {"command": command}
    for key, val in cfg.items():
        if key == "config":
            continue
        if isinstance(val, tuple):
            val = "x".join(str(v) for v in val)
        elif isinstance(val, list):
            val = ",".join("%.17g" % v for v in val)
        echo[key] = val
    return echo


def _print_echo(echo):
    for key in sorted(echo):
        val = echo[key]
        if isinstance(val, float):
            val = "%.17g" % val
        print("%s = %s" % (key, val))


def _out_path(cfg, name):
    out_dir = cfg.get("out") or "."
    if out_dir != "." and not os.path.isdir(out_dir):
        os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


# ---------------------------------------------------------------------------
# shared input builders

def _load_matrix(path, what="matrix"):
    if not path:
        raise CliError("missing required %s file" % what)
    try:
        arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except OSError as exc:
        raise CliError("cannot read %s file %s: %s" % (what, path, exc))
    except ValueError as exc:
        raise CliError("malformed CSV in %s: %s" % (path, exc))
    return arr


def _load_vector(path, what="vector"):
    return _load_matrix(path, what).ravel()


def _save_vector(path, vec):
    with open(path, "w") as fh:
        for v in np.asarray(vec, dtype=float).ravel():
            fh.write("%.17g\n" % v)


def _build_operator(cfg, d_hint=None):
    kind = cfg["operator"]
    d = cfg.get("d") or d_hint
    if kind == "file" or cfg.get("operator_file"):
        omega = load_operator_csv(cfg["operator_file"])
    elif kind == "identity":
        omega = make_identity(_require_d(d))
    elif kind == "dif-1d":
        omega = make_1d_dif(_require_d(d))
    elif kind == "fused-lasso":
        omega = make_fused_lasso(_require_d(d))
    elif kind == "dif-2d":
        if not cfg.get("grid"):
            raise CliError("operator dif-2d requires --grid HxW")
        h, w = cfg["grid"]
        omega = make_2d_dif(h, w)
    elif kind == "tight-frame":
        if not cfg.get("p") or not d:
            raise CliError("operator tight-frame requires --p and --d")
        omega = make_random_tight_frame(cfg["p"], d, seed=cfg["operator_seed"])
    else:
        raise CliError("unknown operator kind %r" % kind)
    if d_hint is not None and omega.d != d_hint:
        raise CliError("operator dimension %d does not match data dimension %d"
                       % (omega.d, d_hint))
    return omega


def _require_d(d):
    if not d:
        raise CliError("this operator requires --d (or data to infer it from)")
    return int(d)


def _scheme_from_name(name):
    if name in (None, "auto"):
        return None
    try:
        return ProjectionScheme(name)
    except ValueError as exc:
        raise CliError(str(exc))


def _solver_config(cfg):
    return SolverConfig(
        variant=cfg["variant"], step_rule=cfg["step_rule"], mu=cfg["mu"],
        a_fraction=cfg["a_fraction"], lam=cfg["lam"],
        max_iters=cfg["max_iters"], stop=cfg["stop"],
        residual_tol=cfg["residual_tol"], change_tol=cfg["change_tol"],
        scheme=_scheme_from_name(cfg["scheme"]), ls_tol=cfg["ls_tol"],
        ls_max_iter=cfg["ls_max_iter"])


# ---------------------------------------------------------------------------
# commands

def cmd_recover(cfg):
    if cfg["l"] is None:
        raise CliError("recover requires --l (target cosparsity)")
    if cfg["variant"] not in VARIANTS:
        raise CliError("unknown variant %r (choose from %s)"
                       % (cfg["variant"], ", ".join(VARIANTS)))
    M = _load_matrix(cfg["matrix"], "measurement matrix")
    y = _load_vector(cfg["measurements"], "measurements")
    if y.shape[0] != M.shape[0]:
        raise CliError("measurement length %d does not match matrix rows %d"
                       % (y.shape[0], M.shape[0]))
    omega = _build_operator(cfg, d_hint=M.shape[1])
    solver_cfg = _solver_config(cfg)
    echo = _echo_dict("recover", cfg)
    _progress("recover: %s, d=%d, l=%d" % (cfg["variant"], omega.d, cfg["l"]))
    result = solve(MeasurementProblem(M=M, y=y), omega, cfg["l"], solver_cfg)
    x_path = _out_path(cfg, "x_hat.csv")
    _save_vector(x_path, result.x_hat)
    record = {
        "config": echo,
        "converged": bool(result.converged),
        "iterations": result.iterations,
        "residual": result.residual_history[-1],
        "residual_history": list(result.residual_history),
        "cosupport_size": int(len(result.cosupport)),
        "warnings": list(result.warnings),
        "x_hat_file": os.path.basename(x_path),
    }
    save_report_json(record, _out_path(cfg, "recover.json"))
    _print_echo(echo)
    print("converged = %s" % ("true" if result.converged else "false"))
    print("iterations = %d" % result.iterations)
    print("residual = %.17g" % result.residual_history[-1])
    return 0 if result.converged else 2


def cmd_project(cfg):
    if cfg["l"] is None:
        raise CliError("project requires --l (target cosparsity)")
    z = _load_vector(cfg["vector"], "input vector")
    omega = _build_operator(cfg, d_hint=z.shape[0])
    scheme = _scheme_from_name(cfg["scheme"]) or default_scheme(omega.kind)
    try:
        cosupport = scheme.select(omega, z, cfg["l"])
    except ValueError as exc:
        raise CliError(str(exc))
    projected = project(omega, cosupport, z)
    error = float(np.linalg.norm(z - projected))
    echo = _echo_dict("project", cfg)
    echo["scheme"] = scheme.kind
    _save_vector(_out_path(cfg, "projected.csv"), projected)
    record = {
        "config": echo,
        "projection_error": error,
        "cosupport_size": int(len(cosupport)),
    }
    save_report_json(record, _out_path(cfg, "project.json"))
    _print_echo(echo)
    print("projection_error = %.17g" % error)
    return 0


def cmd_phase_diagram(cfg):
    if cfg["operator"] == "tight-frame" and not (cfg.get("p") and cfg.get("d")):
        cfg = dict(cfg, d=cfg.get("d") or 120, p=cfg.get("p") or 144)
    omega = _build_operator(cfg)
    solver_cfg = _solver_config(cfg)
    if solver_cfg.variant not in VARIANTS:
        raise CliError("unknown variant %r" % solver_cfg.variant)
    deltas = cfg["delta_values"] or default_grid_values(cfg["grid_points"])
    rhos = cfg["rho_values"] or default_grid_values(cfg["grid_points"])
    echo = _echo_dict("phase-diagram", cfg)
    echo["delta_values"] = ",".join("%.17g" % v for v in deltas)
    echo["rho_values"] = ",".join("%.17g" % v for v in rhos)
    total = len(deltas) * len(rhos)
    done = {}

    def on_cell(i, j, rate):
        done[(i, j)] = rate
        _progress("phase-diagram: cell (%d,%d) rate %.3f [%d/%d]"
                  % (i, j, rate, len(done), total))

    csv_path = _out_path(cfg, "phase.csv")
    try:
        grid = phase_diagram(omega, solver_cfg, deltas, rhos, cfg["trials"],
                             cfg["seed"], workers=cfg["workers"],
                             success_tol=cfg["success_tol"],
                             noise_sigma=cfg["noise_sigma"],
                             progress=on_cell)
    except KeyboardInterrupt:
        from .experiments import PhaseGrid
        rate = np.zeros((len(rhos), len(deltas)))
        for (i, j), r in done.items():
            rate[i, j] = r
        partial = PhaseGrid(delta_values=list(deltas), rho_values=list(rhos),
                            trials=cfg["trials"], seed=cfg["seed"],
                            recovery_rate=rate)
        save_phase_csv(partial, csv_path, partial_cells=set(done))
        _append_echo_comments(csv_path, echo)
        _progress("phase-diagram: interrupted; partial grid written to %s"
                  % csv_path)
        return 1
    save_phase_csv(grid, csv_path)
    _append_echo_comments(csv_path, echo)
    if cfg["pgm"]:
        save_pgm(grid.recovery_rate, _out_path(cfg, "phase.pgm"))
    _print_echo(echo)
    print("mean_rate = %.17g" % float(np.mean(grid.recovery_rate)))
    print("csv = %s" % csv_path)
    return 0


def _append_echo_comments(csv_path, echo):
    with open(csv_path) as fh:
        body = fh.read()
    lines = "".join("# %s=%s\n" % (k, echo[k]) for k in sorted(echo))
    with open(csv_path, "w") as fh:
        fh.write(lines + body)


def _single_theory_report(cfg):
    algo = cfg["algorithm"]
    if algo == "aiht":
        if cfg["delta_2lp"] is None:
            raise CliError("aiht report requires --delta-2lp")
        return aiht_report(cfg["c_l"], cfg["sigma_sq"], cfg["delta_2lp"],
                           cfg["eta"], mu=cfg["mu"], y_norm=cfg["y_norm"],
                           e_norm=cfg["e_norm"])
    if algo in ("acosamp", "asp"):
        missing = [k for k in ("gamma", "delta_2lp", "delta_3l2p", "delta_4l3p")
                   if cfg[k] is None]
        if missing:
            raise CliError("%s report requires %s" %
                           (algo, ", ".join("--" + k.replace("_", "-")
                                            for k in missing)))
        fn = acosamp_report if algo == "acosamp" else asp_report
        c2 = cfg["c_2lp"] if cfg["c_2lp"] is not None else cfg["c_l"]
        return fn(cfg["c_l"], c2, cfg["sigma_sq"], cfg["gamma"],
                  cfg["delta_2lp"], cfg["delta_3l2p"], cfg["delta_4l3p"],
                  x_norm=cfg["x_norm"], e_norm=cfg["e_norm"])
    raise CliError("theory report requires --algorithm aiht|acosamp|asp")


def _sweep_rows(cfg):
    algos = (("aiht", "acosamp", "asp") if cfg["algorithm"] == "all"
             else (cfg["algorithm"],))
    gamma = cfg["gamma"] if cfg["gamma"] is not None else 0.0
    rows = []
    for algo in algos:
        for c in cfg["c_values"]:
            try:
                if algo == "aiht":
                    val = aiht_delta_boundary(c, cfg["sigma_sq"])
                elif algo == "acosamp":
                    val = delta_root_acosamp(c, cfg["sigma_sq"], gamma)
                elif algo == "asp":
                    val = delta_root_asp(c, cfg["sigma_sq"], gamma)
                else:
                    raise CliError("unknown algorithm %r for sweep" % algo)
                rows.append((algo, c, "%.12g" % val))
            except ValueError:
                rows.append((algo, c, "infeasible"))
    return rows


def cmd_theory(cfg):
    echo = _echo_dict("theory", cfg)
    if cfg["sweep"]:
        rows = _sweep_rows(cfg)
        record = {"config": echo, "boundaries": [
            {"algorithm": a, "c": c, "delta_boundary": v} for a, c, v in rows]}
        save_report_json(record, _out_path(cfg, "theory.json"))
        _print_echo(echo)
        for algo, c, val in rows:
            print("%s C=%.12g boundary = %s" % (algo, c, val))
        return 0
    report = _single_theory_report(cfg)
    record = {"config": echo,
              "report": {k: v for k, v in report.items()}}
    save_report_json(record, _out_path(cfg, "theory.json"))
    _print_echo(echo)
    print(report.format_text())
    return 0


def cmd_rip(cfg):
    if cfg["l"] is None:
        raise CliError("rip requires --l (cosparsity level)")
    if cfg["matrix"]:
        M = _load_matrix(cfg["matrix"], "measurement matrix")
    else:
        if not cfg["m"] or not cfg["d"]:
            raise CliError("rip requires --matrix FILE or --m and --d for a "
                           "seeded Gaussian matrix")
        rng = np.random.default_rng(cfg["seed"])
        M = rng.standard_normal((cfg["m"], cfg["d"])) / math.sqrt(cfg["m"])
    omega = _build_operator(cfg, d_hint=M.shape[1])
    if cfg["mode"] == "exhaustive":
        try:
            est = omega_rip_exhaustive(M, omega, cfg["l"],
                                       corank_mode=cfg["corank"],
                                       workers=cfg["workers"])
        except ValueError as exc:
            raise CliError(str(exc))
    elif cfg["mode"] == "sampled":
        est = omega_rip_sampled(M, omega, cfg["l"], cfg["trials"], cfg["seed"])
    else:
        raise CliError("rip mode must be exhaustive or sampled")
    echo = _echo_dict("rip", cfg)
    record = {"config": echo, "delta": est.delta, "level": est.level,
              "mode": est.mode, "corank_mode": est.corank_mode,
              "is_lower_bound": est.is_lower_bound, "trials": est.trials}
    save_report_json(record, _out_path(cfg, "rip.json"))
    _print_echo(echo)
    print("delta = %.17g" % est.delta)
    print("lower_bound = %s" % ("true" if est.is_lower_bound else "false"))
    return 0


def cmd_phantom(cfg):
    h, w = cfg["size"]
    solver_cfg = _solver_config(cfg)
    echo = _echo_dict("phantom", cfg)
    _progress("phantom: %dx%d, %d lines, %s" % (h, w, cfg["lines"],
                                                solver_cfg.variant))
    report, images = phantom_experiment(h, w, cfg["lines"], solver_cfg,
                                        snr_db=cfg["snr_db"],
                                        seed=cfg["seed"], l=cfg["l"])
    report["config"] = echo
    for name, img in images.items():
        save_pgm(img, _out_path(cfg, name + ".pgm"))
        save_image_csv(img, _out_path(cfg, name + ".csv"))
    save_report_json(report, _out_path(cfg, "phantom.json"))
    _print_echo(echo)
    for key in ("mask_fraction", "relative_error", "psnr", "psnr_zero_fill",
                "iterations"):
        val = report[key]
        print("%s = %s" % (key, "%.17g" % val if isinstance(val, float)
                           else val))
    return 0


# ---------------------------------------------------------------------------
# parser assembly

_COMMANDS = {
    "recover": (cmd_recover, "run a recovery solver on saved measurements"),
    "project": (cmd_project, "project a vector onto a cosparse subspace"),
    "phase-diagram": (cmd_phase_diagram,
                      "sweep recovery rates over a (delta, rho) grid"),
    "theory": (cmd_theory, "guarantee constants and feasibility boundaries"),
    "rip": (cmd_rip, "estimate the operator-restricted isometry constant"),
    "phantom": (cmd_phantom,
                "recover the head phantom from radial Fourier samples"),
}

_FLAG_PARSERS = {
    int: int, float: float, _identity: str,
    _parse_bool: None,  # store_true
    _parse_float_list: _parse_float_list,
    _parse_size: _parse_size,
    _parse_a_fraction: _parse_a_fraction,
}


def _build_parser():
    parser = _Parser(prog="cosparse",
                     description="greedy-like cosparse recovery toolkit")
    subs = parser.add_subparsers(dest="command", required=True,
                                 parser_class=_Parser)
    for name, (_, help_text) in _COMMANDS.items():
        sub = subs.add_parser(name, help=help_text)
        for pname, parse, _default in _COMMAND_PARAMS[name]:
            flag = "--" + pname.replace("_", "-")
            if parse is _parse_bool:
                sub.add_argument(flag, action="store_const", const=True,
                                 default=None)
            else:
                sub.add_argument(flag, type=_FLAG_PARSERS[parse],
                                 default=None, help=_FLAG_HELP.get(pname))
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = _resolve(ns, ns.command)
        return _COMMANDS[ns.command][0](cfg)
    except CliError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except DivergenceError as exc:
        sys.stderr.write("solver diverged: %s\n" % exc)
        return 2
    except (OSError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
