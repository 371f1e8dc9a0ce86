"""Command-line experiment driver.

Subcommands ``simulate``, ``kernel``, ``tv-curve``, ``couple`` and
``verify`` write CSV and JSON files into ``--out``.  Parameters come from
built-in defaults, then a JSON ``--config`` file, then command-line flags,
later sources winning.  Each output embeds the resolved parameters and the
package version; ``out`` and ``threads`` are left out of that record
because they do not affect results.

Exit status: 0 success, 1 verification failure, 2 configuration error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from . import __version__, dists, ergodicity as erg, kernels, samplers
from .dists import Chain
from .errors import SmcRatesError
from .kernels import GridSpec
from .outputs import write_csv, write_json
from .quadrature import DEFAULT_PANELS, DEFAULT_T_MAX

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

# keys that never change a result and are kept out of embedded metadata
NON_RESULT_KEYS = ("out", "threads")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable[[Any], Any]
    default: Any
    help: str
    check: Optional[Callable[[Any], bool]] = None
    domain: str = ""
    choices: Optional[tuple] = None


def _u64(v):
    v = int(v)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _y0(v):
    return "stationary" if v == "stationary" else float(v)


_pos = (lambda v: math.isfinite(v) and v > 0, "> 0")
_nonneg = (lambda v: math.isfinite(v) and v >= 0, ">= 0")
_count = (lambda v: v >= 1, ">= 1")
_models = ("smc", "smc-prime")

COMMON = [
    Param("seed", _u64, 0, "master seed (64-bit unsigned)"),
    Param("out", str, ".", "output directory"),
    Param("threads", int, os.cpu_count() or 1, "worker threads for sweeps and the suite", *_count),
    Param("grid_tmax", float, DEFAULT_T_MAX, "right end of the quadrature grid", *_pos),
    Param("grid_panels", int, DEFAULT_PANELS, "number of quadrature panels", lambda v: v >= 2, ">= 2"),
]

COMMANDS = {
    "simulate": [
        Param("model", str, "smc", "process", choices=_models),
        Param("mode", str, "direct", "direct path, subordinated SMC' path, or jump chain",
              choices=("direct", "subordinated", "jump-chain")),
        Param("x0", float, 1.0, "initial TMRCA", *_pos),
        Param("horizon", float, 50.0, "genetic distance to simulate", *_nonneg),
        Param("n", int, 20, "jump-chain steps (jump-chain mode)", *_count),
        Param("endpoints", int, 0, "also draw this many independent endpoints Y_horizon", *_nonneg),
    ],
    "kernel": [
        Param("model", str, "smc", "process", choices=_models),
        Param("x", float, 1.0, "initial TMRCA", *_pos),
        Param("ell", float, 1.0, "genetic distance", *_nonneg),
        Param("tail_tol", float, kernels.DEFAULT_TAIL_TOL, "dropped Poisson mass (smc-prime)",
              lambda v: 0 < v < 1, "in (0, 1)"),
    ],
    "tv-curve": [
        Param("model", str, "smc", "process", choices=_models),
        Param("kind", str, "continuous", "sweep over ell (continuous) or steps n (jump)",
              choices=("continuous", "jump")),
        Param("x", float, 1.0, "initial TMRCA", *_pos),
        Param("start", float, 2.0, "first ell or n", *_pos),
        Param("stop", float, 1000.0, "last ell or n", *_pos),
        Param("points", int, 20, "number of sweep points (continuous)", *_nonneg),
        Param("scale", str, "log", "spacing of continuous sweeps", choices=("log", "linear")),
    ],
    "couple": [
        Param("model", str, "smc", "jump chain", choices=_models),
        Param("x0", float, 1.0, "start of the first chain", *_pos),
        Param("y0", _y0, "stationary", "start of the second chain, or 'stationary'",
              lambda v: v == "stationary" or (math.isfinite(v) and v > 0), "> 0 or 'stationary'"),
        Param("n", int, 15, "steps", *_count),
        Param("replicates", int, 10_000, "independent coupled pairs", *_count),
    ],
    "verify": [
        Param("replicates", int, 100_000, "Monte Carlo replicates for sampling claims", *_count),
        Param("only", list, [], "restrict to claims (repeatable --only claim=ID)"),
        Param("tolerance", dict, {}, "tolerance overrides (repeatable --tolerance name=value)"),
        Param("constant", dict, {}, "constant overrides (repeatable --constant name=value)"),
    ],
}


# --- configuration -----------------------------------------------------------


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config_file(path, command):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    known = {p.name for p in COMMON + COMMANDS[command]}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown key {key!r} for '{command}'")
    return doc, text


def _coerce(p: Param, value, where):
    try:
        if p.type in (list, dict):
            if not isinstance(value, p.type):
                raise ValueError(f"expected a JSON {'array' if p.type is list else 'object'}")
            v = value
        else:
            v = p.type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value for {p.name}: {exc}") from exc
    if p.choices and v not in p.choices:
        raise ConfigError(f"{where}: {p.name} must be one of {', '.join(p.choices)}, got {v!r}")
    if p.check and not p.check(v):
        raise ConfigError(f"{where}: {p.name} must be {p.domain}, got {v!r}")
    return v


def resolve(command, flags: dict, config_path=None):
    """Merge defaults, config file and flags into one validated record."""
    params = {p.name: p for p in COMMON + COMMANDS[command]}
    cfg = {name: p.default for name, p in params.items()}
    if config_path:
        doc, text = load_config_file(config_path, command)
        for key, value in doc.items():
            where = f"{config_path}:{_line_of(text, key)}"
            cfg[key] = _coerce(params[key], value, where)
    for key, value in flags.items():
        if key in ("only", "tolerance", "constant"):
            merged = list(cfg[key]) + value if key == "only" else {**cfg[key], **value}
            cfg[key] = merged
        else:
            cfg[key] = _coerce(params[key], value, f"--{key.replace('_', '-')}")
    return cfg


def _pairs(items, flag):
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"{flag} expects name=value, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{flag} {name}: not a number: {value!r}") from exc
    return out


def _only(items):
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        if key != "claim" or not sep:
            raise ConfigError(f"--only expects claim=ID, got {item!r}")
        out.append(value)
    return out


SUMMARIES = {
    "simulate": "sample a path, endpoints or a jump chain",
    "kernel": "tabulate the transition kernel from one state",
    "tv-curve": "sweep the distance to stationarity",
    "couple": "run quantile-coupled jump chains",
    "verify": "check every registered claim",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="smcrates", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, plist in COMMANDS.items():
        sp = sub.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name])
        sp.add_argument("--config", help="JSON file of parameters (flags override it)")
        for p in COMMON + plist:
            flag = "--" + p.name.replace("_", "-")
            if name == "verify" and p.name in ("only", "tolerance", "constant"):
                sp.add_argument(flag, action="append", default=argparse.SUPPRESS, help=p.help)
            elif p.choices:
                sp.add_argument(flag, default=argparse.SUPPRESS, choices=p.choices, help=p.help)
            else:
                sp.add_argument(flag, default=argparse.SUPPRESS, help=f"{p.help} (default {p.default})")
    return parser


def _grid(cfg):
    return GridSpec(t_max=cfg["grid_tmax"], panels=cfg["grid_panels"])


def _meta(command, cfg, **extra):
    rec = {k: v for k, v in cfg.items() if k not in NON_RESULT_KEYS}
    return {"command": command, "seed": cfg["seed"], "config": rec, **extra}


def _path(cfg, name):
    return os.path.join(cfg["out"], name)


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


# --- commands --------------------------------------------------------------


def cmd_simulate(cfg):
    model, mode = Chain(cfg["model"]), cfg["mode"]
    if mode == "subordinated" and model is not Chain.SMC_PRIME:
        raise ConfigError("--mode subordinated builds SMC' paths; use --model smc-prime")
    seed = samplers.RngSeed(cfg["seed"], 0)
    meta = _meta("simulate", cfg)
    stem = f"{model.value}_{mode}"
    files = []
    if mode == "jump-chain":
        states = samplers.sample_jump_chain(model, cfg["x0"], cfg["n"], seed)
        files.append(write_csv(_path(cfg, f"jump_chain_{stem}.csv"), "jump_chain", ("step", "tmrca"),
                               enumerate(states), meta))
    else:
        if mode == "direct":
            path = samplers.sample_path(model, cfg["x0"], cfg["horizon"], seed)
        else:
            path = samplers.sample_subordinated_path(cfg["x0"], cfg["horizon"], seed)
        files.append(path.to_csv(_path(cfg, f"path_{stem}.csv"), meta))
        if cfg["endpoints"]:
            eseed = samplers.RngSeed(cfg["seed"], 1)
            if mode == "direct":
                ends = samplers.sample_endpoint(model, cfg["x0"], cfg["horizon"], cfg["endpoints"], eseed)
            else:
                ends = samplers.sample_subordinated_endpoint(cfg["x0"], cfg["horizon"], cfg["endpoints"], eseed)
            files.append(write_csv(_path(cfg, f"endpoints_{stem}.csv"), "endpoints", ("replicate", "tmrca"),
                                   enumerate(ends), meta))
    write_json(_path(cfg, f"run_simulate_{stem}.json"),
               {**meta, "version": __version__, "files": [os.path.basename(f) for f in files]})
    return EXIT_OK


def cmd_kernel(cfg):
    model = Chain(cfg["model"])
    kw = {"tail_tol": cfg["tail_tol"]} if model is Chain.SMC_PRIME else {}
    k = kernels.kernel(model, cfg["x"], cfg["ell"], _grid(cfg), **kw)
    d = k.density
    meta = _meta("kernel", cfg, atom_location=k.atom_location, atom_mass=k.atom_mass, total_mass=k.total_mass)
    write_csv(_path(cfg, f"kernel_{model.value}.csv"), "kernel", ("node", "weight", "density_value"),
              zip(d.nodes, d.weights, d.values), meta)
    return EXIT_OK


def _tv_row(model, kind, x, point, grid):
    if kind == "jump":
        n = int(point)
        r = erg.jump_tv_numeric(model, x, n, grid)
        return n, r.value, r.method.value, erg.jump_bound(model, x, n), True
    ell = float(point)
    if model is Chain.SMC:
        r = erg.smc_tv(x, ell, grid)
        return ell, r.value, r.method.value, 1.0 / ell, r.valid
    r = erg.smc_prime_tv(x, ell, grid)
    valid = ell / 2.0 >= 2.0 and erg.smc_crossing_point(ell / 2.0) < x
    return ell, r.value, r.method.value, 2.0 / ell, valid


def cmd_tv_curve(cfg):
    model, kind = Chain(cfg["model"]), cfg["kind"]
    start, stop = cfg["start"], cfg["stop"]
    if kind == "jump":
        if start != int(start) or stop != int(stop):
            raise ConfigError("jump sweeps need integer start and stop")
        points = list(range(int(start), int(stop) + 1))
    else:
        n = cfg["points"]
        if n == 0 or start > stop:
            points = []
        elif cfg["scale"] == "log":
            points = list(np.geomspace(start, stop, n))
        else:
            points = list(np.linspace(start, stop, n))
    if not points:
        raise ConfigError("empty sweep: need start <= stop and points >= 1")
    grid = _grid(cfg)

    def job(i_point):
        i, pt = i_point
        row = _tv_row(model, kind, cfg["x"], pt, grid)
        _progress(f"[tv-curve] {i + 1}/{len(points)} {row[0]:.6g} tv={row[1]:.6g}")
        return row

    with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
        rows = list(pool.map(job, enumerate(points)))
    meta = _meta("tv-curve", cfg)
    stem = f"tv_curve_{model.value}_{kind}"
    write_csv(_path(cfg, stem + ".csv"), "tv_curve", ("ell_or_n", "tv", "method", "bound", "valid_flag"), rows, meta)
    summary = {**meta, "version": __version__, "rows": len(rows),
               "all_within_bound": all(r[1] <= r[3] + 1e-6 for r in rows)}
    usable = [(r[0], r[1]) for r in rows if r[1] > 0]
    if len(usable) >= 3:
        if kind == "jump":
            ns, tv = np.array(usable).T
            summary["semilog_slope"] = float(np.polyfit(ns, np.log(tv), 1)[0])
        elif len({p for p, _ in usable}) > 1:
            summary["loglog_slope"] = erg.decay_slope(usable)
    write_json(_path(cfg, stem + ".json"), summary)
    return EXIT_OK


def cmd_couple(cfg):
    model = Chain(cfg["model"])
    trace = samplers.sample_coupled_chains(model, cfg["x0"], cfg["y0"], cfg["n"],
                                           samplers.RngSeed(cfg["seed"], 0), size=cfg["replicates"])
    meta = _meta("couple", cfg)
    first = samplers.CoupledTrace(trace.xs[0], trace.ys[0], trace.abs_gaps[0])
    first.to_csv(_path(cfg, f"couple_{model.value}.csv"), meta)
    ratio, se = samplers.gap_ratios(trace)
    means = trace.abs_gaps.mean(axis=0)
    rows = [(i, means[i], ratio[i - 1] if i else float("nan"), se[i - 1] if i else float("nan"))
            for i in range(means.size)]
    write_csv(_path(cfg, f"couple_{model.value}_summary.csv"), "coupling_summary",
              ("step", "mean_gap", "ratio", "ratio_se"), rows, meta)
    return EXIT_OK


def cmd_verify(cfg):
    from .suite import SuiteConfig, run_verification_suite

    try:
        sc = SuiteConfig(seed=cfg["seed"], replicates=cfg["replicates"], threads=cfg["threads"], grid=_grid(cfg),
                         tolerances=cfg["tolerance"], constants=cfg["constant"], only=tuple(cfg["only"]))
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    reports = run_verification_suite(
        sc, progress=lambda r: _progress(f"[verify] {r.claim_id}: {'PASS' if r.passed else 'FAIL'}"))
    doc = json.loads(erg.reports_to_json(reports, **_meta("verify", cfg), version=__version__))
    write_json(_path(cfg, "verify_report.json"), doc)
    print(erg.reports_table(reports))
    return EXIT_OK if doc["all_passed"] else EXIT_FAIL


HANDLERS = {"simulate": cmd_simulate, "kernel": cmd_kernel, "tv-curve": cmd_tv_curve,
            "couple": cmd_couple, "verify": cmd_verify}


def main(argv=None):
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        if "only" in args:
            args["only"] = _only(args["only"])
        for key in ("tolerance", "constant"):
            if key in args:
                args[key] = _pairs(args[key], "--" + key)
        cfg = resolve(command, args, config_path)
        os.makedirs(cfg["out"], exist_ok=True)
        return HANDLERS[command](cfg)
    except ConfigError as exc:
        print(f"smcrates: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SmcRatesError as exc:
        print(f"smcrates: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"smcrates: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
