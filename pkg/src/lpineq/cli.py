"""Command line entry point: ``lpineq {test,simulate,power}``.

Exit codes: 0 on success (whatever the decision), 2 for configuration or
input errors, 3 when the estimated variance is degenerate.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import Dataset, make_grid, pop_rho_sq
from .kernels import KERNELS, get_kernel
from .normal import McSettings
from .power import PowerQuery, on_grid, optimal_weight, power_summary
from .simulation import ExperimentConfig, make_dgp, pop_sigma_sq, run_experiment
from .statistic import DegenerateVarianceError, TestConfig, run_test

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3

TEST_KEYS = {"p", "mode", "kernel", "bandwidth", "bandwidth_c", "domain", "weights", "alpha",
             "grid_size", "mc_draws", "mc_seed", "antithetic", "t_grid_size", "weight_floor"}
SIM_KEYS = {"dgps", "n", "c_h", "weights", "p", "mode", "alpha", "replications", "base_seed",
            "domain", "kernel", "bandwidth", "grid_size", "mc_draws", "mc_seed"}
QUERY_KEYS = {"p", "mode", "rate", "alpha", "domain", "grid_size", "delta", "rho", "weights",
              "sigma", "dgp", "kernel", "outcomes", "optimal"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- input files


def ingest_csv(path) -> Dataset:
    """Read a CSV with header columns ``x1..xd`` and ``y1..yJ`` (any order)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read data file ({exc.strerror})") from None
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ConfigError(f"{path}: missing header row")
    header = [c.strip() for c in rows[0]]
    pattern = re.compile(r"^([xy])([1-9][0-9]*)$")
    cols: dict[str, dict[int, int]] = {"x": {}, "y": {}}
    for pos, name in enumerate(header):
        m = pattern.match(name)
        if not m:
            raise ConfigError(f"{path}: header column {pos + 1} {name!r} is not of the form x<k> or y<k>")
        kind, idx = m.group(1), int(m.group(2))
        if idx in cols[kind]:
            raise ConfigError(f"{path}: duplicate column {name!r}")
        cols[kind][idx] = pos
    for kind in "xy":
        idx = sorted(cols[kind])
        if not idx:
            raise ConfigError(f"{path}: no {kind} columns in header")
        if idx != list(range(1, len(idx) + 1)):
            raise ConfigError(f"{path}: {kind} columns must be numbered 1..{len(idx)} without gaps")

    body = [(line, r) for line, r in enumerate(rows[1:], start=2) if any(c.strip() for c in r)]
    if not body:
        raise ConfigError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    bad = []
    for i, (line, r) in enumerate(body):
        if len(r) != len(header):
            raise ConfigError(f"{path}: line {line} has {len(r)} fields, header has {len(header)}")
        try:
            vals = [float(c) for c in r]
        except ValueError:
            bad.append(line)
            continue
        if not all(math.isfinite(v) for v in vals):
            bad.append(line)
            continue
        values[i] = vals
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise ConfigError(f"{path}: missing or non-finite values on line(s) {shown}")
    xi = [cols["x"][k] for k in sorted(cols["x"])]
    yi = [cols["y"][k] for k in sorted(cols["y"])]
    try:
        return Dataset(values[:, xi], values[:, yi],
                       tuple(header[i] for i in xi), tuple(header[i] for i in yi))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path, allowed: set[str]) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(map(repr, unknown))}; "
                          f"allowed: {', '.join(sorted(allowed))}")
    return raw


def parse_domain(value) -> tuple:
    """``"lo:hi[,lo:hi...]"`` or a list of ``[lo, hi]`` pairs."""
    if isinstance(value, str):
        try:
            return tuple(tuple(float(v) for v in part.split(":")) for part in value.split(","))
        except ValueError:
            raise ConfigError(f"cannot parse domain {value!r}; expected lo:hi[,lo:hi...]") from None
    try:
        out = tuple((float(lo), float(hi)) for lo, hi in value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse domain {value!r}") from None
    return out


def _merge(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    out = dict(defaults)
    out.update({k: v for k, v in file_cfg.items() if v is not None})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


# ---------------------------------------------------------------- expressions

_SAFE_FUNCS = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "maximum", "minimum",
                "where", "sign", "arcsin", "arccos", "arctan", "tanh", "ones_like", "zeros_like")}
_SAFE_NAMES = {"pi": np.pi, "e": np.e}
_SAFE_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
               ast.Compare, ast.operator, ast.unaryop, ast.cmpop, ast.Subscript, ast.Tuple,
               ast.Slice, ast.Index if hasattr(ast, "Index") else ast.Slice)


def compile_expression(text: str):
    """Turn ``"sin(2*pi*x)"`` into a vectorised function of ``x``.

    Only arithmetic, comparisons, a small set of numpy functions and the
    names ``x``, ``pi`` and ``e`` are accepted.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _SAFE_NODES):
            raise ConfigError(f"expression {text!r}: {type(node).__name__} is not allowed")
        if isinstance(node, ast.Name) and node.id not in _SAFE_FUNCS and node.id not in _SAFE_NAMES \
                and node.id != "x":
            raise ConfigError(f"expression {text!r}: unknown name {node.id!r}")
    code = compile(tree, "<expression>", "eval")

    def func(x):
        env = {"__builtins__": {}, **_SAFE_FUNCS, **_SAFE_NAMES, "x": np.asarray(x, dtype=float)}
        return eval(code, env)  # noqa: S307 - names and node types are whitelisted above

    return func


def _function_entry(value, key: str):
    if isinstance(value, str):
        return compile_expression(value)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return np.asarray(value, dtype=float)
    raise ConfigError(f"{key}: expected a number, an expression string or a list of grid values")


# ---------------------------------------------------------------- subcommands


def _mode_name(value: str) -> str:
    return {"inequality": "one_sided", "equality": "two_sided"}.get(value, value)


def build_test_config(args) -> TestConfig:
    file_cfg = load_config(args.config, TEST_KEYS)
    flags = {
        "p": args.p, "mode": args.mode, "alpha": args.alpha, "bandwidth_c": args.bandwidth_c,
        "bandwidth": args.bandwidth, "kernel": args.kernel, "domain": args.domain,
        "weights": args.weights, "grid_size": args.grid, "mc_draws": args.mc_draws,
        "mc_seed": args.seed,
    }
    defaults = {"p": 1.0, "mode": "one_sided", "alpha": 0.05, "bandwidth_c": 1.0,
                "kernel": "quartic2u", "domain": "0.05:0.95", "weights": "uniform"}
    merged = _merge(defaults, file_cfg, flags)
    mc_defaults = McSettings()
    try:
        mc = McSettings(draws=int(merged.pop("mc_draws", mc_defaults.draws)),
                        seed=int(merged.pop("mc_seed", mc_defaults.seed)),
                        antithetic=bool(merged.pop("antithetic", mc_defaults.antithetic)))
        merged["domain"] = parse_domain(merged["domain"])
        merged["mode"] = _mode_name(merged["mode"])
        return TestConfig(mc=mc, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_test(args) -> int:
    cfg = build_test_config(args)
    data = ingest_csv(args.data)
    if len(cfg.domain) != data.d:
        raise ConfigError(f"domain has {len(cfg.domain)} axes but the data have {data.d} covariates")
    report = run_test(data, cfg)
    for note in report.diagnostics["boundary_warnings"]:
        print(f"warning: {note}", file=sys.stderr)
    if report.diagnostics["signed_kernel"]:
        print("warning: kernel takes negative values; size control assumes a nonnegative kernel",
              file=sys.stderr)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"T={report.t_stat:.6f}, p={report.p_value:.6f}, reject={str(report.reject).lower()}")
    return EXIT_OK


def build_experiment_config(args) -> ExperimentConfig:
    file_cfg = load_config(args.config, SIM_KEYS)
    flags = {"replications": args.replications, "base_seed": args.seed}
    merged = _merge({}, file_cfg, flags)
    mc_defaults = McSettings()
    try:
        mc = McSettings(draws=int(merged.pop("mc_draws", mc_defaults.draws)),
                        seed=int(merged.pop("mc_seed", mc_defaults.seed)))
        if "domain" in merged:
            merged["domain"] = parse_domain(merged["domain"])
        if "mode" in merged:
            merged["mode"] = _mode_name(merged["mode"])
        for key in ("dgps", "n", "c_h", "weights"):
            if key in merged and not isinstance(merged[key], list):
                merged[key] = [merged[key]]
        if "weights" in merged:
            merged["weights"] = [w.replace("-", "_") for w in merged["weights"]]
        return ExperimentConfig(mc=mc, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = build_experiment_config(args)
    result = run_experiment(cfg, workers=args.workers)
    table = result.to_csv()
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    if args.json:
        Path(args.json).write_text(result.to_json() + "\n", encoding="utf-8")
    if args.figure_data:
        Path(args.figure_data).write_text(result.figure_data(), encoding="utf-8")
    print(f"{len(result.cells)} cells, {cfg.replications} replications each, "
          f"{result.runtime:.1f}s", file=sys.stderr)
    return EXIT_OK


def build_power_query(raw: dict, where: str) -> tuple[PowerQuery, dict]:
    p = int(raw.get("p", 1))
    mode = _mode_name(raw.get("mode", "one_sided"))
    rate = raw.get("rate", "root_n_h" if mode == "two_sided" else "root_n")
    domain = parse_domain(raw.get("domain", "0.05:0.95"))
    grid_size = raw.get("grid_size")
    kernel = raw.get("kernel", "quartic2u")
    if kernel not in KERNELS:
        raise ConfigError(f"{where}: unknown kernel {kernel!r}")

    if "outcomes" in raw:
        if any(k in raw for k in ("delta", "rho", "weights")):
            raise ConfigError(f"{where}: give either 'outcomes' or delta/rho/weights, not both")
        outcomes = raw["outcomes"]
        if not isinstance(outcomes, list) or not outcomes:
            raise ConfigError(f"{where}: 'outcomes' must be a non-empty list")
    else:
        outcomes = [{k: raw[k] for k in ("delta", "rho", "weights") if k in raw}]

    dgp = make_dgp(raw["dgp"]) if "dgp" in raw else None
    grid = make_grid(domain, grid_size)
    deltas, rhos, weights = [], [], []
    for i, entry in enumerate(outcomes):
        loc = f"{where}: outcome {i}"
        if "delta" not in entry:
            raise ConfigError(f"{loc}: missing 'delta'")
        deltas.append(_function_entry(entry["delta"], f"{loc} delta"))
        weights.append(_function_entry(entry.get("weights", 1.0), f"{loc} weights"))
        if "rho" in entry:
            rhos.append(_function_entry(entry["rho"], f"{loc} rho"))
        elif dgp is not None:
            rhos.append(np.sqrt(pop_rho_sq(dgp, get_kernel(kernel, grid.d), grid.points)))
        else:
            raise ConfigError(f"{loc}: give 'rho' or a 'dgp' to derive it from")

    sigma = raw.get("sigma")
    extras = {}
    if sigma is None:
        if dgp is None or len(outcomes) != 1:
            raise ConfigError(f"{where}: 'sigma' is required unless a single outcome and a 'dgp' are given")
        table = on_grid(weights[0], grid)
        tc = TestConfig(p=p, mode=mode, kernel=kernel, domain=domain, weights="custom",
                        custom_weights=table, grid_size=grid_size)
        sigma = math.sqrt(pop_sigma_sq(dgp, tc))
        extras["sigma_source"] = f"population oracle for {dgp.name}"
    query = PowerQuery(deltas, rhos, weights, sigma=float(sigma), alpha=float(raw.get("alpha", 0.05)),
                       p=p, rate=rate, mode=mode, domain=domain, grid_size=grid_size)
    if raw.get("optimal"):
        if len(outcomes) != 1:
            raise ConfigError(f"{where}: optimal weights need a single outcome")
        ow = optimal_weight(deltas[0], rhos[0], p, mode, query.alpha, domain, grid_size,
                            kernel=kernel)
        extras["optimal"] = {"drift": ow.drift, "power": ow.power, "q": ow.q,
                             "constraint_residual": ow.constraint_residual}
    return query, extras


def cmd_power(args) -> int:
    raw = load_config(args.query, QUERY_KEYS)
    try:
        query, extras = build_power_query(raw, str(args.query))
        out = {**power_summary(query), **extras}
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{args.query}: {exc}") from None
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpineq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run the test on a CSV dataset")
    t.add_argument("--data", required=True, help="CSV with columns x1..xd, y1..yJ")
    t.add_argument("--config", help="flat JSON file with test settings")
    t.add_argument("--p", type=float)
    t.add_argument("--mode", choices=["inequality", "equality", "one_sided", "two_sided"])
    t.add_argument("--alpha", type=float)
    bw = t.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth-c", type=float, help="c_h in h = c_h s_X n^(-1/5)")
    bw.add_argument("--bandwidth", type=float, help="fixed bandwidth h")
    t.add_argument("--kernel", choices=sorted(KERNELS))
    t.add_argument("--domain", help="lo:hi[,lo:hi...]")
    t.add_argument("--weights", choices=["uniform", "inverse-se", "inverse-se-global"])
    t.add_argument("--grid", type=int, help="grid points per axis")
    t.add_argument("--mc-draws", type=int)
    t.add_argument("--seed", type=int, help="seed for the covariance Monte Carlo")
    t.add_argument("--output", help="write the JSON report here instead of stdout")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    s.add_argument("--config", required=True, help="JSON file with experiment settings")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int, help="base seed")
    s.add_argument("--output", help="CSV path (default stdout)")
    s.add_argument("--json", help="also write a JSON summary here")
    s.add_argument("--figure-data", help="write plot-ready rejection curves here")
    s.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("power", help="local asymptotic power for a query file")
    pw.add_argument("--query", required=True, help="JSON query file")
    pw.add_argument("--output")
    pw.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateVarianceError as exc:
        print(f"error: degenerate variance: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
