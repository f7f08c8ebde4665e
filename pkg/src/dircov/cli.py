"""Command-line entry point: experiment campaigns, slope fitting over harness
CSVs, and ad-hoc estimator runs.

Option precedence: explicit flags > config file (flat key=value text) >
DIRCOV_SEED (seed only) > built-in defaults. The effective configuration is
echoed in the output's provenance block.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, report
from .estimators import Dataset, ols_fit
from .singleindex import LINKS, acls_fit, rescale_responses, select_level_count

EXPERIMENT_COMMANDS = {
    "prec-rates": "prec_rates",
    "cov-rates": "cov_rates",
    "sim-ols": "sim_ols",
    "sim-acls": "sim_acls",
    "eigengap-example": "eigengap_example",
    "r-concentration": "r_concentration",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _add_experiment_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--setting", type=int, choices=(1, 2), help="covariance model setting (default: 1)")
    sub.add_argument("--nu", type=_float_list, help="comma list of nu (or eta) values (default: experiment-specific)")
    sub.add_argument("--n", type=_int_list, help="comma list of sample sizes (default: 8 log-spaced in [100, 10000])")
    sub.add_argument("--trials", type=int, help="Monte-Carlo repetitions per cell (default: 100)")
    sub.add_argument("--seed", type=int, help="master seed (default: env DIRCOV_SEED, else 0)")
    sub.add_argument("--dim", type=int, help="ambient dimension D (default: 10)")
    sub.add_argument("--link", choices=sorted(LINKS), help="link function (default: identity)")
    sub.add_argument("--noise", type=_float_list, help="comma list of sigma_zeta values (default: 0,0.1,0.3)")
    sub.add_argument("--alpha", type=float, help="level-set admission threshold (default: 0.05)")
    sub.add_argument("--kmax", type=int, help="largest exponent of the level-count grid (default: 40)")
    sub.add_argument("--rtol", type=float, help="numerical-rank tolerance (default: D*eps)")
    sub.add_argument("--threads", type=int, help="trial parallelism cap (default: machine cores)")
    sub.add_argument("--out", help="output CSV path (default: stdout)")
    sub.add_argument("--config", help="flat key=value config file; flags override it")
    sub.add_argument(
        "--fig",
        nargs="?",
        const="auto",
        help="also render a figure; bare --fig derives the path from --out (default: no figure)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="dircov", description=__doc__)
    subs = parser.add_subparsers(dest="command", metavar="command")
    for name in EXPERIMENT_COMMANDS:
        sub = subs.add_parser(name, help=f"run the {name} campaign")
        _add_experiment_flags(sub)
    slope = subs.add_parser("slope", help="fit log-log slopes over a harness CSV")
    slope.add_argument("input", help="harness CSV path, or - for stdin")
    slope.add_argument("--by", default="", help="extra group keys from {nu,link,sigma_zeta} (default: none)")
    slope.add_argument("--metric", help="restrict to one metric (default: all metrics)")
    slope.add_argument("--out", help="output CSV path (default: stdout)")
    est = subs.add_parser("estimate", help="fit an estimator on a dataset CSV (x1,...,xD[,y])")
    est.add_argument("data", help="dataset CSV path")
    est.add_argument("--method", choices=("ols", "acls"), default="ols", help="estimator (default: ols)")
    est.add_argument("--alpha", type=float, default=0.05, help="level-set admission threshold (default: 0.05)")
    est.add_argument("--kmax", type=int, default=40, help="largest level-count grid exponent (default: 40)")
    est.add_argument("--rtol", type=float, help="numerical-rank tolerance (default: D*eps)")
    est.add_argument("--out", help="output CSV path (default: stdout)")
    return parser


def _load_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return out


def _resolve(args, conf: dict[str, str], key: str, cast, default):
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in conf:
        return cast(conf[key])
    return default


def _experiment_config(args) -> harness.ExperimentConfig:
    conf = _load_config(args.config) if args.config else {}
    env_seed = os.environ.get("DIRCOV_SEED")
    seed = _resolve(args, conf, "seed", int, int(env_seed) if env_seed else 0)
    nu = _resolve(args, conf, "nu", _float_list, None)
    noise = _resolve(args, conf, "noise", _float_list, None)
    n_list = _resolve(args, conf, "n", _int_list, harness.DEFAULT_N_GRID)
    try:
        return harness.ExperimentConfig(
            experiment=EXPERIMENT_COMMANDS[args.command],
            dim=_resolve(args, conf, "dim", int, 10),
            setting=_resolve(args, conf, "setting", int, 1),
            nu_list=nu,
            n_list=tuple(n_list),
            trials=_resolve(args, conf, "trials", int, 100),
            seed=seed,
            alpha=_resolve(args, conf, "alpha", float, 0.05),
            sigma_zeta_list=noise,
            link=_resolve(args, conf, "link", str, "identity"),
            k_max=_resolve(args, conf, "kmax", int, 40),
            rtol=_resolve(args, conf, "rtol", float, None),
            threads=_resolve(args, conf, "threads", int, os.cpu_count() or 1),
            out=_resolve(args, conf, "out", str, None),
        )
    except harness.ExperimentError as exc:
        raise UsageError(str(exc)) from None


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _run_experiment(args) -> int:
    cfg = _experiment_config(args)
    fig_path = getattr(args, "fig", None)
    if fig_path == "auto":
        if cfg.out is None:
            raise UsageError("--fig without a path needs --out to derive the figure file")
        fig_path = os.path.splitext(cfg.out)[0] + ".png"
    rows = harness.run(cfg, log=sys.stderr)
    _write_text(cfg.out, harness.csv_text(cfg, rows))
    if fig_path:
        row_dicts = [dict(zip(harness.CSV_HEADER.split(","), r.to_csv_line().split(","))) for r in rows]
        report.render_figure(row_dicts, cfg.experiment, fig_path)
        print(f"figure written to {fig_path}", file=sys.stderr)
    return 0


def _run_slope(args) -> int:
    by = tuple(k for k in args.by.split(",") if k)
    bad = set(by) - {"nu", "link", "sigma_zeta"}
    if bad:
        raise UsageError(f"cannot group by {sorted(bad)}; allowed: nu, link, sigma_zeta")
    if args.input == "-":
        rows = harness.read_csv_rows(sys.stdin)
    else:
        with open(args.input, "r", encoding="utf-8") as fh:
            rows = harness.read_csv_rows(fh)
    if args.metric is not None:
        rows = [r for r in rows if r["metric"] == args.metric]
    table = harness.slope_table(rows, by)
    header = ["metric", *by, "slope", "intercept", "r_squared"]
    lines = [",".join(header)]
    if not table:
        lines.append(",".join([args.metric or "NA"] + ["NA"] * (len(header) - 1)))
    for entry in table:
        lines.append(",".join(str(entry[k]) for k in header))
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _run_estimate(args) -> int:
    data = Dataset.from_csv(args.data)
    if data.y is None:
        raise UsageError(f"{args.data} has no response column 'y'")
    lines = ["field,value", f"method,{args.method}", f"n,{data.n}", f"dim,{data.dim}"]
    if args.method == "ols":
        fit = ols_fit(data, args.rtol)
        lines.append(f"intercept,{fit.intercept!r}")
        lines += [f"coef_{i + 1},{float(v)!r}" for i, v in enumerate(fit.coef)]
        if fit.direction is not None:
            lines += [f"direction_{i + 1},{float(v)!r}" for i, v in enumerate(fit.direction)]
    else:
        rescaled = data.with_response(rescale_responses(data.y))
        j_star, trace = select_level_count(rescaled, args.alpha, args.kmax, args.rtol)
        model = acls_fit(rescaled, j_star, args.alpha, args.rtol)
        lines.append(f"j_star,{j_star}")
        lines.append(f"lambda_1,{model.top_eigenvalue!r}")
        lines.append(f"active_levels,{len(model.active_set)}")
        lines += [f"direction_{i + 1},{float(v)!r}" for i, v in enumerate(model.top_eigenvector)]
        lines += [f"trace_J{j},{float(lam)!r}" for j, lam in trace]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def parse_and_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        if args.command in EXPERIMENT_COMMANDS:
            return _run_experiment(args)
        if args.command == "slope":
            return _run_slope(args)
        return _run_estimate(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"dircov: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"dircov: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
