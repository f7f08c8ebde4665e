"""Seeded Monte-Carlo experiment driver with canonical CSV output, plus
log-log rate fitting over that output.

Determinism contract: for a fixed config, two runs produce byte-identical CSV
regardless of thread count. Every trial owns an RngStream whose index is a
hash-free function of (experiment ordinal, parameter-cell ordinal, trial
index); results are assembled in canonical order after all trials finish.
"""

from __future__ import annotations

import concurrent.futures
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .directional import normalized_cov_error, normalized_prec_error
from .estimators import cross_covariance, ols_fit, sample_covariance
from .matops import (
    SymMatrix,
    complement,
    numerical_rank,
    pinv_psd,
    spectral_norm,
    sym_eigen,
)
from .randgen import (
    RngStream,
    make_sigma_identity,
    make_sigma_setting1,
    make_sigma_setting2,
    random_orthoprojector,
    sample_gaussian,
)
from .singleindex import (
    DegenerateResponseError,
    EmptyModelError,
    SimConfig,
    acls_fit,
    aligned_error,
    generate_sim_data,
    rescale_responses,
    select_level_count,
)

EXPERIMENTS = (
    "cov_rates",
    "prec_rates",
    "sim_ols",
    "sim_acls",
    "eigengap_example",
    "r_concentration",
)

CSV_HEADER = "experiment,setting,nu,link,sigma_zeta,D,N,J,trial,metric,value"

# stream_index = (ordinal * _CELL_CAP + cell) * _TRIAL_CAP + trial; the top
# trial slot per cell is reserved for reference draws (r_concentration).
_CELL_CAP = 4096
_TRIAL_CAP = 2**20
_REFERENCE_TRIAL = _TRIAL_CAP - 1

DEFAULT_N_GRID = tuple(int(round(v)) for v in np.geomspace(100, 10_000, 8))
DEFAULT_NU_SETTING1 = tuple(10.0 ** (-j) for j in range(10))
DEFAULT_NU_SETTING2 = tuple(round(0.5 + 0.05 * j, 2) for j in range(10))
DEFAULT_ETA_LIST = (0.1, 0.01, 0.001)
DEFAULT_SIGMA_LIST = (0.0, 0.1, 0.3)


class ExperimentError(RuntimeError):
    """Configuration cannot be run."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dim: int = 10
    setting: int = 1
    nu_list: tuple[float, ...] | None = None
    n_list: tuple[int, ...] = DEFAULT_N_GRID
    trials: int = 100
    seed: int = 0
    alpha: float = 0.05
    sigma_zeta_list: tuple[float, ...] | None = None
    link: str = "identity"
    k_max: int = 40
    rtol: float | None = None
    rank_a: int = 3
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ExperimentError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        if self.trials >= _REFERENCE_TRIAL:
            raise ExperimentError(f"trials must be below {_REFERENCE_TRIAL}")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ExperimentError("n_list must be strictly increasing")
        if self.experiment in ("cov_rates", "prec_rates") and self.setting not in (1, 2):
            raise ExperimentError(f"setting must be 1 or 2, got {self.setting}")


@dataclass(frozen=True)
class ResultRow:
    """One Monte-Carlo measurement. Unused fields serialize as blanks; a
    non-finite or failed measurement serializes as the literal token NA."""

    experiment: str
    setting: str = ""
    nu: float | None = None
    link: str = ""
    sigma_zeta: float | None = None
    dim: int | None = None
    n: int | None = None
    j: int | None = None
    trial: int | None = None
    metric: str = ""
    value: float | None = None

    def to_csv_line(self) -> str:
        def num(v):
            return "" if v is None else repr(float(v))

        def integer(v):
            return "" if v is None else str(int(v))

        value = "NA" if self.value is None or not math.isfinite(self.value) else repr(float(self.value))
        return ",".join(
            [
                self.experiment,
                self.setting,
                num(self.nu),
                self.link,
                num(self.sigma_zeta),
                integer(self.dim),
                integer(self.n),
                integer(self.j),
                integer(self.trial),
                self.metric,
                value,
            ]
        )


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def loglog_slope(ns, errors) -> SlopeFit:
    """Ordinary least squares on (ln N, ln error)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.shape != errors.shape or ns.size < 3:
        raise ValueError("need equal-length inputs with at least 3 points")
    if np.any(errors <= 0.0) or np.any(ns <= 0.0):
        raise ValueError("log-log fit needs positive values")
    x = np.log(ns)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return SlopeFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


# ---------------------------------------------------------------------------
# stream bookkeeping


def trial_stream(cfg: ExperimentConfig, cell: int, trial: int) -> RngStream:
    ordinal = EXPERIMENTS.index(cfg.experiment)
    return RngStream(cfg.seed, (ordinal * _CELL_CAP + cell) * _TRIAL_CAP + trial)


def _reference_stream(cfg: ExperimentConfig, slot: int) -> RngStream:
    ordinal = EXPERIMENTS.index(cfg.experiment)
    return RngStream(cfg.seed, (ordinal * _CELL_CAP + slot) * _TRIAL_CAP + _REFERENCE_TRIAL)


# ---------------------------------------------------------------------------
# per-experiment cell/trial definitions


def _effective_nu_list(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.nu_list is not None:
        return cfg.nu_list
    if cfg.experiment in ("cov_rates", "prec_rates"):
        return DEFAULT_NU_SETTING1 if cfg.setting == 1 else DEFAULT_NU_SETTING2
    if cfg.experiment == "eigengap_example":
        return DEFAULT_ETA_LIST
    return ()


def _effective_sigma_list(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.sigma_zeta_list is not None:
        return cfg.sigma_zeta_list
    if cfg.experiment in ("sim_ols", "sim_acls"):
        return DEFAULT_SIGMA_LIST
    return (0.1,)


def _run_matrix_trial(cfg: ExperimentConfig, nu: float, n: int, stream: RngStream, precision: bool):
    g = stream.generator()
    if cfg.setting == 1:
        model = make_sigma_setting1(nu, g)
    else:
        model = make_sigma_setting2(nu, cfg.dim)
    a = random_orthoprojector(model.dim, cfg.rank_a, g)
    b = complement(a)
    data = sample_gaussian(model, n, g)
    sigma = model.matrix
    sigma_hat = sample_covariance(data)
    if precision:
        if numerical_rank(sigma_hat, cfg.rtol) < numerical_rank(sigma, cfg.rtol):
            return [("dir_AA", None), ("dir_AB", None), ("dir_BB", None), ("iso", None)]
        s_dag = pinv_psd(sigma, cfg.rtol)
        s_hat_dag = pinv_psd(sigma_hat, cfg.rtol)
        return [
            ("dir_AA", normalized_prec_error(a.matrix, a.matrix, s_hat_dag, s_dag)),
            ("dir_AB", normalized_prec_error(a.matrix, b.matrix, s_hat_dag, s_dag)),
            ("dir_BB", normalized_prec_error(b.matrix, b.matrix, s_hat_dag, s_dag)),
            ("iso", spectral_norm(s_hat_dag.entries - s_dag.entries) / spectral_norm(s_dag.entries)),
        ]
    return [
        ("dir_AA", normalized_cov_error(a.matrix, a.matrix, sigma_hat, sigma)),
        ("dir_AB", normalized_cov_error(a.matrix, b.matrix, sigma_hat, sigma)),
        ("dir_BB", normalized_cov_error(b.matrix, b.matrix, sigma_hat, sigma)),
        ("iso", spectral_norm(sigma_hat.entries - sigma.entries) / spectral_norm(sigma.entries)),
    ]


def _run_sim_trial(cfg: ExperimentConfig, sigma_zeta: float, n: int, stream: RngStream, acls: bool):
    index = np.zeros(cfg.dim)
    index[0] = 1.0
    sim_cfg = SimConfig(
        index=index, link=cfg.link, sigma_zeta=sigma_zeta, cov=make_sigma_identity(cfg.dim)
    )
    data = generate_sim_data(sim_cfg, n, stream.generator())
    fit = ols_fit(data, cfg.rtol)
    ols_err = None if fit.direction is None else aligned_error(fit.direction, index)
    rows = [("ols_err", ols_err, None)]
    if acls:
        try:
            rescaled = data.with_response(rescale_responses(data.y))
            j_star, _ = select_level_count(rescaled, cfg.alpha, cfg.k_max, cfg.rtol)
            model = acls_fit(rescaled, j_star, cfg.alpha, cfg.rtol)
            rows.append(("acls_err", aligned_error(model.top_eigenvector, index), j_star))
            rows.append(("j_star", float(j_star), j_star))
        except (DegenerateResponseError, EmptyModelError):
            rows.append(("acls_err", None, None))
            rows.append(("j_star", None, None))
    return rows


def _run_eigengap_trial(cfg: ExperimentConfig, eta: float, n: int, stream: RngStream):
    g = stream.generator()
    x = g.standard_normal((n, cfg.dim))
    x[:, -1] *= eta
    # the example's estimator: uncentered second moment (rank one at N=1)
    second_moment = SymMatrix(x.T @ x / n)
    eig = sym_eigen(second_moment)
    lam = eig.eigenvalues
    # estimated bottom eigenspace = full eigenvalue group of lambda_min
    group = lam <= lam[-1] + 1e-9 * (1.0 + lam[0])
    v = eig.eigenvectors[:, group]
    q = np.eye(cfg.dim) - v @ v.T
    # population bottom eigenvector of diag(1,...,1,eta^2) is the last axis
    return [("subspace_err", float(np.linalg.norm(q[:, -1])))]


def _run_r_trial(cfg: ExperimentConfig, sigma_zeta: float, n: int, stream: RngStream, reference: np.ndarray):
    index = np.zeros(cfg.dim)
    index[0] = 1.0
    sim_cfg = SimConfig(
        index=index, link=cfg.link, sigma_zeta=sigma_zeta, cov=make_sigma_identity(cfg.dim)
    )
    data = generate_sim_data(sim_cfg, n, stream.generator())
    return [("r_err", float(np.linalg.norm(cross_covariance(data) - reference)))]


_R_REFERENCE_DRAWS = 10**6


def _r_reference(cfg: ExperimentConfig, sigma_zeta: float, slot: int) -> np.ndarray:
    """Cross-covariance reference from 1e6 draws at the reserved stream slot."""
    index = np.zeros(cfg.dim)
    index[0] = 1.0
    sim_cfg = SimConfig(
        index=index, link=cfg.link, sigma_zeta=sigma_zeta, cov=make_sigma_identity(cfg.dim)
    )
    data = generate_sim_data(sim_cfg, _R_REFERENCE_DRAWS, _reference_stream(cfg, slot).generator())
    return cross_covariance(data)


# ---------------------------------------------------------------------------
# generic cell/trial executor


def _execute(cfg: ExperimentConfig, cells, params, trial_fn, log=None) -> list[ResultRow]:
    """Run trials over parameter cells, possibly in threads, and assemble rows
    in canonical (cell, trial, metric) order with per-cell NA counters."""
    tasks = [(ci, t) for ci in range(len(cells)) for t in range(cfg.trials)]

    def run_task(task):
        ci, t = task
        return trial_fn(params[ci], trial_stream(cfg, ci, t))

    if cfg.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outputs = dict(zip(tasks, pool.map(run_task, tasks)))
    else:
        outputs = {task: run_task(task) for task in tasks}

    rows: list[ResultRow] = []
    for ci, cell in enumerate(cells):
        na_count = 0
        cell_rows: list[ResultRow] = []
        for t in range(cfg.trials):
            for item in sorted(outputs[(ci, t)], key=lambda r: r[0]):
                metric, value = item[0], item[1]
                j = item[2] if len(item) > 2 else None
                if value is None or not math.isfinite(value):
                    na_count += 1
                    value = None
                cell_rows.append(replace(cell, trial=t, metric=metric, value=value, j=j))
        if na_count:
            cell_rows.append(replace(cell, metric="na_count", value=float(na_count)))
        rows.extend(cell_rows)
        if log is not None:
            print(f"[{cfg.experiment}] cell {ci + 1}/{len(cells)} done", file=log)
    return rows


# ---------------------------------------------------------------------------
# experiment entry points


def run_precision_experiment(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    return _run_matrix_experiment(cfg, precision=True, log=log)


def run_covariance_experiment(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    return _run_matrix_experiment(cfg, precision=False, log=log)


def _run_matrix_experiment(cfg: ExperimentConfig, precision: bool, log=None) -> list[ResultRow]:
    nus = _effective_nu_list(cfg)
    dim = 10 if cfg.setting == 1 else cfg.dim
    cells = [
        ResultRow(experiment=cfg.experiment, setting=str(cfg.setting), nu=nu, dim=dim, n=n)
        for nu in nus
        for n in cfg.n_list
    ]
    _check_cell_count(cells)
    params = [(nu, n) for nu in nus for n in cfg.n_list]
    return _execute(
        cfg, cells, params, lambda p, st: _run_matrix_trial(cfg, p[0], p[1], st, precision), log
    )


def run_sim_experiment(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    acls = cfg.experiment == "sim_acls"
    sigmas = _effective_sigma_list(cfg)
    cells = [
        ResultRow(experiment=cfg.experiment, link=cfg.link, sigma_zeta=s, dim=cfg.dim, n=n)
        for s in sigmas
        for n in cfg.n_list
    ]
    _check_cell_count(cells)
    params = [(s, n) for s in sigmas for n in cfg.n_list]
    return _execute(
        cfg, cells, params, lambda p, st: _run_sim_trial(cfg, p[0], p[1], st, acls), log
    )


def run_eigengap_example(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    etas = _effective_nu_list(cfg)
    cells = [
        ResultRow(experiment=cfg.experiment, nu=eta, dim=cfg.dim, n=n)
        for eta in etas
        for n in cfg.n_list
    ]
    _check_cell_count(cells)
    params = [(eta, n) for eta in etas for n in cfg.n_list]
    return _execute(
        cfg, cells, params, lambda p, st: _run_eigengap_trial(cfg, p[0], p[1], st), log
    )


def run_r_concentration(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    sigmas = _effective_sigma_list(cfg)
    cells = [
        ResultRow(experiment=cfg.experiment, link=cfg.link, sigma_zeta=s, dim=cfg.dim, n=n)
        for s in sigmas
        for n in cfg.n_list
    ]
    _check_cell_count(cells)
    references = {si: _r_reference(cfg, s, si) for si, s in enumerate(sigmas)}
    params = [(si, s, n) for si, s in enumerate(sigmas) for n in cfg.n_list]
    return _execute(
        cfg,
        cells,
        params,
        lambda p, st: _run_r_trial(cfg, p[1], p[2], st, references[p[0]]),
        log,
    )


def _check_cell_count(cells) -> None:
    if len(cells) >= _CELL_CAP:
        raise ExperimentError(f"too many parameter cells ({len(cells)} >= {_CELL_CAP})")


RUNNERS = {
    "cov_rates": run_covariance_experiment,
    "prec_rates": run_precision_experiment,
    "sim_ols": run_sim_experiment,
    "sim_acls": run_sim_experiment,
    "eigengap_example": run_eigengap_example,
    "r_concentration": run_r_concentration,
}


def run(cfg: ExperimentConfig, log=None) -> list[ResultRow]:
    return RUNNERS[cfg.experiment](cfg, log=log)


# ---------------------------------------------------------------------------
# CSV serialization


def _provenance_lines(cfg: ExperimentConfig) -> list[str]:
    def fmt_list(vals):
        return "" if vals is None else ",".join(repr(float(v)) for v in vals)

    pairs = [
        ("tool", f"dircov {__version__}"),
        ("experiment", cfg.experiment),
        ("seed", str(cfg.seed)),
        ("setting", str(cfg.setting)),
        ("dim", str(cfg.dim)),
        ("nu_list", fmt_list(_effective_nu_list(cfg) or None)),
        ("n_list", ",".join(str(n) for n in cfg.n_list)),
        ("trials", str(cfg.trials)),
        ("alpha", repr(float(cfg.alpha))),
        ("sigma_zeta_list", fmt_list(_effective_sigma_list(cfg) or None)),
        ("link", cfg.link),
        ("k_max", str(cfg.k_max)),
        ("rtol", "" if cfg.rtol is None else repr(float(cfg.rtol))),
        ("rank_a", str(cfg.rank_a)),
    ]
    lines = [f"# provenance: {k}={v}" for k, v in pairs]
    if cfg.experiment in ("cov_rates", "prec_rates") and cfg.setting == 2:
        for nu in _effective_nu_list(cfg):
            value = nu ** (cfg.dim - 1)
            lines.append(f"# provenance: sigma_entry_1_{cfg.dim}[nu={repr(float(nu))}]={repr(float(value))}")
    return lines


def write_csv(cfg: ExperimentConfig, rows: list[ResultRow], fh) -> None:
    for line in _provenance_lines(cfg):
        fh.write(line + "\n")
    fh.write(CSV_HEADER + "\n")
    for row in rows:
        fh.write(row.to_csv_line() + "\n")


def csv_text(cfg: ExperimentConfig, rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    write_csv(cfg, rows, buf)
    return buf.getvalue()


def read_csv_rows(fh) -> list[dict]:
    """Parse harness-schema CSV back into dicts (provenance lines skipped)."""
    header = None
    out = []
    for line in fh:
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if header != CSV_HEADER.split(","):
                raise ValueError("CSV header does not match the harness schema")
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"malformed CSV row: {line!r}")
        out.append(dict(zip(header, parts)))
    if header is None:
        raise ValueError("CSV input has no header")
    return out


def slope_table(rows: list[dict], by: tuple[str, ...] = ()) -> list[dict]:
    """One log-log SlopeFit per (metric [+ group keys]) over trial means by N.

    Rows with NA values and the na_count bookkeeping rows are ignored. Groups
    with fewer than 3 N points or nonpositive means yield an NA row.
    """
    allowed = {"nu", "link", "sigma_zeta"}
    bad = set(by) - allowed
    if bad:
        raise ValueError(f"cannot group by {sorted(bad)}; allowed: {sorted(allowed)}")
    groups: dict[tuple, dict[int, list[float]]] = {}
    for row in rows:
        if row["metric"] == "na_count" or row["value"] == "NA":
            continue
        key = (row["metric"],) + tuple(row[k] for k in by)
        groups.setdefault(key, {}).setdefault(int(row["N"]), []).append(float(row["value"]))
    table = []
    for key in sorted(groups):
        means = {n: float(np.mean(vs)) for n, vs in groups[key].items()}
        ns = sorted(means)
        entry = {"metric": key[0], **{k: v for k, v in zip(by, key[1:])}}
        errs = [means[n] for n in ns]
        if len(ns) >= 3 and all(e > 0 for e in errs):
            fit = loglog_slope(ns, errs)
            entry.update(slope=repr(fit.slope), intercept=repr(fit.intercept), r_squared=repr(fit.r_squared))
        else:
            entry.update(slope="NA", intercept="NA", r_squared="NA")
        table.append(entry)
    return table
