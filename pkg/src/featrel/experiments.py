"""Error experiments on linear models with known attributions.

For ``f(x) = a0 + sum_j a_j x_j`` the attribution of ``x_j`` relative to
``E[f(X)]`` is ``a_j (x_j - E[X_j])``. The experiments compute Shapley values
under several value functions and record ``phi_j - a_j (x_j - E[X_j])``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import SampleMatrix, make_rank1_gaussian, sample_gaussian, spawn_rng
from .errors import FeatrelError, SingularMatrixError, UsageError
from .explain import explain_instance
from .model import LinearModel, analytic_linear_attribution, fit_linear_ols
from .valuefn import ValueFunctionSpec

__all__ = [
    "ExperimentConfig",
    "ErrorRecord",
    "ExperimentResult",
    "run_gaussian_experiment",
    "run_kernel_experiment",
    "records_to_csv",
    "read_records_csv",
    "text_histogram",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("run", "feature", "method", "phi", "truth", "error")
# CLI names of the value functions
METHOD_KINDS = {
    "marginal": "marginal-mc",
    "cond-gauss": "conditional-gaussian",
    "cond-kernel": "conditional-kernel",
    "exact-marginal": "exact-discrete-marginal",
    "exact-conditional": "exact-discrete-conditional",
}

# stream tags
_S_COEF, _S_COV, _S_X, _S_BG, _S_VALUE, _S_COAL, _S_KCOLS, _S_KROW = range(1, 9)


@dataclass
class ExperimentConfig:
    dims: int = 3
    zero_coefficient_indices: tuple = (1,)  # 1-based
    runs: int = 200
    sample_count: int = 1000
    coalition_budget: int | None = None  # None: exact enumeration
    value_kinds: tuple = ("marginal", "cond-gauss")
    seed: int = 0
    instance: str = "gaussian"  # or "uniform" on [-2, 2]^n
    workers: int = 1

    def __post_init__(self):
        self.zero_coefficient_indices = tuple(int(i) for i in self.zero_coefficient_indices)
        self.value_kinds = tuple(self.value_kinds)
        if self.dims < 1:
            raise UsageError("dims must be >= 1", module="cli")
        if self.runs < 1:
            raise UsageError("runs must be >= 1", module="cli")
        if any(not 1 <= i <= self.dims for i in self.zero_coefficient_indices):
            raise UsageError(f"zero-coefficient indices must lie in 1..{self.dims}", module="cli")
        if self.instance not in ("gaussian", "uniform"):
            raise UsageError("instance must be 'gaussian' or 'uniform'", module="cli")
        for k in self.value_kinds:
            if k not in ("marginal", "cond-gauss"):
                raise UsageError(f"Gaussian experiment supports marginal and cond-gauss, not {k!r}", module="cli")


@dataclass(frozen=True)
class ErrorRecord:
    run: int
    feature: int  # 1-based
    method: str
    phi: float
    truth: float
    error: float

    @classmethod
    def make(cls, run, feature, method, phi, truth):
        phi, truth = float(phi) + 0.0, float(truth) + 0.0  # no negative zeros in output
        return cls(run, feature, method, phi, truth, phi - truth)


@dataclass
class ExperimentResult:
    records: list
    summary: dict
    failures: list = field(default_factory=list)
    efficiency_residuals: dict = field(default_factory=dict)

    def errors(self, method: str, features=None) -> np.ndarray:
        feats = None if features is None else set(features)
        return np.array(
            [r.error for r in self.records if r.method == method and (feats is None or r.feature in feats)]
        )

    def to_csv(self) -> str:
        return records_to_csv(self.records)


def _canonical(records):
    return sorted(records, key=lambda r: (r.run, r.feature, r.method))


def _mae(errs):
    return float(np.mean(np.abs(errs))) if len(errs) else math.nan


def _summarize(records, methods, zero_features, failures, runs, extra=None):
    summary = {"runs": runs, "failed_runs": len(failures), "methods": {}}
    for m in methods:
        errs = np.array([r.error for r in records if r.method == m])
        entry = {"mae": _mae(errs), "max_abs_error": float(np.max(np.abs(errs))) if errs.size else math.nan}
        if zero_features:
            z = np.array([r.error for r in records if r.method == m and r.feature in zero_features])
            entry["mae_zero_coef"] = _mae(z)
            entry["max_abs_error_zero_coef"] = float(np.max(np.abs(z))) if z.size else math.nan
        summary["methods"][m] = entry
    if extra:
        summary.update(extra)
    return summary


# ---------------------------------------------------------------------------
# Gaussian experiment
# ---------------------------------------------------------------------------


def _gaussian_run(cfg: ExperimentConfig, run: int):
    n = cfg.dims
    alpha = spawn_rng(cfg.seed, run, _S_COEF).standard_normal(n)
    for i in cfg.zero_coefficient_indices:
        alpha[i - 1] = 0.0
    model = LinearModel(0.0, alpha)
    gauss = make_rank1_gaussian(n, int(spawn_rng(cfg.seed, run, _S_COV).integers(2**63)))
    x_rng = spawn_rng(cfg.seed, run, _S_X)
    if cfg.instance == "gaussian":
        x = gauss.mean + gauss.sqrt_factor() @ x_rng.standard_normal(n)
    else:
        x = x_rng.uniform(-2.0, 2.0, n)
    truth = analytic_linear_attribution(model, x, gauss.mean)
    mode = "exact" if cfg.coalition_budget is None or cfg.coalition_budget >= 1 << n else "wls"
    coal_seed = int(spawn_rng(cfg.seed, run, _S_COAL).integers(2**63))
    value_seed = int(spawn_rng(cfg.seed, run, _S_VALUE).integers(2**63))

    records, residuals = [], {}
    for method in cfg.value_kinds:
        if method == "marginal":
            bg = sample_gaussian(gauss, cfg.sample_count, int(spawn_rng(cfg.seed, run, _S_BG).integers(2**63)))
            spec = ValueFunctionSpec("marginal-mc", background=bg, seed=value_seed)
        else:
            spec = ValueFunctionSpec(
                "conditional-gaussian", gaussian=gauss, sample_count=cfg.sample_count, seed=value_seed
            )
        res = explain_instance(model, x, spec, mode, cfg.coalition_budget, seed=coal_seed)
        residuals[method] = float(abs(res.phi.sum() - (res.diagnostics["f_x"] - res.baseline)))
        for j in range(n):
            records.append(ErrorRecord.make(run, j + 1, method, res.phi[j], truth[j]))
    return records, residuals


def _gaussian_run_safe(args):
    cfg, run = args
    try:
        return run, _gaussian_run(cfg, run), None
    except FeatrelError as exc:
        return run, None, str(exc)


def run_gaussian_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Linear model with zero intercept, rank-one Gaussian features.

    Per run: coefficients are standard normal with the configured indices
    forced to zero; the covariance is ``c c^T`` with fresh standard-normal
    ``c``; the instance is drawn from the same Gaussian (or uniformly). The
    truth uses the exact mean, zero.
    """
    jobs = [(cfg, r) for r in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_gaussian_run_safe, jobs))
    else:
        outcomes = [_gaussian_run_safe(j) for j in jobs]
    records, failures, residuals = [], [], {m: 0.0 for m in cfg.value_kinds}
    for run, out, err in outcomes:
        if err is not None:
            log.warning("run %d failed: %s", run, err)
            failures.append({"run": run, "error": err})
            continue
        recs, res = out
        records.extend(recs)
        for m, v in res.items():
            residuals[m] = max(residuals[m], v)
    records = _canonical(records)
    summary = _summarize(
        records, cfg.value_kinds, set(cfg.zero_coefficient_indices), failures, cfg.runs,
        {"experiment": "gaussian", "config": asdict(cfg), "max_efficiency_residual": residuals},
    )
    return ExperimentResult(records, summary, failures, residuals)


# ---------------------------------------------------------------------------
# kernel experiment
# ---------------------------------------------------------------------------


def run_kernel_experiment(
    data: SampleMatrix,
    runs: int = 200,
    bandwidth: float = 0.1,
    neighbor_count: int | None = None,
    seed: int = 0,
    sample_count: int = 1000,
    predictors: int = 3,
    max_retries: int = 10,
) -> ExperimentResult:
    """Marginal vs. kernel-conditional Shapley values on a data set.

    Per run: pick ``predictors + 1`` random columns, fit OLS of the last on
    the others over the whole data set, pick a random row as the instance,
    explain it using the first ``sample_count`` rows as background, and
    compare with ``a_j (x_j - mean_j)`` where the means use every row. A
    run whose fit is singular is redrawn up to ``max_retries`` times.
    """
    if runs < 1:
        raise UsageError("runs must be >= 1", module="cli")
    k, p = data.n_rows, data.n_features
    if p < predictors + 1:
        raise UsageError(f"data set needs at least {predictors + 1} columns, has {p}", module="cli")
    notes = []
    if k < sample_count + 1:
        notes.append(f"only {k} rows; background uses all of them")
        log.warning(notes[-1])
    bg_rows = data.values[: min(sample_count, k)]
    means = data.values.mean(axis=0)
    methods = ("marginal", "cond-kernel")
    records, failures = [], []
    residuals = dict.fromkeys(methods, 0.0)
    for run in range(runs):
        rng = spawn_rng(seed, run, _S_KCOLS)
        model = None
        for attempt in range(max_retries + 1):
            cols = rng.choice(p, predictors + 1, replace=False)
            try:
                model = fit_linear_ols(data, int(cols[-1]), [int(c) for c in cols[:-1]])
                break
            except SingularMatrixError as exc:
                log.info("run %d attempt %d: %s", run, attempt, exc)
        if model is None:
            failures.append({"run": run, "error": "OLS singular after retries"})
            continue
        use = [int(c) for c in cols[:-1]]
        x = data.values[int(spawn_rng(seed, run, _S_KROW).integers(k)), use]
        truth = analytic_linear_attribution(model, x, means[use])
        bg = SampleMatrix(bg_rows[:, use])
        specs = {
            "marginal": ValueFunctionSpec("marginal-mc", background=bg),
            "cond-kernel": ValueFunctionSpec(
                "conditional-kernel", background=bg, bandwidth=bandwidth, neighbor_count=neighbor_count
            ),
        }
        try:
            results = {m: explain_instance(model, x, specs[m]) for m in methods}
        except FeatrelError as exc:
            failures.append({"run": run, "error": str(exc)})
            continue
        for m, res in results.items():
            residuals[m] = max(residuals[m], float(abs(res.phi.sum() - (res.diagnostics["f_x"] - res.baseline))))
            for j in range(predictors):
                records.append(ErrorRecord.make(run, j + 1, m, res.phi[j], truth[j]))
    records = _canonical(records)
    summary = _summarize(
        records, methods, set(), failures, runs,
        {
            "experiment": "kernel",
            "bandwidth": bandwidth,
            "neighbor_count": neighbor_count,
            "sample_count": min(sample_count, k),
            "seed": seed,
            "notes": notes,
            "max_efficiency_residual": residuals,
        },
    )
    return ExperimentResult(records, summary, failures, residuals)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.run, r.feature, r.method, repr(r.phi), repr(r.truth), repr(r.error)])
    return buf.getvalue()


def read_records_csv(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise UsageError(f"expected header {','.join(CSV_HEADER)}", module="cli")
    return [
        ErrorRecord(int(r[0]), int(r[1]), r[2], float(r[3]), float(r[4]), float(r[5])) for r in rows[1:]
    ]


def summary_json(result: ExperimentResult) -> str:
    return json.dumps(result.summary, indent=2, sort_keys=True, default=str)


def text_histogram(values, bins: int = 20, width: int = 40, label: str = "") -> str:
    """Fixed-width text histogram for a quick look at an error distribution."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return f"{label}: (no data)\n"
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    top = counts.max()
    lines = [f"{label} (n={values.size})"] if label else []
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        bar = "#" * int(round(width * c / top)) if top else ""
        lines.append(f"[{a:+.3e}, {b:+.3e}) {c:6d} {bar}")
    return "\n".join(lines) + "\n"
