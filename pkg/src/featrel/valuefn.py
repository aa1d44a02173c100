"""Simplified functions f_T(x): what a model predicts when only the features
in a coalition T are known.

Two families are implemented. The *marginal* (interventional) value keeps
``x_T`` and draws the dropped features from their unconditional
distribution, ``E[f(x_T, X_Tbar)]``. The *conditional* (observational) value
draws them given ``X_T = x_T``, ``E[f(x_T, X_Tbar) | X_T = x_T]``. Only the
former leaves a feature the model ignores with zero Shapley value.

Estimators:

* ``marginal-mc``: average over background rows.
* ``conditional-gaussian``: exact Gaussian conditioning, then Monte Carlo.
* ``conditional-kernel``: Mahalanobis-kernel weighted average of
  background rows.
* ``exact-discrete-marginal`` / ``exact-discrete-conditional``: finite sums
  over a discrete law.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .data import (
    DiscreteDistribution,
    GaussianSpec,
    SampleMatrix,
    _psd_root,
    spawn_rng,
)
from .errors import DimensionError, NumericError, SingularMatrixError, UsageError, WeightUnderflowError
from .model import ModelFunction

__all__ = [
    "Coalition",
    "ValueFunctionSpec",
    "CoalitionValueTable",
    "marginal_mc",
    "gaussian_condition",
    "conditional_gaussian_value",
    "conditional_kernel_value",
    "kernel_weights",
    "exact_discrete_value",
    "coalition_value",
    "build_value_table",
    "all_coalitions",
]

_MOD = "valuefn"
PINV_FLOOR = 1e-10
DEFAULT_SAMPLES = 1000
DEFAULT_BANDWIDTH = 0.1

KINDS = (
    "marginal-mc",
    "conditional-gaussian",
    "conditional-kernel",
    "exact-discrete-marginal",
    "exact-discrete-conditional",
)

# stream tags for spawn_rng
_STREAM_SUBSAMPLE = 1
_STREAM_COALITION = 2


@dataclass(frozen=True, order=True)
class Coalition:
    """A subset of ``{0, ..., n-1}`` stored as an integer bitmask."""

    bits: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.bits < 0 or self.bits >> self.n:
            raise UsageError(f"bits {self.bits:#x} not a subset of {self.n} features", module=_MOD)

    @classmethod
    def of(cls, indices: Iterable[int], n: int) -> "Coalition":
        bits = 0
        for i in indices:
            if not 0 <= i < n:
                raise UsageError(f"feature index {i} out of range for n={n}", module=_MOD)
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    @property
    def indices(self) -> tuple:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    @property
    def mask(self) -> np.ndarray:
        return (self.bits >> np.arange(self.n)) & 1 == 1

    def __len__(self):
        return self.bits.bit_count()

    def __contains__(self, i):
        return bool(self.bits >> i & 1)

    def complement(self) -> "Coalition":
        return Coalition(((1 << self.n) - 1) ^ self.bits, self.n)

    def with_(self, i: int) -> "Coalition":
        return Coalition(self.bits | 1 << i, self.n)

    def without(self, i: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << i), self.n)

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    @property
    def is_full(self) -> bool:
        return self.bits == (1 << self.n) - 1

    def __repr__(self):
        return f"Coalition({{{', '.join(str(i) for i in self.indices)}}}, n={self.n})"


def all_coalitions(n: int) -> list:
    return [Coalition(b, n) for b in range(1 << n)]


def _check_instance(model, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.arity:
        raise DimensionError(f"instance has length {x.size}, model arity is {model.arity}", module=_MOD)
    return x


def _check_coalition(T, n):
    if T.n != n:
        raise DimensionError(f"coalition over {T.n} features, model has {n}", module=_MOD)


def _plug(x, T, rows):
    # rows carry the dropped features; coordinates in T are overwritten with x_T
    Z = np.array(rows, dtype=float, copy=True)
    m = T.mask
    Z[:, m] = x[m]
    return Z


# ---------------------------------------------------------------------------
# marginal
# ---------------------------------------------------------------------------


def marginal_mc(
    model: ModelFunction,
    x,
    T: Coalition,
    background: SampleMatrix,
    fixed_background: bool = True,
    sample_count: int | None = None,
    seed: int = 0,
) -> float:
    """``(1/K) sum_k f(x_T, b^k_Tbar)`` over background rows ``b^k``.

    With ``fixed_background`` the same rows serve every coalition, which
    couples the estimates: for a linear model the contribution of feature i
    is then exactly ``a_i * (x_i - mean of background column i)``. Without
    it, ``sample_count`` rows are resampled with replacement per coalition.
    """
    x = _check_instance(model, x)
    _check_coalition(T, model.arity)
    if background.n_features != model.arity:
        raise DimensionError(
            f"background has {background.n_features} columns, model arity is {model.arity}", module=_MOD
        )
    if T.is_full:
        return model.evaluate(x)
    rows = background.values
    if fixed_background:
        if sample_count is not None and sample_count < rows.shape[0]:
            pick = spawn_rng(seed, _STREAM_SUBSAMPLE).choice(rows.shape[0], sample_count, replace=False)
            rows = rows[np.sort(pick)]
    else:
        k = sample_count or rows.shape[0]
        pick = spawn_rng(seed, _STREAM_COALITION, T.bits).integers(0, rows.shape[0], k)
        rows = rows[pick]
    return float(model.evaluate_batch(_plug(x, T, rows)).mean())


# ---------------------------------------------------------------------------
# Gaussian conditioning
# ---------------------------------------------------------------------------


def _pinv_psd(S, floor=PINV_FLOOR):
    """Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below
    ``floor * largest``. Returns (pinv, eigenvalues)."""
    w, V = np.linalg.eigh(S)
    top = w[-1] if w.size else 0.0
    if w.size and w[0] < -floor * max(abs(top), 1.0):
        raise SingularMatrixError(
            f"matrix to invert is indefinite (eigenvalue {w[0]:.3g}, floor {floor * top:.3g})",
            module=_MOD,
        )
    keep = w > floor * top if top > 0 else np.zeros_like(w, dtype=bool)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return (V * inv_w) @ V.T, w


def gaussian_condition(spec: GaussianSpec, T: Coalition, x_T) -> GaussianSpec:
    """Law of ``X_Tbar`` given ``X_T = x_T`` for ``X ~ spec``.

    Uses the partitioned formulas

        mean = mu_Tbar + S_Tbar,T S_TT^+ (x_T - mu_T)
        cov  = S_Tbar,Tbar - S_Tbar,T S_TT^+ S_T,Tbar

    where ``S_TT^+`` is an eigenvalue pseudo-inverse, so rank-deficient
    covariances are allowed. ``x_T`` lists the values of the features of
    ``T`` in increasing index order.
    """
    if T.n != spec.dim:
        raise DimensionError(f"coalition over {T.n} features, Gaussian has {spec.dim}", module=_MOD)
    if T.is_empty or T.is_full:
        raise UsageError("conditioning needs a non-empty proper coalition", module=_MOD)
    x_T = np.asarray(x_T, dtype=float).reshape(-1)
    t = T.mask
    if x_T.size != t.sum():
        raise DimensionError(f"x_T has length {x_T.size}, coalition has {t.sum()} features", module=_MOD)
    mu, S = spec.mean, spec.cov
    S_tt = S[np.ix_(t, t)]
    S_bt = S[np.ix_(~t, t)]
    S_bb = S[np.ix_(~t, ~t)]
    P, _ = _pinv_psd(S_tt)
    gain = S_bt @ P
    mean = mu[~t] + gain @ (x_T - mu[t])
    cov = S_bb - gain @ S_bt.T
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    # eigenvalues within round-off of zero (relative to the full covariance) are set to zero
    floor = PINV_FLOOR * max(float(np.trace(S)), 0.0)
    if w[0] < -floor:
        raise NumericError(f"conditional covariance not PSD (eigenvalue {w[0]:.3g})", module=_MOD)
    small = w <= floor
    if small.any():
        w = np.where(small, 0.0, w)
        cov = (V * w) @ V.T
        cov = 0.5 * (cov + cov.T)
    return GaussianSpec(mean, cov)


def conditional_gaussian_value(
    model: ModelFunction,
    x,
    T: Coalition,
    spec: GaussianSpec,
    K: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> float:
    """Monte-Carlo estimate of ``E[f(x_T, X_Tbar) | X_T = x_T]`` under a Gaussian.

    The draw for coalition T uses its own stream derived from (seed, T), so
    results do not depend on evaluation order.
    """
    x = _check_instance(model, x)
    _check_coalition(T, model.arity)
    if spec.dim != model.arity:
        raise DimensionError(f"Gaussian has dimension {spec.dim}, model arity is {model.arity}", module=_MOD)
    if K < 1:
        raise UsageError("sample count must be >= 1", module=_MOD)
    if T.is_full:
        return model.evaluate(x)
    rng = spawn_rng(seed, _STREAM_COALITION, T.bits)
    if T.is_empty:
        rows = spec.mean + rng.standard_normal((K, spec.dim)) @ spec.sqrt_factor().T
        return float(model.evaluate_batch(rows).mean())
    cond = gaussian_condition(spec, T, x[T.mask])
    root, _ = _psd_root(cond.cov)
    draws = cond.mean + rng.standard_normal((K, cond.dim)) @ root.T
    Z = np.empty((K, model.arity))
    Z[:, T.mask] = x[T.mask]
    Z[:, ~T.mask] = draws
    return float(model.evaluate_batch(Z).mean())


# ---------------------------------------------------------------------------
# kernel conditioning
# ---------------------------------------------------------------------------


def kernel_weights(x, T: Coalition, background: SampleMatrix, bandwidth: float) -> np.ndarray:
    """Gaussian kernel weights of background rows relative to ``x`` on the
    features in ``T``.

    ``d^2 = (x_T - b_T)' S_T^{-1} (x_T - b_T) / |T|`` with ``S_T`` the sample
    covariance of the background's T columns; weight ``exp(-d^2 / (2 s2))``.
    """
    if bandwidth <= 0:
        raise UsageError("bandwidth must be positive", module=_MOD)
    x = np.asarray(x, dtype=float)
    t = T.mask
    B = background.values[:, t]
    if B.shape[0] < 2:
        raise UsageError("kernel weights need at least two background rows", module=_MOD)
    S = np.atleast_2d(np.cov(B, rowvar=False))
    if np.trace(S) <= 0:
        raise SingularMatrixError(
            f"background columns {list(T.indices)} have zero variance", module=_MOD
        )
    P, _ = _pinv_psd(S)
    D = B - x[t]
    d2 = np.einsum("ij,jk,ik->i", D, P, D) / len(T)
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * bandwidth))


def conditional_kernel_value(
    model: ModelFunction,
    x,
    T: Coalition,
    background: SampleMatrix,
    bandwidth: float = DEFAULT_BANDWIDTH,
    neighbor_count: int | None = None,
) -> float:
    """Kernel-weighted estimate of ``E[f(x_T, X_Tbar) | X_T = x_T]``.

    Only the ``neighbor_count`` rows with the largest weights enter the
    weighted average (all rows when ``None``). The result is a convex
    combination of ``f(x_T, b_Tbar)`` over those rows.
    """
    x = _check_instance(model, x)
    _check_coalition(T, model.arity)
    if background.n_features != model.arity:
        raise DimensionError(
            f"background has {background.n_features} columns, model arity is {model.arity}", module=_MOD
        )
    if T.is_full:
        return model.evaluate(x)
    rows = background.values
    if T.is_empty:
        return float(model.evaluate_batch(rows).mean())
    w = kernel_weights(x, T, background, bandwidth)
    if neighbor_count is not None and neighbor_count < w.size:
        if neighbor_count < 1:
            raise UsageError("neighbor_count must be >= 1", module=_MOD)
        # stable sort keeps ties in row order
        top = np.argsort(-w, kind="stable")[:neighbor_count]
        w, rows = w[top], rows[top]
    total = w.sum()
    if not total > 0:
        raise WeightUnderflowError(
            f"all kernel weights underflow to zero; increase the bandwidth (now {bandwidth})"
        )
    fz = model.evaluate_batch(_plug(x, T, rows))
    # shifting by one value keeps constant inputs exact and limits cancellation
    return float(fz[0] + w @ (fz - fz[0]) / total)


# ---------------------------------------------------------------------------
# exact discrete
# ---------------------------------------------------------------------------


def exact_discrete_value(
    model: ModelFunction,
    x,
    T: Coalition,
    dist: DiscreteDistribution,
    mode: str = "marginal",
) -> float:
    """Exact marginal or conditional simplified function under a discrete law."""
    if mode not in ("marginal", "conditional"):
        raise UsageError(f"mode must be 'marginal' or 'conditional', got {mode!r}", module=_MOD)
    x = _check_instance(model, x)
    _check_coalition(T, model.arity)
    if dist.dim != model.arity:
        raise DimensionError(f"distribution has dimension {dist.dim}, model arity is {model.arity}", module=_MOD)
    if T.is_full:
        return model.evaluate(x)
    pts, probs = dist.points, dist.probs
    if mode == "conditional" and not T.is_empty:
        hit = np.all(pts[:, T.mask] == x[T.mask], axis=1)
        mass = probs[hit].sum()
        if mass <= 0:
            raise NumericError(
                f"conditioning event X_T = {x[T.mask].tolist()} has probability zero", module=_MOD
            )
        pts, probs = pts[hit], probs[hit] / mass
    return float(probs @ model.evaluate_batch(_plug(x, T, pts)))


# ---------------------------------------------------------------------------
# value-function settings + tables
# ---------------------------------------------------------------------------

_SOURCE_FOR_KIND = {
    "marginal-mc": "background",
    "conditional-kernel": "background",
    "conditional-gaussian": "gaussian",
    "exact-discrete-marginal": "discrete",
    "exact-discrete-conditional": "discrete",
}


@dataclass(frozen=True, eq=False)
class ValueFunctionSpec:
    """Which estimator to use for f_T(x) and its configuration."""

    kind: str
    background: SampleMatrix | None = None
    gaussian: GaussianSpec | None = None
    discrete: DiscreteDistribution | None = None
    sample_count: int | None = None
    bandwidth: float | None = None
    neighbor_count: int | None = None
    fixed_background: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown value-function kind {self.kind!r}; choose from {KINDS}", module=_MOD)
        need = _SOURCE_FOR_KIND[self.kind]
        for name in ("background", "gaussian", "discrete"):
            present = getattr(self, name) is not None
            if name == need and not present:
                raise UsageError(f"{self.kind} requires {name}", module=_MOD)
            if name != need and present:
                raise UsageError(f"{self.kind} does not take {name}", module=_MOD)
        if self.kind == "conditional-kernel":
            if self.bandwidth is None:
                object.__setattr__(self, "bandwidth", DEFAULT_BANDWIDTH)
            if not self.bandwidth > 0:
                raise UsageError("bandwidth must be > 0", module=_MOD)
            if self.neighbor_count is not None and self.neighbor_count < 1:
                raise UsageError("neighbor_count must be >= 1", module=_MOD)
        elif self.bandwidth is not None or self.neighbor_count is not None:
            raise UsageError(f"{self.kind} does not take bandwidth/neighbor_count", module=_MOD)
        if self.kind == "conditional-gaussian" and self.sample_count is None:
            object.__setattr__(self, "sample_count", DEFAULT_SAMPLES)
        if self.sample_count is not None and self.sample_count < 1:
            raise UsageError("sample_count must be >= 1", module=_MOD)

    @property
    def dim(self) -> int:
        src = self.background or self.gaussian or self.discrete
        return src.n_features if isinstance(src, SampleMatrix) else src.dim

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed}
        if self.background is not None:
            d["background"] = self.background.values.tolist()
        if self.gaussian is not None:
            d["gaussian"] = self.gaussian.to_dict()
        if self.discrete is not None:
            d["discrete"] = self.discrete.to_list()
        for name in ("sample_count", "bandwidth", "neighbor_count"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.kind == "marginal-mc":
            d["fixed_background"] = self.fixed_background
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ValueFunctionSpec":
        d = dict(d)
        if "background" in d:
            d["background"] = SampleMatrix(np.asarray(d["background"], dtype=float))
        if "gaussian" in d:
            d["gaussian"] = GaussianSpec.from_dict(d["gaussian"])
        if "discrete" in d:
            d["discrete"] = DiscreteDistribution.from_list(d["discrete"])
        return cls(**d)


def coalition_value(model: ModelFunction, x, T: Coalition, spec: ValueFunctionSpec) -> float:
    """f_T(x) under the estimator described by ``spec``."""
    k = spec.kind
    if k == "marginal-mc":
        return marginal_mc(model, x, T, spec.background, spec.fixed_background, spec.sample_count, spec.seed)
    if k == "conditional-gaussian":
        return conditional_gaussian_value(model, x, T, spec.gaussian, spec.sample_count, spec.seed)
    if k == "conditional-kernel":
        return conditional_kernel_value(model, x, T, spec.background, spec.bandwidth, spec.neighbor_count)
    mode = "marginal" if k == "exact-discrete-marginal" else "conditional"
    return exact_discrete_value(model, x, T, spec.discrete, mode)


@dataclass(frozen=True, eq=False)
class CoalitionValueTable:
    """Set function ``g(T) = f_T(x) - f_empty(x)`` on a collection of coalitions.

    ``baseline`` holds ``f_empty(x)``, the estimate of ``E[f(X)]``.
    """

    n: int
    values: Mapping[int, float]
    x: np.ndarray | None = None
    baseline: float = 0.0
    kind: str = "set-function"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = dict(self.values)
        vals[0] = 0.0
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, g, n: int | None = None) -> "CoalitionValueTable":
        """Table from a dense array indexed by coalition bitmask; ``g[0]`` is ignored."""
        g = np.asarray(g, dtype=float).reshape(-1)
        if n is None:
            n = g.size.bit_length() - 1
        if g.size != 1 << n:
            raise DimensionError(f"dense set function needs 2**{n} entries, got {g.size}", module=_MOD)
        return cls(n, {b: float(v) for b, v in enumerate(g)})

    def __contains__(self, T: Coalition) -> bool:
        return T.bits in self.values

    def __len__(self):
        return len(self.values)

    def g(self, T: Coalition) -> float:
        try:
            return self.values[T.bits]
        except KeyError:
            raise UsageError(f"coalition {T} missing from value table", module=_MOD) from None

    def contribution(self, i: int, T: Coalition) -> float:
        """``C(i | T) = g(T + {i}) - g(T)`` for ``i`` not in ``T``."""
        if i in T:
            raise UsageError(f"feature {i} already in {T}", module=_MOD)
        return self.g(T.with_(i)) - self.g(T)

    @property
    def g_full(self) -> float:
        return self.values[(1 << self.n) - 1]

    def dense(self) -> np.ndarray:
        """All 2**n values indexed by bitmask; raises if any coalition is missing."""
        size = 1 << self.n
        if len(self.values) < size:
            missing = next(b for b in range(size) if b not in self.values)
            raise UsageError(
                f"value table lacks coalition {Coalition(missing, self.n)} needed for exact enumeration",
                module=_MOD,
            )
        return np.fromiter((self.values[b] for b in range(size)), dtype=float, count=size)

    def scaled(self, a: float) -> "CoalitionValueTable":
        return CoalitionValueTable(self.n, {b: a * v for b, v in self.values.items()})

    def __add__(self, other: "CoalitionValueTable") -> "CoalitionValueTable":
        if other.n != self.n or other.values.keys() != self.values.keys():
            raise UsageError("tables cover different coalitions", module=_MOD)
        return CoalitionValueTable(self.n, {b: v + other.values[b] for b, v in self.values.items()})


def build_value_table(
    model: ModelFunction,
    x,
    spec: ValueFunctionSpec,
    coalitions: Iterable[Coalition] | None = None,
    workers: int = 1,
) -> CoalitionValueTable:
    """Evaluate ``g(T) = f_T(x) - f_empty(x)`` on ``coalitions`` (all 2**n when
    omitted). The empty and full coalitions are always included."""
    x = _check_instance(model, x)
    n = model.arity
    if spec.dim != n:
        raise DimensionError(f"value function has dimension {spec.dim}, model arity is {n}", module=_MOD)
    if coalitions is None:
        coalitions = all_coalitions(n)
    todo = {Coalition.empty(n), Coalition.full(n)}
    for T in coalitions:
        _check_coalition(T, n)
        todo.add(T)
    todo = sorted(todo)

    def run(T):
        return coalition_value(model, x, T, spec)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(run, todo))
    else:
        raw = [run(T) for T in todo]
    f = dict(zip((T.bits for T in todo), raw))
    base = f[0]
    values = {b: (v - base) for b, v in f.items()}
    return CoalitionValueTable(n, values, x=x, baseline=base, kind=spec.kind, meta={"f_x": f[(1 << n) - 1]})

