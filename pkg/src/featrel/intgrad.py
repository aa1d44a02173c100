"""Integrated gradients, general path methods and an axiom checker for
attribution methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .data import DiscreteDistribution, GaussianSpec, SampleMatrix, spawn_rng
from .errors import DimensionError, NonFiniteError, UsageError
from .model import (
    DEFAULT_FD_STEP,
    BinOp,
    Const,
    Expression,
    ModelFunction,
    Var,
    combine,
    gradients_fd,
)
from .valuefn import ValueFunctionSpec

__all__ = [
    "PathSpec",
    "integrated_gradients",
    "path_attribution",
    "AxiomResult",
    "AxiomReport",
    "verify_axioms",
    "random_polynomial",
    "is_symmetric",
]

_MOD = "intgrad"
DEFAULT_STEPS = 300
IG = "integrated-gradients"


@dataclass(frozen=True, eq=False)
class PathSpec:
    """Piecewise-linear path from a baseline (first waypoint) to the input
    (last waypoint), each segment integrated with ``steps`` trapezoid panels."""

    waypoints: np.ndarray
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1:
            raise DimensionError("a path needs at least one waypoint", module=_MOD)
        if self.steps < 1:
            raise UsageError("steps must be >= 1", module=_MOD)
        w.flags.writeable = False
        object.__setattr__(self, "waypoints", w)

    @classmethod
    def straight(cls, baseline, x, steps: int = DEFAULT_STEPS) -> "PathSpec":
        return cls(np.vstack([baseline, x]), steps)

    @classmethod
    def staircase(cls, baseline, x, order=None, steps: int = DEFAULT_STEPS) -> "PathSpec":
        """Axis-aligned path changing one coordinate at a time in ``order``."""
        cur = np.array(baseline, dtype=float)
        x = np.asarray(x, dtype=float)
        pts = [cur.copy()]
        for i in order if order is not None else range(cur.size):
            cur[i] = x[i]
            pts.append(cur.copy())
        return cls(np.vstack(pts), steps)

    @property
    def kind(self) -> str:
        return "straight-line" if self.waypoints.shape[0] == 2 else "piecewise-linear"

    @property
    def baseline(self):
        return self.waypoints[0]

    @property
    def end(self):
        return self.waypoints[-1]


def _segment_integral(model, a, b, steps, step):
    # integral over t in [0, 1] of grad f(a + t (b - a)), trapezoid rule
    t = np.linspace(0.0, 1.0, steps + 1)
    pts = a + t[:, None] * (b - a)
    try:
        grads = gradients_fd(model, pts, step)
    except NonFiniteError as exc:
        alpha = t[exc.row] if exc.row is not None else float("nan")
        raise NonFiniteError(f"non-finite gradient along the path at alpha={alpha:.6g}", module=_MOD) from exc
    return trapezoid(grads, t, axis=0)


def integrated_gradients(
    model: ModelFunction,
    x,
    baseline,
    steps: int = DEFAULT_STEPS,
    step: float = DEFAULT_FD_STEP,
) -> np.ndarray:
    """``(x_i - x'_i) * int_0^1 df/dx_i(x' + a (x - x')) da`` with the
    trapezoid rule on ``steps`` panels and central-difference gradients."""
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if x.shape != (model.arity,) or baseline.shape != x.shape:
        raise DimensionError(f"input and baseline must have length {model.arity}", module=_MOD)
    if steps < 1:
        raise UsageError("steps must be >= 1", module=_MOD)
    return (x - baseline) * _segment_integral(model, baseline, x, steps, step)


def path_attribution(model: ModelFunction, path: PathSpec, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Line integral of the gradient along ``path``, split by coordinate."""
    if path.waypoints.shape[1] != model.arity:
        raise DimensionError(f"path lives in dimension {path.waypoints.shape[1]}, model arity is {model.arity}", module=_MOD)
    total = np.zeros(model.arity)
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        d = b - a
        if not d.any():
            continue
        total += d * _segment_integral(model, a, b, path.steps, step)
    return total


# ---------------------------------------------------------------------------
# random test models
# ---------------------------------------------------------------------------


def random_polynomial(
    n: int,
    rng: np.random.Generator,
    terms: int = 4,
    max_degree: int = 3,
    ignore=(),
    symmetric_pair: tuple | None = None,
) -> Expression:
    """Random polynomial in ``x1 .. xn`` never mentioning the 0-based indices
    in ``ignore``. With ``symmetric_pair=(i, j)`` the result is symmetrised
    by adding the copy with ``x_i`` and ``x_j`` exchanged."""
    allowed = [i for i in range(n) if i not in set(ignore)]
    if not allowed:
        raise UsageError("every coordinate ignored", module=_MOD)

    def monomial(swap):
        coef = Const(float(np.round(rng.normal(), 3)))
        node = coef
        deg = int(rng.integers(1, max_degree + 1))
        for i in rng.choice(allowed, deg):
            i = int(i)
            if swap is not None and i in swap:
                i = swap[1] if i == swap[0] else swap[0]
            node = BinOp("*", node, Var(i + 1))
        return node

    root = Const(float(np.round(rng.normal(), 3)))
    state = rng.bit_generator.state
    for _ in range(terms):
        root = BinOp("+", root, monomial(None))
    if symmetric_pair is not None:
        rng.bit_generator.state = state
        for _ in range(terms):
            root = BinOp("+", root, monomial(symmetric_pair))
    return Expression(root, n)


def is_symmetric(model: ModelFunction, i: int, j: int, probes: int = 16, seed: int = 0) -> bool:
    """Numerical probe: does swapping coordinates i and j leave f unchanged?"""
    P = spawn_rng(seed, 11, i, j).uniform(-2.0, 2.0, (probes, model.arity))
    Q = P.copy()
    Q[:, [i, j]] = Q[:, [j, i]]
    fp, fq = model.evaluate_batch(P), model.evaluate_batch(Q)
    return bool(np.allclose(fp, fq, rtol=1e-12, atol=1e-12))


# ---------------------------------------------------------------------------
# axiom verification
# ---------------------------------------------------------------------------


@dataclass
class AxiomResult:
    name: str
    tolerance: float
    worst_violation: float = 0.0
    witness: dict | None = None
    checked: int = 0

    @property
    def holds(self) -> bool:
        return self.worst_violation <= self.tolerance

    def record(self, violation: float, witness: dict):
        self.checked += 1
        violation = float(abs(violation))
        if violation > self.worst_violation or self.witness is None and violation == self.worst_violation:
            self.worst_violation = violation
            self.witness = witness

    def to_dict(self):
        return {
            "name": self.name,
            "holds": self.holds,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "checked": self.checked,
            "witness": self.witness if not self.holds else None,
        }


@dataclass
class AxiomReport:
    method: str
    axioms: dict = field(default_factory=dict)

    def __getitem__(self, name) -> AxiomResult:
        return self.axioms[name]

    @property
    def all_hold(self) -> bool:
        return all(a.holds for a in self.axioms.values())

    def to_dict(self):
        return {"method": self.method, "axioms": [a.to_dict() for a in self.axioms.values()]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


AXIOMS = ("completeness", "sensitivity", "linearity", "symmetry")


class _IGMethod:
    name = IG

    def __init__(self, steps):
        self.steps = steps

    def draw(self, rng, n):
        return rng.uniform(-2.0, 2.0, n), rng.uniform(-2.0, 2.0, n)

    def attribute(self, model, x, ref):
        atr = integrated_gradients(model, x, ref, self.steps)
        return atr, model.evaluate(x) - model.evaluate(ref)

    def exchangeable(self, i, j):
        return True

    def tie(self, rng, n, i, j):
        x, ref = self.draw(rng, n)
        x[j] = x[i]
        ref[j] = ref[i]
        return x, ref


class _ShapleyMethod:
    def __init__(self, spec: ValueFunctionSpec, mode, budget):
        self.spec = spec
        self.mode = mode
        self.budget = budget
        self.name = f"shapley:{spec.kind}"

    def _source(self):
        return self.spec.background or self.spec.gaussian or self.spec.discrete

    def draw(self, rng, n):
        src = self._source()
        if isinstance(src, DiscreteDistribution):
            return src.points[rng.choice(src.points.shape[0], p=src.probs)].copy(), None
        if isinstance(src, GaussianSpec):
            return src.mean + src.sqrt_factor() @ rng.standard_normal(n), None
        return src.values[rng.integers(src.n_rows)].copy(), None

    def attribute(self, model, x, ref):
        from .explain import explain_instance

        res = explain_instance(model, x, self.spec, self.mode, self.budget, seed=self.spec.seed)
        return res.phi, model.evaluate(x) - res.baseline

    def exchangeable(self, i, j):
        src = self._source()
        if isinstance(src, DiscreteDistribution):
            swapped = src.points.copy()
            swapped[:, [i, j]] = swapped[:, [j, i]]
            a = sorted(zip(map(tuple, src.points), src.probs))
            b = sorted(zip(map(tuple, swapped), src.probs))
            return all(p == q and abs(u - v) <= 1e-15 for (p, u), (q, v) in zip(a, b))
        if isinstance(src, GaussianSpec):
            perm = np.arange(src.dim)
            perm[[i, j]] = [j, i]
            return bool(
                src.mean[i] == src.mean[j] and np.array_equal(src.cov, src.cov[np.ix_(perm, perm)])
            )
        assert isinstance(src, SampleMatrix)
        swapped = src.values.copy()
        swapped[:, [i, j]] = swapped[:, [j, i]]
        return bool(np.array_equal(np.unique(src.values, axis=0), np.unique(swapped, axis=0)))

    def tie(self, rng, n, i, j):
        src = self._source()
        if isinstance(src, DiscreteDistribution):
            ok = src.points[:, i] == src.points[:, j]
            if not ok.any():
                return None
            p = np.where(ok, src.probs, 0.0)
            return src.points[rng.choice(p.size, p=p / p.sum())].copy(), None
        x, _ = self.draw(rng, n)
        x[j] = x[i]
        return x, None


def _method_for(method, steps, mode, budget):
    if isinstance(method, str):
        if method != IG:
            raise UsageError(f"unknown attribution method {method!r}", module=_MOD)
        return _IGMethod(steps)
    if isinstance(method, ValueFunctionSpec):
        return _ShapleyMethod(method, mode, budget)
    raise UsageError(f"unknown attribution method {method!r}", module=_MOD)


def verify_axioms(
    method,
    models,
    trials: int = 10,
    seed: int = 0,
    tolerance: float = 1e-4,
    steps: int = 1000,
    mode: str = "exact",
    budget: int | None = None,
) -> AxiomReport:
    """Check Completeness, Sensitivity, Linearity and Symmetry-Preserving on
    randomised inputs.

    ``method`` is ``"integrated-gradients"`` or a :class:`ValueFunctionSpec`
    (Shapley values under that value function). Inputs for Shapley are drawn
    from the value function's own distribution. Sensitivity is tested for
    coordinates a model does not syntactically use. Symmetry is tested for
    coordinate pairs in which a model is symmetric, at inputs with equal
    values in the pair (and equal baseline values for integrated gradients);
    for Shapley the pair must additionally be exchangeable under the
    distribution, otherwise the pair is skipped.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1", module=_MOD)
    models = list(models)
    if not models:
        raise UsageError("no models to check", module=_MOD)
    m = _method_for(method, steps, mode, budget)
    report = AxiomReport(m.name, {a: AxiomResult(a, tolerance) for a in AXIOMS})
    rng = spawn_rng(seed, 13)

    sym_pairs = []
    for k, f in enumerate(models):
        n = f.arity
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if is_symmetric(f, i, j, seed=seed)]
        sym_pairs.append([(i, j) for i, j in pairs if m.exchangeable(i, j)])

    for trial in range(trials):
        for k, f in enumerate(models):
            n = f.arity
            x, ref = m.draw(rng, n)
            atr, target = m.attribute(f, x, ref)
            wit = {"model": k, "x": x.tolist()}
            report["completeness"].record(atr.sum() - target, {**wit, "sum": float(atr.sum()), "target": float(target)})
            for i in sorted(set(range(n)) - f.depends_on()):
                report["sensitivity"].record(atr[i], {**wit, "feature": i + 1, "attribution": float(atr[i])})

            g = models[(k + 1) % len(models)]
            if g.arity == n:
                a, b = rng.normal(size=2)
                h = combine(a, f, b, g)
                atr_f, _ = m.attribute(f, x, ref)
                atr_g, _ = m.attribute(g, x, ref)
                atr_h, _ = m.attribute(h, x, ref)
                dev = atr_h - (a * atr_f + b * atr_g)
                worst = int(np.argmax(np.abs(dev)))
                report["linearity"].record(
                    dev[worst], {**wit, "partner": (k + 1) % len(models), "a": a, "b": b, "feature": worst + 1}
                )

            for i, j in sym_pairs[k]:
                tied = m.tie(rng, n, i, j)
                if tied is None:
                    continue
                xs, rs = tied
                atr_s, _ = m.attribute(f, xs, rs)
                report["symmetry"].record(
                    atr_s[i] - atr_s[j],
                    {"model": k, "x": xs.tolist(), "features": [i + 1, j + 1],
                     "attributions": [float(atr_s[i]), float(atr_s[j])]},
                )
    return report
