"""Property suites run by ``featrel verify``.

Each check returns a :class:`Check`. A check may be marked as an expected
failure: the conditional-expectation value function must violate
Sensitivity on the irrelevant-feature example, and the suite passes only if
it does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .data import irrelevant_feature_distribution, spawn_rng
from .intgrad import IG, random_polynomial, verify_axioms
from .model import parse_expression
from .shapley import WlsSystem, sample_coalitions, shapley_exact, shapley_weights, shapley_wls
from .valuefn import CoalitionValueTable, ValueFunctionSpec

__all__ = [
    "Check",
    "axioms_suite",
    "invariants_suite",
    "set_function_axioms",
    "weight_normalization",
    "wls_matches_exact",
]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    expect_failure: bool = False

    @property
    def ok(self) -> bool:
        return self.passed != self.expect_failure

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = " (expected)" if self.expect_failure and not self.passed else ""
        note = " (UNEXPECTED)" if not self.ok else note
        return f"{status}{note}  {self.name}: {self.detail}"


def weight_normalization(max_n: int = 12) -> float:
    """Largest ``|sum_T 1/(n C(n-1,|T|)) - 1|`` over n <= max_n (sum over subsets of U minus i)."""
    worst = 0.0
    for n in range(1, max_n + 1):
        total = math.fsum(comb(n - 1, t, exact=True) * w for t, w in enumerate(shapley_weights(n)))
        worst = max(worst, abs(total - 1.0))
    return worst


def _random_table(rng, n):
    g = rng.normal(size=1 << n)
    g[0] = 0.0
    return CoalitionValueTable.from_array(g, n)


def wls_matches_exact(count: int = 200, seed: int = 0, sizes=range(2, 9)) -> float:
    """Largest deviation between constrained WLS (full enumeration) and exact
    Shapley values over ``count`` random set functions."""
    rng = spawn_rng(seed, 21)
    sizes = list(sizes)
    worst = 0.0
    for k in range(count):
        n = sizes[k % len(sizes)]
        table = _random_table(rng, n)
        weighted = sample_coalitions(n, 1 << n)
        phi_w = shapley_wls(WlsSystem.from_table(table, weighted), table.g_full).phi
        phi_e = shapley_exact(table).phi
        worst = max(worst, float(np.max(np.abs(phi_w - phi_e))))
    return worst


def set_function_axioms(trials: int = 50, seed: int = 0, sizes=range(2, 9)) -> dict:
    """Worst violations of efficiency, null player, symmetry and linearity of
    exact Shapley values on random set functions."""
    rng = spawn_rng(seed, 22)
    sizes = list(sizes)
    worst = dict.fromkeys(("efficiency", "null-player", "symmetry", "linearity"), 0.0)
    for k in range(trials):
        n = sizes[k % len(sizes)]
        bits = np.arange(1 << n)
        t1, t2 = _random_table(rng, n), _random_table(rng, n)
        phi1 = shapley_exact(t1).phi
        worst["efficiency"] = max(worst["efficiency"], abs(phi1.sum() - t1.g_full))

        # null player: make i irrelevant by copying g(T) to g(T + i)
        i = int(rng.integers(n))
        g = t1.dense()
        g[bits | (1 << i)] = g[bits & ~(1 << i)]
        worst["null-player"] = max(worst["null-player"], abs(shapley_exact(CoalitionValueTable.from_array(g, n)).phi[i]))

        # symmetry: make g invariant under swapping i and j
        i, j = rng.choice(n, 2, replace=False)
        bi, bj = (bits >> i) & 1, (bits >> j) & 1
        swapped = bits & ~((1 << i) | (1 << j)) | (bi << j) | (bj << i)
        gs = t1.dense()
        gs = 0.5 * (gs + gs[swapped])
        phis = shapley_exact(CoalitionValueTable.from_array(gs, n)).phi
        worst["symmetry"] = max(worst["symmetry"], abs(phis[i] - phis[j]))

        a, b = rng.normal(size=2)
        combo = t1.scaled(a) + t2.scaled(b)
        lhs = shapley_exact(combo).phi
        rhs = a * phi1 + b * shapley_exact(t2).phi
        worst["linearity"] = max(worst["linearity"], float(np.max(np.abs(lhs - rhs))))
    return {k: float(v) for k, v in worst.items()}


def _fmt(v):
    return f"worst violation {v:.3g}"


def axioms_suite(seed: int = 0, trials: int = 5) -> list:
    checks = []
    rng = spawn_rng(seed, 23)
    polys = [
        random_polynomial(3, rng, ignore=(2,), symmetric_pair=(0, 1)),
        random_polynomial(3, rng, ignore=(2,), symmetric_pair=(0, 1)),
        random_polynomial(3, rng, ignore=(1,)),
    ]
    ig = verify_axioms(IG, polys, trials=trials, seed=seed, tolerance=1e-4, steps=1000)
    for a in ig.axioms.values():
        checks.append(Check(f"integrated-gradients {a.name}", a.holds, f"{_fmt(a.worst_violation)} over {a.checked} checks"))

    f = parse_expression("x1", 2)
    dist = irrelevant_feature_distribution()
    for kind in ("exact-discrete-marginal", "exact-discrete-conditional"):
        spec = ValueFunctionSpec(kind, discrete=dist)
        rep = verify_axioms(spec, [f], trials=max(trials, 8), seed=seed, tolerance=1e-12)
        sens = rep["sensitivity"]
        detail = _fmt(sens.worst_violation)
        if not sens.holds:
            w = sens.witness
            detail += f"; witness x={w['x']} phi_{w['feature']}={w['attribution']:+.6g}"
        checks.append(Check(f"shapley[{kind}] sensitivity", sens.holds, detail, expect_failure=kind.endswith("conditional")))
        comp = rep["completeness"]
        checks.append(Check(f"shapley[{kind}] completeness", comp.holds, _fmt(comp.worst_violation)))

    for name, v in set_function_axioms(seed=seed).items():
        checks.append(Check(f"shapley set-function {name}", v <= 1e-10, _fmt(v)))
    return checks


def invariants_suite(seed: int = 0) -> list:
    checks = []
    v = weight_normalization(12)
    checks.append(Check("shapley weight normalization n<=12", v <= 1e-12, _fmt(v)))
    v = wls_matches_exact(200, seed)
    checks.append(Check("wls vs exact enumeration (200 set functions)", v < 1e-8, f"max deviation {v:.3g}"))

    # complement pairing and presence of the empty/full coalitions
    rng = spawn_rng(seed, 24)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(2, 11))
        budget = int(rng.integers(2, (1 << n) + 3))
        got = sample_coalitions(n, budget, int(rng.integers(2**31)))
        keys = {T.bits for T, _ in got}
        full = (1 << n) - 1
        if 0 not in keys or full not in keys or any((full ^ b) not in keys for b in keys):
            bad += 1
    checks.append(Check("coalition sampling keeps complements", bad == 0, f"{bad} of 100 samples broken"))
    return checks


def run_suite(name: str, seed: int = 0) -> list:
    if name == "axioms":
        return axioms_suite(seed)
    if name == "invariants":
        return invariants_suite(seed)
    if name == "all":
        return axioms_suite(seed) + invariants_suite(seed)
    raise ValueError(f"unknown suite {name!r}")

