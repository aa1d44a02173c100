"""Shapley values of a set function, exactly or by constrained weighted least squares."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .data import spawn_rng
from .errors import DimensionError, SingularMatrixError, UsageError
from .valuefn import Coalition, CoalitionValueTable, all_coalitions

__all__ = [
    "AttributionResult",
    "WlsSystem",
    "shapley_exact",
    "shapley_kernel_weight",
    "shapley_weights",
    "sample_coalitions",
    "shapley_wls",
    "MAX_EXACT_FEATURES",
]

log = logging.getLogger(__name__)

_MOD = "shapley"
MAX_EXACT_FEATURES = 25


@dataclass
class AttributionResult:
    phi: np.ndarray
    baseline: float
    method: str
    coalitions_evaluated: int
    residual: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.phi))

    def to_dict(self) -> dict:
        return {
            "baseline": float(self.baseline),
            "phi": [float(v) for v in self.phi],
            "method": self.method,
            "coalitions": int(self.coalitions_evaluated),
            "residual": None if self.residual is None else float(self.residual),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "AttributionResult":
        return cls(
            np.asarray(d["phi"], dtype=float), d["baseline"], d["method"], d["coalitions"], d.get("residual")
        )


def _popcounts(n):
    bits = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(bits.size, dtype=np.int64)
    for i in range(n):
        counts += (bits >> i) & 1
    return bits, counts


def shapley_weights(n: int) -> np.ndarray:
    """Weight ``1 / (n * C(n-1, t))`` of a coalition of size ``t`` in the Shapley sum."""
    if not 1 <= n <= MAX_EXACT_FEATURES:
        raise UsageError(f"exact enumeration supports 1..{MAX_EXACT_FEATURES} features, got {n}", module=_MOD)
    t = np.arange(n)
    return 1.0 / (n * comb(n - 1, t))


def shapley_exact(table: CoalitionValueTable) -> AttributionResult:
    """Exact Shapley values by enumerating all ``2**n`` coalitions.

    ``phi_i = sum_{T not containing i} g(T + i) - g(T)`` weighted by
    ``1 / (n * C(n-1, |T|))``.
    """
    n = table.n
    if n > MAX_EXACT_FEATURES:
        raise UsageError(f"exact enumeration is capped at {MAX_EXACT_FEATURES} features, got {n}", module=_MOD)
    g = table.dense()
    bits, size = _popcounts(n)
    w = shapley_weights(n)
    phi = np.empty(n)
    for i in range(n):
        T = bits[(bits >> i) & 1 == 0]
        phi[i] = np.dot(w[size[T]], g[T | (1 << i)] - g[T])
    return AttributionResult(
        phi, table.baseline, f"exact:{table.kind}", 1 << n, diagnostics={"g_full": table.g_full}
    )


def shapley_kernel_weight(n: int, t: int) -> float:
    """Shapley kernel weight ``(n-1) / (C(n, t) * t * (n - t))`` for ``0 < t < n``.

    The empty and full coalitions have infinite weight and must be handled as
    constraints instead.
    """
    if not 0 < t < n:
        raise UsageError(
            f"kernel weight is infinite for coalition size {t} of {n}; use the efficiency constraint",
            module=_MOD,
        )
    return (n - 1) / (comb(n, t, exact=True) * t * (n - t))


def _full_enumeration(n):
    out = []
    for T in all_coalitions(n):
        t = len(T)
        out.append((T, math.inf if t in (0, n) else shapley_kernel_weight(n, t)))
    return out


def sample_coalitions(n: int, budget: int, seed: int = 0) -> list:
    """Coalitions and regression weights for the kernel least-squares fit.

    The empty and full coalitions are always present (weight ``inf``). The
    remaining ``budget - 2`` slots are filled by coalition size, smallest and
    largest sizes first: a size pair ``(s, n - s)`` is enumerated completely
    with exact kernel weights while the budget covers its share of the
    kernel mass. Leftover sizes are sampled with probability proportional to
    their kernel mass, uniformly within a size, always adding the complement
    of each draw. Repeated draws add to the weight of the coalition already
    held; the sampled coalitions share the remaining kernel mass equally per
    draw. With ``budget >= 2**n`` every coalition is returned with its exact
    weight.
    """
    if n < 1:
        raise UsageError("need at least one feature", module=_MOD)
    if budget < 2:
        raise UsageError("coalition budget must be >= 2 (empty and full coalitions)", module=_MOD)
    if budget >= 1 << n:
        if budget > 1 << n:
            log.info("budget %d exceeds 2**%d coalitions; enumerating all of them", budget, n)
        return _full_enumeration(n)

    result = [(Coalition.empty(n), math.inf), (Coalition.full(n), math.inf)]
    remaining = budget - 2
    # kernel mass per size: C(n, s) * k(n, s) = (n - 1) / (s (n - s))
    sizes = list(range(1, n))
    mass = {s: (n - 1) / (s * (n - s)) for s in sizes}

    pair_sizes = []
    for s in range(1, n // 2 + 1):
        pair = (s,) if s == n - s else (s, n - s)
        pair_sizes.append(pair)

    done = set()
    for pair in pair_sizes:
        count = sum(comb(n, s, exact=True) for s in pair)
        left_mass = sum(mass[s] for s in sizes if s not in done)
        share = remaining * sum(mass[s] for s in pair) / left_mass
        if share + 1e-9 < count or count > remaining:
            break
        for s in pair:
            w = shapley_kernel_weight(n, s)
            for T in _coalitions_of_size(n, s):
                result.append((T, w))
            done.add(s)
        remaining -= count

    left = [s for s in sizes if s not in done]
    if not left or remaining < 2:
        return result

    rng = spawn_rng(seed)
    left_mass = np.array([mass[s] for s in left])
    p_size = left_mass / left_mass.sum()
    counts: dict[int, int] = {}
    draws = 0
    max_draws = 100 * budget + 1000
    while len(counts) + 2 <= remaining and draws < max_draws:
        s = left[rng.choice(len(left), p=p_size)]
        idx = rng.choice(n, s, replace=False)
        bits = int(np.sum(1 << idx.astype(np.int64)))
        comp = ((1 << n) - 1) ^ bits
        counts[bits] = counts.get(bits, 0) + 1
        counts[comp] = counts.get(comp, 0) + 1
        draws += 2
    per_draw = left_mass.sum() / draws
    for bits in sorted(counts):
        result.append((Coalition(bits, n), counts[bits] * per_draw))
    return result


def _coalitions_of_size(n, s):
    from itertools import combinations

    for idx in combinations(range(n), s):
        yield Coalition.of(idx, n)


@dataclass(frozen=True, eq=False)
class WlsSystem:
    """Rows ``(T, weight, g(T))`` of the kernel least-squares problem.

    Only proper non-empty coalitions appear; the empty and full coalitions
    enter through the structure ``g(empty) = 0`` and the efficiency
    constraint.
    """

    n: int
    masks: np.ndarray  # (m, n) bool
    weights: np.ndarray  # (m,)
    values: np.ndarray  # (m,)

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=bool).reshape(-1, self.n)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not (masks.shape[0] == weights.size == values.size):
            raise DimensionError("rows, weights and values must have equal length", module=_MOD)
        sizes = masks.sum(axis=1)
        if np.any((sizes == 0) | (sizes == self.n)):
            raise UsageError("empty/full coalitions belong in the constraints, not the rows", module=_MOD)
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise UsageError("row weights must be positive and finite", module=_MOD)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_rows(cls, n: int, rows) -> "WlsSystem":
        """Build from ``(Coalition, weight, value)`` triples, merging duplicates.

        Empty and full coalitions are skipped. Duplicate coalitions add their
        weights and must agree on the value.
        """
        merged: dict[int, list] = {}
        for T, w, v in rows:
            if T.n != n:
                raise DimensionError(f"coalition over {T.n} features, system has {n}", module=_MOD)
            if T.is_empty or T.is_full:
                continue
            if T.bits in merged:
                if merged[T.bits][1] != v:
                    raise UsageError(
                        f"inconsistent duplicate: coalition {T} listed with values {merged[T.bits][1]} and {v}",
                        module=_MOD,
                    )
                merged[T.bits][0] += w
            else:
                merged[T.bits] = [w, v]
        keys = sorted(merged)
        masks = np.array([Coalition(b, n).mask for b in keys], dtype=bool).reshape(-1, n)
        return cls(n, masks, [merged[b][0] for b in keys], [merged[b][1] for b in keys])

    @classmethod
    def from_table(cls, table: CoalitionValueTable, weighted) -> "WlsSystem":
        """``weighted`` is an iterable of ``(Coalition, weight)`` as returned by
        :func:`sample_coalitions`."""
        return cls.from_rows(table.n, ((T, w, table.g(T)) for T, w in weighted if not (T.is_empty or T.is_full)))

    @property
    def n_rows(self) -> int:
        return self.values.size


def shapley_wls(system: WlsSystem, g_full: float, baseline: float = 0.0) -> AttributionResult:
    """Minimise ``sum_T k(T) (g(T) - sum_{j in T} phi_j)**2`` subject to
    ``sum_j phi_j = g_full``.

    The constraint is eliminated exactly by substituting
    ``phi_last = g_full - sum_{j < last} phi_j``; the reduced problem is solved
    by SVD-based least squares on the square-root-weighted design.
    """
    n = system.n
    if n == 1:
        return AttributionResult(np.array([g_full]), baseline, "wls", 2, 0.0)
    Z = system.masks.astype(float)
    z_last = Z[:, -1]
    A = Z[:, :-1] - z_last[:, None]
    y = system.values - z_last * g_full
    sw = np.sqrt(system.weights)
    Aw = A * sw[:, None]
    yw = y * sw
    U, s, Vt = np.linalg.svd(Aw, full_matrices=True)
    tol = s.max(initial=0.0) * max(Aw.shape) * np.finfo(float).eps
    if s.size < n - 1 or s.min() <= tol:
        # the last right singular vector spans (part of) the null space
        null = Vt[-1]
        direction = np.append(null, -null.sum())
        raise SingularMatrixError(
            f"coalition design with {Aw.shape[0]} rows is rank deficient; "
            f"null direction {np.round(direction, 6).tolist()}",
            condition=math.inf,
            module=_MOD,
        )
    U = U[:, : n - 1]
    head = Vt.T @ ((U.T @ yw) / s)
    phi = np.append(head, g_full - head.sum())
    fit = Z @ phi
    residual = float(np.sum(system.weights * (system.values - fit) ** 2))
    return AttributionResult(phi, baseline, "wls", system.n_rows + 2, residual)
