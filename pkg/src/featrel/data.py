"""Feature distributions: sample matrices, Gaussians and small discrete laws."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DimensionError, NumericError, ReadError, UsageError

__all__ = [
    "spawn_rng",
    "SampleMatrix",
    "GaussianSpec",
    "DiscreteDistribution",
    "load_csv",
    "empirical_mean",
    "make_rank1_gaussian",
    "sample_gaussian",
    "irrelevant_feature_distribution",
    "independent_binary_distribution",
    "make_common_cause_samples",
]

_MOD = "data"
PSD_TOLERANCE = 1e-10


def spawn_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the sub-stream ``stream`` of a global ``seed``.

    The seed and stream indices are hashed together by
    :class:`numpy.random.SeedSequence`, so any two distinct index tuples give
    independent streams and the result never depends on call order.
    """
    if seed < 0 or any(s < 0 for s in stream):
        raise UsageError("seeds and stream indices must be non-negative", module=_MOD)
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """K rows of n-dimensional samples, all finite."""

    values: np.ndarray
    names: tuple | None = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"sample matrix must be non-empty 2-D, got shape {v.shape}", module=_MOD)
        if not np.all(np.isfinite(v)):
            r, c = np.argwhere(~np.isfinite(v))[0]
            raise DataFormatError(f"non-finite value at row {r + 1}, column {c + 1}", r + 1, c + 1, module=_MOD)
        object.__setattr__(self, "values", v)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != v.shape[1]:
                raise DimensionError("one column name per column required", module=_MOD)
            object.__setattr__(self, "names", names)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def head(self, k: int) -> "SampleMatrix":
        return SampleMatrix(self.values[:k], self.names)

    def columns(self, idx) -> "SampleMatrix":
        idx = list(idx)
        names = None if self.names is None else tuple(self.names[i] for i in idx)
        return SampleMatrix(self.values[:, idx], names)


def _psd_root(cov, tol=PSD_TOLERANCE):
    """Return (factor, eigenvalues) with ``factor @ factor.T == cov``.

    Eigenvalues within ``tol * trace`` of zero are treated as exactly zero,
    so rank-deficient covariances produce samples confined to their range.
    """
    w, V = np.linalg.eigh(cov)
    floor = tol * max(float(np.trace(cov)), 0.0)
    if w.size and w[0] < -floor:
        raise NumericError(
            f"covariance is not positive semidefinite (smallest eigenvalue {w[0]:.3g})",
            module=_MOD,
        )
    w = np.where(w <= floor, 0.0, w)
    return V * np.sqrt(w), w


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.cov)
        n = mean.size
        if cov.shape != (n, n):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean length {n}", module=_MOD)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NumericError("Gaussian parameters must be finite", module=_MOD)
        scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-12 * scale:
            raise NumericError("covariance is not symmetric", module=_MOD)
        w = np.linalg.eigvalsh(cov)
        if w.size and w[0] < -PSD_TOLERANCE * max(float(np.trace(cov)), 0.0):
            raise NumericError(
                f"covariance is not positive semidefinite (smallest eigenvalue {w[0]:.3g})",
                module=_MOD,
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sqrt_factor(self) -> np.ndarray:
        return _psd_root(self.cov)[0]

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["cov"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finitely supported law: ``points[k]`` has probability ``probs[k]``."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim == 1:
            pts = _frozen(pts[:, None])
        probs = _frozen(self.probs).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] != probs.size or probs.size == 0:
            raise DimensionError("need one probability per support point", module=_MOD)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise UsageError("probabilities must be non-negative and sum to 1", module=_MOD)
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise UsageError("support points must be pairwise distinct", module=_MOD)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def marginal_probability(self, index: int, value: float) -> float:
        return float(self.probs[self.points[:, index] == value].sum())

    def to_list(self):
        return [{"point": p.tolist(), "prob": float(q)} for p, q in zip(self.points, self.probs)]

    @classmethod
    def from_list(cls, items):
        return cls([it["point"] for it in items], [it["prob"] for it in items])

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDistribution":
        return cls.from_list(json.loads(text))


def load_csv(path, has_header: bool = False) -> SampleMatrix:
    """Read a comma-separated numeric file.

    No quoting, '.' as decimal separator, optional single header row. Blank
    lines are skipped. Row numbers in errors are 1-based file line numbers.
    """
    try:
        with open(path, newline="") as fh:
            lines = list(csv.reader(fh, quoting=csv.QUOTE_NONE))
    except OSError as exc:
        raise ReadError(f"cannot read {path}: {exc.strerror or exc}", module=_MOD) from exc
    names = None
    rows = []
    width = None
    for lineno, cells in enumerate(lines, start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if has_header and names is None:
            names = tuple(c.strip() for c in cells)
            width = len(names)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise DataFormatError(
                f"{path}: ragged row {lineno} has {len(cells)} cells, expected {width}",
                row=lineno,
                module=_MOD,
            )
        row = []
        for col, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                v = None
            if v is None or not np.isfinite(v):
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}",
                    row=lineno,
                    col=col,
                    module=_MOD,
                )
            row.append(v)
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data rows", module=_MOD)
    return SampleMatrix(np.array(rows), names)


def save_csv(path, data: SampleMatrix) -> None:
    with open(path, "w", newline="") as fh:
        if data.names is not None:
            fh.write(",".join(data.names) + "\n")
        for row in data.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def empirical_mean(data: SampleMatrix) -> np.ndarray:
    return data.values.mean(axis=0)


def make_rank1_gaussian(n: int, seed: int) -> GaussianSpec:
    """Zero-mean Gaussian with covariance ``c c^T``, ``c`` standard normal."""
    if n < 1:
        raise UsageError("dimension must be >= 1", module=_MOD)
    c = spawn_rng(seed).standard_normal(n)
    return GaussianSpec(np.zeros(n), np.outer(c, c))


def sample_gaussian(spec: GaussianSpec, count: int, seed: int) -> SampleMatrix:
    """Draw ``count`` i.i.d. rows from ``spec``; deterministic per seed."""
    if count < 1:
        raise UsageError("sample count must be >= 1", module=_MOD)
    root = spec.sqrt_factor()
    z = spawn_rng(seed).standard_normal((count, spec.dim))
    return SampleMatrix(spec.mean + z @ root.T)


def irrelevant_feature_distribution() -> DiscreteDistribution:
    """Two binary features that are always equal, each with probability 1/2."""
    return DiscreteDistribution([[0.0, 0.0], [1.0, 1.0]], [0.5, 0.5])


def independent_binary_distribution(p: float, q: float) -> DiscreteDistribution:
    """Independent X1, X2 on {1, 2} with P(X1 = 2) = p and P(X2 = 2) = q."""
    return DiscreteDistribution(
        [[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [2.0, 2.0]],
        [(1 - p) * (1 - q), (1 - p) * q, p * (1 - q), p * q],
    )


def make_common_cause_samples(
    rows: int,
    n_features: int,
    seed: int,
    noise: float = 0.5,
    exact_dependency: bool = True,
) -> SampleMatrix:
    """Correlated features driven by a shared latent label.

    Each column is ``loading_j * z + noise * e_j`` with one latent ``z``. When
    ``exact_dependency`` is set the last column is replaced by the exact
    linear combination ``2 * col1 - col2 + 3``.
    """
    if n_features < (4 if exact_dependency else 1):
        raise UsageError("too few features requested", module=_MOD)
    rng = spawn_rng(seed)
    z = rng.standard_normal(rows)
    loadings = rng.uniform(0.5, 1.5, n_features) * rng.choice([-1.0, 1.0], n_features)
    X = z[:, None] * loadings + noise * rng.standard_normal((rows, n_features))
    X += rng.uniform(-2, 2, n_features)
    if exact_dependency:
        X[:, -1] = 2.0 * X[:, 0] - X[:, 1] + 3.0
    names = tuple(f"f{j + 1}" for j in range(n_features))
    return SampleMatrix(X, names)


def load_gaussian(path) -> GaussianSpec:
    d = _read_json(path)
    try:
        return GaussianSpec.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: expected {{'mean': [...], 'cov': [[...]]}}", module=_MOD) from exc


def load_discrete(path) -> DiscreteDistribution:
    items = _read_json(path)
    try:
        return DiscreteDistribution.from_list(items)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: expected a list of {{'point', 'prob'}} objects", module=_MOD) from exc


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})", module=_MOD) from exc


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ReadError(f"cannot read {path}: {exc.strerror or exc}", module=_MOD) from exc
