"""Extended reals, sparse sup-metric points and distance matrices."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

INF = math.inf

# Equality tolerance for claims that are exact in real arithmetic.
EXACT_TOL = 1e-12

DMX_MAGIC = b"DMX1"


def ext_real(value: float) -> float:
    """Validate a value of [0, inf]; infinity is an ordinary value here."""
    x = float(value)
    if math.isnan(x):
        raise ValueError("extended real cannot be NaN")
    if x < 0:
        raise ValueError(f"extended real must be nonnegative, got {x!r}")
    return x


def ext_add(*values: float) -> float:
    total = 0.0
    for v in values:
        if v == INF:
            return INF
        total += v
    return total


def close(a: float, b: float, tol: float = EXACT_TOL) -> bool:
    """Tolerant equality that treats inf == inf as exact."""
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class SparsePoint:
    """A point of l-infinity with finite support, kept in canonical form.

    ``coords`` is a tuple of ``(index, value)`` pairs sorted by index with
    no zero values, so equality and hashing are structural.
    """

    coords: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        last = 0
        for idx, val in self.coords:
            if idx <= last:
                raise ValueError("indices must be positive and strictly increasing")
            if val == 0 or math.isnan(val) or math.isinf(val):
                raise ValueError(f"bad coordinate value {val!r} at index {idx}")
            last = idx

    @classmethod
    def of(cls, items: Mapping[int, float] | Iterable[tuple[int, float]] = ()) -> "SparsePoint":
        if isinstance(items, Mapping):
            items = items.items()
        acc: dict[int, float] = {}
        for idx, val in items:
            idx = int(idx)
            if idx in acc:
                raise ValueError(f"duplicate index {idx}")
            acc[idx] = float(val)
        return cls(tuple((i, v) for i, v in sorted(acc.items()) if v != 0.0))

    @classmethod
    def dense(cls, *values: float) -> "SparsePoint":
        """Build from leading coordinates, index 1 first."""
        return cls.of(enumerate(values, start=1))

    def __getitem__(self, idx: int) -> float:
        for i, v in self.coords:
            if i == idx:
                return v
        return 0.0

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.coords)

    def scaled(self, factor: float) -> "SparsePoint":
        return SparsePoint.of((i, v * factor) for i, v in self.coords)

    def __repr__(self):
        inner = ", ".join(f"{i}: {v:g}" for i, v in self.coords)
        return f"SparsePoint({{{inner}}})"


def _merged(a: SparsePoint, b: SparsePoint):
    da, db = dict(a.coords), dict(b.coords)
    for idx in da.keys() | db.keys():
        yield da.get(idx, 0.0) - db.get(idx, 0.0)


def sup_distance(a: SparsePoint, b: SparsePoint) -> float:
    """The l-infinity distance: max over the union of supports."""
    return max((abs(x) for x in _merged(a, b)), default=0.0)


def euclidean_distance(a: SparsePoint, b: SparsePoint) -> float:
    return math.sqrt(sum(x * x for x in _merged(a, b)))


METRIC_FUNCS = {"sup": sup_distance, "euclidean": euclidean_distance}


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric matrix over [0, inf] indexed by point ids.

    The backing array is made read-only; build a new matrix to change it.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {arr.shape}")
        if np.isnan(arr).any():
            raise ValueError("distance matrix contains NaN")
        if (arr < 0).any():
            raise ValueError("distance matrix contains negative entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    def allclose(self, other: "DistanceMatrix", tol: float = EXACT_TOL) -> bool:
        a, b = self.values, other.values
        if a.shape != b.shape:
            return False
        if not np.array_equal(np.isinf(a), np.isinf(b)):
            return False
        fin = np.isfinite(a)
        scale = np.maximum(1.0, np.abs(a[fin]))
        return bool(np.all(np.abs(a[fin] - b[fin]) <= tol * scale))

    def submatrix(self, ids) -> "DistanceMatrix":
        ids = np.asarray(ids, dtype=int)
        return DistanceMatrix(self.values[np.ix_(ids, ids)])

    def max_finite(self) -> float:
        fin = self.values[np.isfinite(self.values)]
        return float(fin.max()) if fin.size else 0.0

    # -- serialization ---------------------------------------------------

    def to_dmx(self) -> bytes:
        iu = np.triu_indices(self.n)
        body = self.values[iu].astype("<f8").tobytes()
        return DMX_MAGIC + struct.pack("<q", self.n) + body

    @classmethod
    def from_dmx(cls, data: bytes) -> "DistanceMatrix":
        if data[:4] != DMX_MAGIC:
            raise ValueError("not a DMX1 file")
        (n,) = struct.unpack("<q", data[4:12])
        tri = np.frombuffer(data[12:], dtype="<f8")
        if tri.size != n * (n + 1) // 2:
            raise ValueError(f"DMX1 body has {tri.size} entries, expected {n * (n + 1) // 2}")
        out = np.zeros((n, n))
        iu = np.triu_indices(n)
        out[iu] = tri
        out.T[iu] = tri
        return cls(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.values:
            writer.writerow(format_float(x) for x in row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DistanceMatrix":
        rows = [[float(x) for x in r] for r in csv.reader(io.StringIO(text)) if r]
        return cls(np.array(rows, dtype=float).reshape(len(rows), -1))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            path.write_text(self.to_csv())
        else:
            path.write_bytes(self.to_dmx())

    @classmethod
    def load(cls, path: str | Path) -> "DistanceMatrix":
        path = Path(path)
        if path.suffix == ".csv":
            return cls.from_csv(path.read_text())
        return cls.from_dmx(path.read_bytes())


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass
class ValidationReport:
    n: int
    symmetric: bool = True
    zero_diagonal: bool = True
    positive: bool = True
    exhaustive: bool = True
    triples_checked: int = 0
    asymmetric_pairs: list[tuple[int, int]] = field(default_factory=list)
    nonpositive_pairs: list[tuple[int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.symmetric and self.zero_diagonal and self.positive and not self.violations


def validate_metric(
    m: DistanceMatrix,
    sample_budget: int = 200_000,
    *,
    tol: float = EXACT_TOL,
    max_report: int = 100,
    rng: np.random.Generator | None = None,
) -> ValidationReport:
    """Check the metric axioms on ``m``; violations are reported, never raised.

    The triangle inequality is checked over all triples up to n = 512 and on
    ``sample_budget`` random triples above that.  A triple ``(i, j, k)``
    violates it when ``m[i, k] > m[i, j] + m[j, k]`` beyond ``tol``.
    """
    a = m.values
    n = m.n
    rep = ValidationReport(n=n)

    asym = np.argwhere(np.triu(~_eq_ext(a, a.T, tol), 1))
    rep.asymmetric_pairs = [tuple(map(int, p)) for p in asym[:max_report]]
    rep.symmetric = asym.size == 0
    rep.zero_diagonal = bool(np.all(np.diag(a) == 0))
    off = ~np.eye(n, dtype=bool)
    nonpos = np.argwhere(np.triu(off & (a <= 0), 1))
    rep.nonpositive_pairs = [tuple(map(int, p)) for p in nonpos[:max_report]]
    rep.positive = nonpos.size == 0

    finite = a[np.isfinite(a)]
    slack = tol * max(1.0, float(finite.max()) if finite.size else 1.0)

    if n <= 512:
        rep.triples_checked = n ** 3
        for j in range(n):
            # through[i, k] = a[i, j] + a[j, k]
            through = a[:, j][:, None] + a[j, :][None, :]
            bad = np.argwhere(a > through + slack)
            for i, k in bad:
                if len(rep.violations) >= max_report:
                    break
                rep.violations.append((int(i), int(j), int(k)))
    else:
        rep.exhaustive = False
        rng = rng or np.random.default_rng(0)
        t = rng.integers(0, n, size=(sample_budget, 3))
        i, j, k = t[:, 0], t[:, 1], t[:, 2]
        bad = a[i, k] > a[i, j] + a[j, k] + slack
        rep.triples_checked = sample_budget
        rep.violations = [tuple(map(int, x)) for x in t[bad][:max_report]]
    return rep


def _eq_ext(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    both_inf = np.isinf(a) & np.isinf(b)
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
    scale = np.maximum(1.0, np.maximum(np.abs(np.where(np.isinf(a), 0, a)), np.abs(np.where(np.isinf(b), 0, b))))
    return both_inf | (diff <= tol * scale)


@dataclass
class Comparison:
    relation: str  # "equal" | "leq-strict" | "leq" | "incomparable" | "geq" | "geq-strict"
    strict_pair: tuple[int, int] | None = None
    less_pair: tuple[int, int] | None = None
    greater_pair: tuple[int, int] | None = None

    @property
    def witnesses(self) -> list[tuple[int, int]]:
        return [p for p in (self.strict_pair, self.less_pair, self.greater_pair) if p is not None]


def compare_metrics(m1: DistanceMatrix, m2: DistanceMatrix, tol: float = EXACT_TOL) -> Comparison:
    """Entrywise order of two metrics on the same points.

    Entries equal within ``tol`` (relative, inf-aware) count as equal.  The
    relation is ``leq-strict`` when m1 <= m2 everywhere and m1 < m2
    somewhere; ``incomparable`` carries one witness pair for each direction.
    """
    if m1.n != m2.n:
        raise ValueError(f"dimension mismatch: {m1.n} vs {m2.n}")
    a, b = m1.values, m2.values
    eq = _eq_ext(a, b, tol)
    upper = np.triu(np.ones_like(eq, dtype=bool), 1)
    less = upper & ~eq & (a < b)
    greater = upper & ~eq & (a > b)

    def first(mask):
        idx = np.argwhere(mask)
        return (int(idx[0][0]), int(idx[0][1])) if idx.size else None

    lp, gp = first(less), first(greater)
    if lp is None and gp is None:
        return Comparison("equal")
    if gp is None:
        return Comparison("leq-strict", strict_pair=lp, less_pair=lp)
    if lp is None:
        return Comparison("geq-strict", strict_pair=gp, greater_pair=gp)
    return Comparison("incomparable", less_pair=lp, greater_pair=gp)
