"""Lattice balls Z^d ∩ B^q_N: enumeration, exact counts, volumes.

Counts are exact integers. Membership for the Euclidean ball compares the
integer sum of squares against N**2 taken as an exact rational, so a float
radius never introduces an epsilon.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BudgetExceededError, EnumerationCapError, RegimeError

_Q_ALIASES = {
    "one": "one", "1": "one", 1: "one", "l1": "one",
    "two": "two", "2": "two", 2: "two", "l2": "two",
    "infinity": "infinity", "inf": "infinity", "linf": "infinity", math.inf: "infinity",
}

DEFAULT_MAX_DIM = 8
DEFAULT_MAX_POINTS = 10_000_000
DEFAULT_COUNT_BUDGET = 2**31


@dataclass(frozen=True)
class BallSpec:
    """The lattice ball {x in Z^d : |x|_q <= N}."""

    d: int
    N: float
    q: str = "two"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not self.N > 0:
            raise ValueError(f"radius must be positive, got {self.N!r}")
        try:
            q = _Q_ALIASES[self.q]
        except (KeyError, TypeError):
            raise ValueError(f"q must be one of one/two/infinity, got {self.q!r}") from None
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "q", q)

    @property
    def coord_bound(self) -> int:
        """Largest |x_k| that can occur: floor(N)."""
        return math.floor(Fraction(self.N))

    @property
    def level(self) -> int:
        """Integer level of the defining inequality.

        ``sum x_k**2 <= level`` for q=two, ``sum |x_k| <= level`` for q=one,
        ``max |x_k| <= level`` for q=infinity.
        """
        if self.q == "two":
            return math.floor(Fraction(self.N) ** 2)
        return self.coord_bound

    def contains(self, x) -> bool:
        x = [int(v) for v in x]
        if len(x) != self.d:
            raise ValueError("point has wrong dimension")
        if self.q == "two":
            return sum(v * v for v in x) <= Fraction(self.N) ** 2
        if self.q == "one":
            return sum(abs(v) for v in x) <= Fraction(self.N)
        return max(abs(v) for v in x) <= Fraction(self.N)


@dataclass
class CountResult:
    count: int
    by_squared_radius: dict[int, int] | None = None

    def __post_init__(self):
        if self.by_squared_radius is not None:
            assert sum(self.by_squared_radius.values()) == self.count


def _cost(q: str, v: np.ndarray) -> np.ndarray:
    return v * v if q == "two" else np.abs(v)


def count_ball(spec: BallSpec, budget: int = DEFAULT_COUNT_BUDGET) -> CountResult:
    """Exact number of lattice points in the ball.

    q=infinity is closed form. q=two and q=one run a dynamic program over the
    level ``r`` (sum of squares, resp. sum of absolute values): with
    ``h_0 = delta_0``, ``h_k(r) = sum_{|x| <= floor N} h_{k-1}(r - cost(x))``.
    Accumulation uses int64 when the cube bound ``(2 floor N + 1)**d`` proves
    it safe, Python integers otherwise.
    """
    d, X = spec.d, spec.coord_bound
    if spec.q == "infinity":
        return CountResult((2 * X + 1) ** d)
    level = spec.level
    states = (level + 1) * d
    if states > budget:
        raise BudgetExceededError(
            f"count DP needs {states} states, budget is {budget}", required=states, budget=budget)
    dtype = np.int64 if (2 * X + 1) ** d < 2**62 else object
    h = np.zeros(level + 1, dtype=dtype)
    h[0] = 1
    costs = [int(c) for c in _cost(spec.q, np.arange(1, X + 1))]
    for _ in range(d):
        nxt = h.copy()
        for c in costs:
            if c > level:
                break
            nxt[c:] += 2 * h[: level + 1 - c]
        h = nxt
    total = int(sum(int(v) for v in h))
    hist = None
    if spec.q == "two":
        hist = {r: int(v) for r, v in enumerate(h) if v != 0}
    return CountResult(total, hist)


def enumerate_ball(spec: BallSpec, max_dim: int = DEFAULT_MAX_DIM,
                   max_points: int = DEFAULT_MAX_POINTS) -> np.ndarray:
    """All points of the ball, lexicographically ordered, as an (count, d) int array.

    Raises EnumerationCapError (carrying the exact count) when ``d > max_dim``
    or the ball holds more than ``max_points`` points.
    """
    count = count_ball(spec).count
    if spec.d > max_dim or count > max_points:
        raise EnumerationCapError(
            f"refusing to enumerate {count} points in dimension {spec.d}", count=count)
    X, level, q = spec.coord_bound, spec.level, spec.q
    values = np.arange(-X, X + 1, dtype=np.int64)
    costs = _cost(q, values)
    prefixes = np.zeros((1, 0), dtype=np.int64)
    rem = np.array([level], dtype=np.int64)
    for _ in range(spec.d):
        if q == "infinity":
            ok = np.ones((len(rem), len(values)), dtype=bool)
        else:
            ok = rem[:, None] >= costs[None, :]
        # row-major nonzero keeps (prefix, value) lexicographic
        pi, vi = np.nonzero(ok)
        prefixes = np.concatenate([prefixes[pi], values[vi, None]], axis=1)
        rem = rem[pi] - (0 if q == "infinity" else costs[vi])
    assert len(prefixes) == count
    return prefixes


def log_ball_volume(d: int, N: float) -> float:
    """Natural log of the Euclidean volume pi^(d/2) N^d / Gamma(d/2 + 1)."""
    return 0.5 * d * math.log(math.pi) + d * math.log(N) - math.lgamma(0.5 * d + 1)


def ball_volume(d: int, N: float) -> float:
    if d < 1 or N <= 0:
        raise ValueError("need d >= 1 and N > 0")
    if d == 1:
        return 2.0 * N
    if d == 2:
        return math.pi * N * N
    return math.exp(log_ball_volume(d, N))


def symmetric_difference_count(spec: BallSpec, v: Sequence[int]) -> int:
    """|B ∩ Z^d  △  (B ∩ Z^d + v)|, by enumeration."""
    pts = enumerate_ball(spec)
    shifted = pts + np.asarray(v, dtype=np.int64)[None, :]
    a = {tuple(p) for p in pts.tolist()}
    b = {tuple(p) for p in shifted.tolist()}
    return len(a ^ b)


# ---------------------------------------------------------------- count/volume


@dataclass
class CountVolumeRow:
    d: int
    N: float
    count: int
    volume: float
    ratio: float
    upper_ok: bool


@dataclass
class CountVolumeReport:
    C1: float
    upper_constant: float
    rows: list[CountVolumeRow] = field(default_factory=list)

    @property
    def c2_fit(self) -> float:
        """Smallest C2 with count/volume >= 1/C2 over every row."""
        return 1.0 / min(r.ratio for r in self.rows)

    @property
    def all_upper_ok(self) -> bool:
        return all(r.upper_ok for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "N", "count", "volume", "ratio", "upper_ok"])
        for r in self.rows:
            w.writerow([r.d, repr(float(r.N)), str(r.count), repr(r.volume), repr(r.ratio),
                        str(r.upper_ok).lower()])
        return buf.getvalue()


def dyadic_multiples(multipliers: Iterable[float] = (1, 2, 4)) -> Callable[[int, float], list[float]]:
    """Radius rule N = C1 * d * m for each multiplier m."""
    multipliers = tuple(multipliers)

    def rule(d: int, C1: float) -> list[float]:
        return [C1 * d * m for m in multipliers]

    return rule


def count_volume_report(d_list: Iterable[int],
                        radius_rule: Callable[[int, float], Iterable[float]] | Sequence[float] = (1, 2, 4),
                        C1: float = 1.0, budget: int = DEFAULT_COUNT_BUDGET) -> CountVolumeReport:
    """Compare |B_N ∩ Z^d| with |B_N| for N >= C1*d.

    The upper bound checked is 2*exp(1/(8*C1**2)); the lower constant C2 is
    fitted (``report.c2_fit``).
    """
    if not callable(radius_rule):
        radius_rule = dyadic_multiples(radius_rule)
    upper = 2.0 * math.exp(1.0 / (8.0 * C1 * C1))
    report = CountVolumeReport(C1=C1, upper_constant=upper)
    for d in d_list:
        for N in radius_rule(d, C1):
            if N < C1 * d:
                raise RegimeError(f"N={N} < C1*d={C1 * d}")
            count = count_ball(BallSpec(d, N, "two"), budget=budget).count
            vol = ball_volume(d, N)
            ratio = count / vol
            report.rows.append(CountVolumeRow(d, N, count, vol, ratio, ratio <= upper))
    return report
