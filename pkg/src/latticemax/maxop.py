"""Dyadic maximal operators on the torus: regimes, ratio tables, domination.

Radii are split into a small-scale set (N <= c0 sqrt d), an intermediate set
(c1 sqrt d <= N <= c2 d) and a large-scale set (N >= c3 d). The ratio
experiment measures the maximal norm of the ball-average family over each set
against the input norm; the domination check compares lattice averages with
Monte Carlo averages of the piecewise-constant extension over a slightly
larger Euclidean ball.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, CoverageGapError, RegimeError
from .lattice import BallSpec, count_ball, count_volume_report, enumerate_ball
from .ncmax import DEFAULT_TOL, field_lp_norm, field_maximal_norm
from .torus import TorusField, check_embedding, convolve_ball

REGIMES = ("small", "intermediate", "large")
INPUTS = ("delta", "indicator", "random_scalar", "random", "projector", "constant")
SCALAR_SITE_BUDGET = 2**20
MATRIX_SITE_BUDGET = 2**12
LOW_P_LABEL = "p<2: large-radius regime only"
MC_SHELLS = 16
MC_REL_STDERR = 0.01


@dataclass(frozen=True)
class RegimeConfig:
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    N_max: int = 64

    def __post_init__(self):
        if min(self.c0, self.c1, self.c2, self.c3) <= 0:
            raise ValueError("regime constants must be positive")
        if self.N_max < 1 or self.N_max & (self.N_max - 1):
            raise ValueError(f"N_max must be a power of two, got {self.N_max}")
        if self.c1 > self.c0 or self.c3 > self.c2:
            raise CoverageGapError(f"regimes need c1 <= c0 and c3 <= c2, got {self}")


def dyadic_up_to(N_max: int) -> list[int]:
    return [2**k for k in range(int(math.log2(N_max)) + 1)]


def dyadic_radii(d: int, cfg: RegimeConfig = RegimeConfig()) -> tuple[list[int], list[int], list[int]]:
    """Split {1, 2, 4, ..., N_max} into the small, intermediate and large sets.

    The sets may overlap. Raises CoverageGapError if some radius is in none.
    """
    root = math.sqrt(d)
    all_r = dyadic_up_to(cfg.N_max)
    small = [N for N in all_r if N <= cfg.c0 * root]
    mid = [N for N in all_r if cfg.c1 * root <= N <= cfg.c2 * d]
    large = [N for N in all_r if N >= cfg.c3 * d]
    missing = set(all_r) - set(small) - set(mid) - set(large)
    if missing:
        raise CoverageGapError(f"radii {sorted(missing)} fall in no regime at d={d}")
    return small, mid, large


def torus_side(N_max: float) -> int:
    """Smallest power of two that is at least 2 N_max + 2."""
    need = 2 * math.floor(N_max) + 2
    return 1 << (need - 1).bit_length()


def fitted_radius_cap(d: int, N_max: int, site_budget: int) -> int:
    """Largest dyadic N <= N_max whose torus torus_side(N)^d fits the site budget."""
    N = N_max
    while N > 1 and torus_side(N) ** d > site_budget:
        N //= 2
    if torus_side(N) ** d > site_budget:
        raise BudgetExceededError(f"no torus fits {site_budget} sites at d={d}",
                                  required=torus_side(N) ** d, budget=site_budget)
    return N


def maximal_family(f: TorusField, radii) -> list[TorusField]:
    """Ball averages of f at each radius (spectral path)."""
    radii = list(radii)
    if radii:
        check_embedding(f.M, max(radii))
    return [convolve_ball(f, N, "spectral") for N in radii]


# -------------------------------------------------------------- input family


def make_input(input_id: str, M: int, d: int, n: int, rng: np.random.Generator,
               N_max: float = 1) -> TorusField:
    """Built-in experiment inputs; the list is fixed so tables stay comparable."""
    if input_id == "delta":
        return TorusField.delta(M, d, 1)
    if input_id == "indicator":
        r = max(1, N_max // 2)
        f = np.zeros((M,) * d)
        pts = enumerate_ball(BallSpec(d, r))
        f[tuple((pts % M).T)] = 1.0
        return TorusField.from_scalar(f, positive=True)
    if input_id == "random_scalar":
        return TorusField.from_scalar(rng.exponential(size=(M,) * d), positive=True)
    if input_id == "random":
        return TorusField.random(M, d, n, rng, "positive")
    if input_id == "projector":
        return TorusField.random(M, d, n, rng, "projector")
    if input_id == "constant":
        return TorusField.from_scalar(np.full((M,) * d, 1.5), positive=True)
    raise ValueError(f"unknown input {input_id!r}; choose from {INPUTS}")


def delta_sup_ratio(d: int, radii) -> float:
    """Closed form for f = delta_0, p = 2, embedded balls.

    The supremum over N of chi_{B_N}(x)/|B_N| is 1/|B_{N(x)}| with N(x) the
    smallest radius whose ball contains x, so the squared ratio is
    sum_k (|B_k| - |B_{k-1}|) / |B_k|^2.
    """
    total, prev = 0.0, 0
    for N in sorted(radii):
        c = count_ball(BallSpec(d, N)).count
        total += (c - prev) / c**2
        prev = c
    return math.sqrt(total)


@dataclass
class RatioRow:
    d: int
    M: int
    p: float
    input_id: str
    regime: str
    radii_count: int
    ratio: float
    label: str = ""
    gap: float = 0.0


@dataclass
class RatioReport:
    rows: list[RatioRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def select(self, input_id: str | None = None, regime: str | None = None) -> list[RatioRow]:
        return [r for r in self.rows if (input_id is None or r.input_id == input_id)
                and (regime is None or r.regime == regime)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "M", "p", "input_id", "regime", "radii_count", "ratio", "ratio_gap", "label"])
        for r in self.rows:
            ratio = "" if math.isnan(r.ratio) else repr(r.ratio)
            w.writerow([r.d, r.M, _fmt_p(r.p), r.input_id, r.regime, r.radii_count, ratio, repr(r.gap), r.label])
        return buf.getvalue()


def _fmt_p(p: float) -> str:
    return "inf" if math.isinf(p) else repr(float(p))


def maximal_ratio_experiment(inputs, p: float, d_list, cfg: RegimeConfig = RegimeConfig(),
                             seed: int = 0, n: int = 2, tol: float = DEFAULT_TOL,
                             scalar_budget: int = SCALAR_SITE_BUDGET,
                             matrix_budget: int = MATRIX_SITE_BUDGET) -> RatioReport:
    """Table of |sup_{N in R} M_N f|_p / |f|_p per dimension, input and regime.

    The largest radius per dimension is capped so the torus fits the site
    budget (scalar and matrix inputs have separate budgets); the cap is
    recorded in ``meta``. For p < 2 only the large-radius set is evaluated.
    """
    report = RatioReport(meta={"seed": seed, "p": _fmt_p(p), "tol": tol, "runtime_ms": {}, "N_max": {}})
    for d in d_list:
        for k, input_id in enumerate(inputs):
            scalar = input_id in ("delta", "indicator", "random_scalar", "constant")
            budget = scalar_budget if scalar else matrix_budget
            N_cap = fitted_radius_cap(d, cfg.N_max, budget)
            sub = RegimeConfig(cfg.c0, cfg.c1, cfg.c2, cfg.c3, N_cap)
            small, mid, large = dyadic_radii(d, sub)
            M = torus_side(N_cap)
            rng = np.random.default_rng(np.random.SeedSequence([seed, d, k]))
            f = make_input(input_id, M, d, 1 if scalar else n, rng, N_cap)
            norm_f = field_lp_norm(f, p)
            sets = {"small": small, "intermediate": mid, "large": large,
                    "union": sorted(set(small) | set(mid) | set(large))}
            label = ""
            if p < 2:
                sets = {"large": large}
                label = LOW_P_LABEL
            needed = sets.get("union", large)
            family = dict(zip(needed, maximal_family(f, needed)))
            for regime, radii in sets.items():
                t0 = time.perf_counter()
                if radii:
                    res = field_maximal_norm([family[N] for N in radii], p, tol, certificates=False)
                    ratio = res.value / norm_f
                    gap = (res.value - res.lower_bound) / norm_f
                else:
                    ratio = math.nan
                    gap = 0.0
                report.rows.append(RatioRow(d, M, p, input_id, regime, len(radii), ratio, label, gap))
                report.meta["runtime_ms"][f"{d}/{input_id}/{regime}"] = round(1e3 * (time.perf_counter() - t0), 3)
            report.meta["N_max"][f"{d}/{input_id}"] = N_cap
    return report


# ------------------------------------------------------- large-scale domination


@dataclass(frozen=True)
class DominationCheck:
    d: int
    N: float
    mc_samples: int = 10**6
    seed: int = 42

    def __post_init__(self):
        if self.mc_samples < 10**5:
            raise ValueError("domination check needs at least 1e5 Monte Carlo samples")

    @property
    def N1(self) -> float:
        return math.sqrt(self.N**2 + self.d / 4)

    @property
    def N2(self) -> float:
        return math.sqrt(self.N1**2 + self.d / 4)


@functools.lru_cache(maxsize=8)
def fitted_c2(C1: float = 1.0, d_max: int = 6) -> float:
    """C2 fitted on the lattice count/volume table for d <= d_max, N = C1 d {1,2,4}."""
    return count_volume_report(range(1, d_max + 1), (1, 2, 4), C1).c2_fit


def uniform_ball_samples(rng: np.random.Generator, d: int, radius: float, count: int,
                         shells: int = MC_SHELLS) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points in B_radius, stratified into equal-volume radial shells.

    Returns (points, shell index). Direction is a normalised Gaussian; the
    radius is radius * U^(1/d) with U uniform inside the shell's slice of [0, 1].
    """
    per = count // shells
    if per * shells != count:
        raise ValueError(f"sample count must be divisible by {shells}")
    shell = np.repeat(np.arange(shells), per)
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = (shell + rng.random(count)) / shells
    return g * (radius * u ** (1.0 / d))[:, None], shell


@dataclass
class DominationReport:
    d: int
    N: float
    N1: float
    M: int
    constant: float
    lhs: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    volume_ratio: float
    volume_bound: float
    pooled_rel_stderr: float
    max_rel_stderr: float
    meta: dict = field(default_factory=dict)

    @property
    def rhs(self) -> np.ndarray:
        return self.constant * (self.estimate + 3.0 * self.stderr)

    @property
    def pointwise_ok(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs))

    @property
    def volume_ok(self) -> bool:
        return self.volume_ratio <= self.volume_bound

    @property
    def min_slack(self) -> float:
        return float(np.min(self.rhs - self.lhs))

    def violations(self) -> np.ndarray:
        return np.argwhere(self.lhs > self.rhs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "lhs", "mc_estimate", "stderr", "rhs", "ok"])
        for idx in np.ndindex(self.lhs.shape):
            w.writerow([";".join(map(str, idx)), repr(float(self.lhs[idx])), repr(float(self.estimate[idx])),
                        repr(float(self.stderr[idx])), repr(float(self.rhs[idx])),
                        str(bool(self.lhs[idx] <= self.rhs[idx])).lower()])
        return buf.getvalue()


def _torus_convolve(f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(np.fft.fftn(f) * np.fft.fftn(kernel)).real


def large_scale_domination_check(f: TorusField, chk: DominationCheck, C1: float = 1.0,
                                 C2: float | None = None, M: int | None = None) -> DominationReport:
    """Compare M_N f with 2 C2 exp(1/(8 C1^2)) times the continuous N1-ball average of F.

    F is the piecewise-constant extension of f (constant on unit cubes
    centred at lattice points). The continuous average is estimated at every
    site from one shared stratified sample of B_N1. The field is first
    embedded in a torus wide enough that neither ball wraps.
    """
    d, N = chk.d, chk.N
    if f.n != 1 or f.d != d:
        raise ValueError("domination check needs a scalar field of matching dimension")
    vals = f.scalar.real
    if np.any(vals < 0) or np.any(f.scalar.imag != 0):
        raise ValueError("domination check needs a nonnegative real field")
    if N < C1 * d:
        raise RegimeError(f"N={N} < C1*d={C1 * d}")
    C2 = fitted_c2(C1) if C2 is None else C2
    K = 2.0 * C2 * math.exp(1.0 / (8.0 * C1**2))
    N1 = chk.N1
    reach = math.ceil(N1 + 0.5)
    M = M or f.M
    if M < 2 * reach + 1 or 2 * math.floor(N) + 1 > M:
        raise RegimeError(f"torus side {M} too small for radius {N1:.3f}")

    t0 = time.perf_counter()
    lhs = convolve_ball(f, N, "spectral").scalar.real
    lhs = np.where(np.abs(lhs) < 1e-14 * max(vals.max(), 1e-300), 0.0, lhs)

    rng = np.random.Generator(np.random.Philox(chk.seed))
    z, shell = uniform_ball_samples(rng, d, N1, chk.mc_samples)
    # F(x + z) = f(x + round(z)); tally rounded offsets per shell
    offs = np.rint(z).astype(np.int64) % M
    flat = np.ravel_multi_index(tuple(offs.T), (M,) * d)
    per = chk.mc_samples // MC_SHELLS
    mean = np.zeros_like(vals)
    var = np.zeros_like(vals)
    for h in range(MC_SHELLS):
        hist = np.bincount(flat[shell == h], minlength=M**d).reshape((M,) * d) / per
        # correlation: sum_y w(y) f(x + y) = convolution with the reflected kernel
        kern = np.roll(np.flip(hist), 1, axis=tuple(range(d)))
        m1 = _torus_convolve(vals, kern)
        m2 = _torus_convolve(vals**2, kern)
        mean += m1 / MC_SHELLS
        var += np.maximum(m2 - m1**2, 0.0) / (per - 1) / MC_SHELLS**2
    # round-off from the FFT can leave tiny negatives where the true value is 0
    mean = np.where(np.abs(mean) < 1e-14 * max(vals.max(), 1e-300), 0.0, mean)
    stderr = np.sqrt(var)

    pooled = float(np.sqrt(np.sum(var)) / np.sum(mean)) if np.sum(mean) > 0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mean > 0, stderr / mean, 0.0)
    if pooled > MC_REL_STDERR:
        raise BudgetExceededError(
            f"Monte Carlo relative standard error {pooled:.3%} exceeds {MC_REL_STDERR:.0%}")
    report = DominationReport(
        d=d, N=N, N1=N1, M=M, constant=K, lhs=lhs, estimate=mean, stderr=stderr,
        volume_ratio=(1 + d / (4 * N**2)) ** (d / 2), volume_bound=math.exp(1 / (8 * C1**2)),
        pooled_rel_stderr=pooled, max_rel_stderr=float(np.max(rel)),
        meta={"seed": chk.seed, "mc_samples": chk.mc_samples, "C1": C1, "C2": C2,
              "runtime_ms": round(1e3 * (time.perf_counter() - t0), 3)})
    return report


def domination_torus_side(d: int, N: float) -> int:
    """Smallest power of two hosting both B_N and B_N1 without wrap."""
    N1 = math.sqrt(N**2 + d / 4)
    need = max(2 * math.ceil(N1 + 0.5) + 1, 2 * math.floor(N) + 1)
    return 1 << (need - 1).bit_length()
