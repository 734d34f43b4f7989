"""Fourier multipliers of lattice-ball averages and their closed-form approximants.

The ball multiplier

    m_N(xi) = |B_N ∩ Z^d|^{-1} sum_{x in B_N ∩ Z^d} exp(2 pi i <x, xi>)

is evaluated by a dynamic program over the squared radius, one coordinate at
a time. Pairing x with -x makes every per-coordinate weight the real number
2 cos(2 pi x xi_k), so the accumulators are real. At every step both the
weighted table and the plain count table are divided by the same scale
(the count table's maximum); their ratio is unaffected and nothing
overflows even when the count has thousands of digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceededError, RegimeError
from .lattice import BallSpec

DEFAULT_DP_BUDGET = 2**34
SMALL_SCALE_CONSTANT = 17.0
SLACK_TOL = 1e-9


def canonicalize(xi) -> np.ndarray:
    """Representative of xi modulo 1 with every component in (-1/2, 1/2]."""
    xi = np.asarray(xi, dtype=float)
    r = xi - np.floor(xi + 0.5)
    return np.where(r == -0.5, 0.5, r)


@dataclass(frozen=True)
class FrequencyPoint:
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", canonicalize(np.atleast_1d(self.xi)))

    @property
    def d(self) -> int:
        return self.xi.shape[0]

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.xi**2)))

    @property
    def v_set(self) -> frozenset[int]:
        a = frozenset(np.flatnonzero(np.cos(2 * np.pi * self.xi) < 0).tolist())
        b = frozenset(np.flatnonzero(np.abs(self.xi) > 0.25).tolist())
        if a != b:
            raise AssertionError(f"cosine and interval tests disagree at {self.xi}")
        return a


def v_count(xis: np.ndarray) -> np.ndarray:
    """|V_xi| for each row of a (B, d) array of canonical frequencies."""
    return np.count_nonzero(np.abs(xis) > 0.25, axis=-1)


def kappa(d: int, N: float) -> float:
    return N / math.sqrt(d)


# --------------------------------------------------------------------- the DP


def _dp_cost(spec: BallSpec) -> int:
    return spec.d * spec.level * (2 * spec.coord_bound + 1)


def _check_budget(spec: BallSpec, budget: int) -> None:
    if spec.q != "two":
        raise ValueError("multipliers are implemented for Euclidean balls only")
    cost = _dp_cost(spec)
    if cost > budget:
        raise BudgetExceededError(
            f"multiplier DP needs {cost} inner updates per frequency, budget is {budget}",
            required=cost, budget=budget)


def _weighted_ball_sums(spec: BallSpec, weight_fn, n_batch: int, compensated: bool = True) -> np.ndarray:
    """Return sum_x prod_k w_k(x_k) / count for each batch entry.

    ``weight_fn(k, xs)`` gives the (n_batch, len(xs)) table of per-coordinate
    weights for axis ``k`` at the integers ``xs = 1..floor N``; the weight of
    x=0 is 1 and weights are taken symmetric in ±x.
    """
    L = spec.level
    X = spec.coord_bound
    xs = np.arange(1, X + 1)
    sq = xs * xs
    h = np.zeros(L + 1)
    h[0] = 1.0
    g = np.zeros((n_batch, L + 1))
    g[:, 0] = 1.0
    for k in range(spec.d):
        w = 2.0 * weight_fn(k, xs)
        hn = h.copy()
        s = g.copy()
        c = np.zeros_like(g) if compensated else None
        for j, q in enumerate(sq):
            if q > L:
                break
            hn[q:] += 2.0 * h[: L + 1 - q]
            t = w[:, j, None] * g[:, : L + 1 - q]
            if compensated:
                # TwoSum: tot + err == sub + t exactly
                sub = s[:, q:]
                tot = sub + t
                bp = tot - sub
                c[:, q:] += (sub - (tot - bp)) + (t - bp)
                s[:, q:] = tot
            else:
                s[:, q:] += t
        g = s + c if compensated else s
        scale = hn.max()
        h = hn / scale
        g /= scale
    return g.sum(axis=1) / h.sum()


def exp_sum_multiplier_batch(spec: BallSpec, xis, budget: int = DEFAULT_DP_BUDGET,
                             compensated: bool = True) -> np.ndarray:
    """Ball multiplier at each row of ``xis`` (shape (B, d)); complex output."""
    _check_budget(spec, budget)
    xis = canonicalize(np.atleast_2d(np.asarray(xis, dtype=float)))
    if xis.shape[1] != spec.d:
        raise ValueError(f"frequencies have dimension {xis.shape[1]}, ball has {spec.d}")

    def weights(k, xs):
        return np.cos(2 * np.pi * np.outer(xis[:, k], xs))

    vals = _weighted_ball_sums(spec, weights, len(xis), compensated)
    return vals.astype(complex)


def exp_sum_multiplier(spec: BallSpec, xi, budget: int = DEFAULT_DP_BUDGET) -> complex:
    """m_N(xi) for one frequency."""
    return complex(exp_sum_multiplier_batch(spec, np.atleast_1d(xi)[None, :], budget)[0])


def exp_sum_brute_force(points: np.ndarray, xi):
    """Direct sum over an enumerated point set; the oracle for the DP.

    ``xi`` of shape (d,) gives a complex number, shape (B, d) an array.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        return complex(np.mean(np.exp(2j * np.pi * (points @ xi))))
    return np.mean(np.exp(2j * np.pi * (xi @ points.T)), axis=1)


def alternating_mass(spec: BallSpec, budget: int = DEFAULT_DP_BUDGET) -> float:
    """|B_N ∩ Z^d|^{-1} sum_x (-1)^{x_1 + ... + x_d}."""
    _check_budget(spec, budget)

    def weights(k, xs):
        return np.where(xs % 2 == 0, 1.0, -1.0)[None, :]

    return float(_weighted_ball_sums(spec, weights, 1)[0])


def _sin2_sum(xi: np.ndarray) -> np.ndarray:
    return np.sum(np.sin(np.pi * xi) ** 2, axis=-1)


def _cos2_sum(xi: np.ndarray) -> np.ndarray:
    return np.sum(np.cos(np.pi * xi) ** 2, axis=-1)


def heat_multiplier(t: float, xi):
    """exp(-t * sum_k sin^2(pi xi_k)); vectorised over leading axes of xi."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return np.exp(-t * _sin2_sum(canonicalize(xi)))


def lambda1(d: int, N: float, xi):
    return heat_multiplier(kappa(d, N) ** 2, xi)


def lambda2(d: int, N: float, xi, alt_mass: float | None = None,
            budget: int = DEFAULT_DP_BUDGET):
    if alt_mass is None:
        alt_mass = alternating_mass(BallSpec(d, N), budget)
    return alt_mass * np.exp(-kappa(d, N) ** 2 * _cos2_sum(canonicalize(xi)))


# ------------------------------------------------------------------ sampling


@dataclass(frozen=True)
class SampleSpec:
    """Seeded stratified frequency sample.

    Sample ``i`` belongs to stratum ``strata[i % len(strata)]`` and is drawn
    from its own generator seeded by (seed, i), so any subset of indices can
    be regenerated independently and in any order.

    Strata: ``uniform`` on the torus; ``gaussian`` with per-component scale
    1/(10 kappa sqrt(d)); ``corner`` near (±1/2, ..., ±1/2); ``shell`` with
    norm log-uniform in [1/(10 kappa), 10/kappa] and a uniform direction.
    """

    n: int = 100
    seed: int = 0
    strata: tuple[str, ...] = ("uniform", "gaussian", "corner")
    offset: int = 0


def _draw(stratum: str, rng: np.random.Generator, d: int, kap: float) -> np.ndarray:
    if stratum == "uniform":
        return rng.uniform(-0.5, 0.5, d)
    if stratum == "gaussian":
        return rng.normal(0.0, 1.0 / (10 * kap * math.sqrt(d)), d)
    if stratum == "corner":
        signs = rng.choice([-1.0, 1.0], d)
        return signs * (0.5 - np.abs(rng.normal(0.0, 0.02, d)))
    if stratum == "shell":
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        r = math.exp(rng.uniform(math.log(0.1 / kap), math.log(10.0 / kap)))
        return direction * min(r, 0.5)
    raise ValueError(f"unknown stratum {stratum!r}")


def sample_frequencies(d: int, kap: float, spec: SampleSpec) -> np.ndarray:
    out = np.empty((spec.n, d))
    for j in range(spec.n):
        i = j + spec.offset
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        out[j] = _draw(spec.strata[i % len(spec.strata)], rng, d, kap)
    return canonicalize(out)


def _resolve_samples(d: int, N: float, samples) -> np.ndarray:
    if isinstance(samples, SampleSpec):
        return sample_frequencies(d, kappa(d, N), samples)
    xis = canonicalize(np.atleast_2d(np.asarray(samples, dtype=float)))
    if xis.shape[1] != d:
        raise ValueError("sample dimension mismatch")
    return xis


# ------------------------------------------------------------------- reports


@dataclass
class MultiplierRow:
    xi: np.ndarray
    m_value: complex
    lambda1: float
    lambda2: float
    heat: float
    lhs: float
    rhs: float
    slack: float
    branch: str


@dataclass
class MultiplierReport:
    kind: str
    d: int
    N: float
    rows: list[MultiplierRow] = field(default_factory=list)
    fitted_constants: dict[str, float] = field(default_factory=dict)
    tol: float = SLACK_TOL

    @property
    def violations(self) -> list[MultiplierRow]:
        return [r for r in self.rows if not r.slack >= -self.tol]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_csv(self, trailer: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi", "m_re", "m_im", "lambda1", "lambda2", "lhs", "rhs", "slack", "branch"])
        for r in self.rows:
            w.writerow([";".join(repr(float(v)) for v in r.xi), repr(r.m_value.real),
                        repr(r.m_value.imag), repr(r.lambda1), repr(r.lambda2), repr(r.lhs),
                        repr(r.rhs), repr(r.slack), r.branch])
        if trailer:
            buf.write("# " + json.dumps(self.trailer(), sort_keys=True) + "\n")
        return buf.getvalue()

    def trailer(self) -> dict:
        return {"kind": self.kind, "d": self.d, "N": self.N,
                "fitted_constants": self.fitted_constants,
                "violations": len(self.violations)}


def _rows(d, N, xis, m, lhs, rhs, branch, alt_mass=None):
    lam1 = lambda1(d, N, xis)
    lam2 = lambda2(d, N, xis, alt_mass) if alt_mass is not None else np.full(len(xis), np.nan)
    heat = heat_multiplier(kappa(d, N) ** 2, xis)
    return [MultiplierRow(xis[i], complex(m[i]), float(lam1[i]), float(lam2[i]), float(heat[i]),
                          float(lhs[i]), float(rhs[i]), float(rhs[i] - lhs[i]),
                          branch if isinstance(branch, str) else branch[i])
            for i in range(len(xis))]


def verify_origin_bound(d: int, N: float, samples, budget: int = DEFAULT_DP_BUDGET) -> MultiplierReport:
    """|m_N(xi) - 1| <= 2 pi^2 kappa^2 |xi|^2 on the sample."""
    xis = _resolve_samples(d, N, samples)
    m = exp_sum_multiplier_batch(BallSpec(d, N), xis, budget)
    lhs = np.abs(m - 1.0)
    rhs = 2 * np.pi**2 * kappa(d, N) ** 2 * np.sum(xis**2, axis=1)
    rep = MultiplierReport("origin", d, N, _rows(d, N, xis, m, lhs, rhs, "origin"))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / rhs, 0.0)
    rep.fitted_constants["max_lhs_over_rhs"] = float(ratios.max(initial=0.0))
    return rep


def decay_regime_ok(d: int, N: float) -> bool:
    k = kappa(d, N)
    return 10 <= k <= 50 * math.sqrt(d)


def verify_decay_bound(d: int, N: float, samples, C_fit: float | None = None,
                       budget: int = DEFAULT_DP_BUDGET) -> MultiplierReport:
    """|m_N(xi)| <= C (1/(kappa |xi|) + kappa^(-1/7)) for 10 <= kappa <= 50 sqrt(d).

    Without ``C_fit`` the smallest C that works on the sample is reported as
    ``fitted_constants['C']`` and used for the rhs column.
    """
    if not decay_regime_ok(d, N):
        raise RegimeError(f"kappa(d={d}, N={N}) = {kappa(d, N):.4g} outside [10, 50 sqrt(d)]")
    k = kappa(d, N)
    xis = _resolve_samples(d, N, samples)
    m = exp_sum_multiplier_batch(BallSpec(d, N), xis, budget)
    norms = np.sqrt(np.sum(xis**2, axis=1))
    with np.errstate(divide="ignore"):
        base = 1.0 / (k * norms) + k ** (-1.0 / 7.0)
    lhs = np.abs(m)
    C_emp = float(np.max(lhs / base))
    C = C_emp if C_fit is None else C_fit
    rep = MultiplierReport("decay", d, N, _rows(d, N, xis, m, lhs, C * base, "decay"))
    rep.fitted_constants["C"] = C_emp
    if C_fit is not None:
        rep.fitted_constants["C_given"] = float(C_fit)
    return rep


def small_scale_regime_ok(d: int, N: float) -> bool:
    return N >= 2**4.5 and kappa(d, N) <= 0.2


def verify_small_scale_approx(d: int, N: float, samples, c_fit: float | None = None,
                              budget: int = DEFAULT_DP_BUDGET) -> MultiplierReport:
    """Distance of m_N to lambda^1 (|V_xi| <= d/2) or lambda^2 (otherwise).

    Checked bound: 17 min{exp(-c kappa^2 S / 400), kappa^2 S}, with S the sum
    of sin^2 (first branch) or cos^2 (second branch). Without ``c_fit`` the
    rhs column is the algebraic arm 17 kappa^2 S, and the largest c in (0, 1]
    for which the exponential arm holds on every row is reported as
    ``fitted_constants['c']`` (``c_exists`` is 1.0 when it is positive).
    """
    if not small_scale_regime_ok(d, N):
        raise RegimeError(f"need N >= 2^4.5 and kappa <= 1/5; got d={d}, N={N}")
    if c_fit is not None and not 0 < c_fit < 1:
        raise ValueError("c_fit must lie in (0, 1)")
    k2 = kappa(d, N) ** 2
    xis = _resolve_samples(d, N, samples)
    spec = BallSpec(d, N)
    alt = alternating_mass(spec, budget)
    m = exp_sum_multiplier_batch(spec, xis, budget)
    second = v_count(xis) > d / 2
    S = np.where(second, _cos2_sum(xis), _sin2_sum(xis))
    lam = np.where(second, lambda2(d, N, xis, alt), lambda1(d, N, xis))
    lhs = np.abs(m - lam)
    algebraic = SMALL_SCALE_CONSTANT * k2 * S
    if c_fit is None:
        rhs = algebraic
    else:
        rhs = SMALL_SCALE_CONSTANT * np.minimum(np.exp(-c_fit * k2 * S / 400.0), k2 * S)
    branch = np.where(second, "ii", "i")
    rep = MultiplierReport("small_scale", d, N, _rows(d, N, xis, m, lhs, rhs, branch, alt))
    # exponential arm: lhs <= 17 exp(-c k2 S / 400)  <=>  c <= 400 ln(17 / lhs) / (k2 S)
    mask = (lhs > 0) & (S > 0)
    if np.any(lhs >= SMALL_SCALE_CONSTANT):
        c_best = 0.0
    elif np.any(mask):
        c_best = float(np.min(400.0 * np.log(SMALL_SCALE_CONSTANT / lhs[mask]) / (k2 * S[mask])))
    else:
        c_best = math.inf
    rep.fitted_constants["c"] = min(c_best, 1.0)
    rep.fitted_constants["c_raw"] = c_best
    rep.fitted_constants["c_exists"] = float(c_best > 0)
    rep.fitted_constants["alternating_mass"] = alt
    rep.fitted_constants["algebraic_arm_violations"] = float(np.sum(algebraic - lhs < -SLACK_TOL))
    return rep
