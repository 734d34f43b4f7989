"""Finite dynamical systems on Z_M^d and their ergodic ball averages.

The action is alpha(v) f(x) = W(v) f(x + v) W(v)^† with W(v) = prod_k U_k^{v_k}
for commuting twist unitaries U_k (identity for the pure shift). Averages
run over the true lattice ball, reduced mod M.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmbeddingError, ShapeMismatchError
from .lattice import BallSpec, count_ball, enumerate_ball, symmetric_difference_count
from .ncmax import DEFAULT_TOL, field_lp_norm, majorant_batch, vector_pnorm
from .torus import TorusField, ball_multiplier_grid, convolve_ball

UNITARY_TOL = 1e-10
COMMUTE_TOL = 1e-12
TAIL_TOL = 0.1


@dataclass(frozen=True, eq=False)
class ShiftSystem:
    """Z^d acting on Z_M^d by translation, optionally twisted by unitaries."""

    M: int
    d: int
    n: int = 1
    twist: tuple | None = None
    c_G: int = 1

    def __post_init__(self):
        if self.twist is None:
            return
        us = tuple(np.asarray(u, dtype=complex) for u in self.twist)
        if len(us) != self.d or any(u.shape != (self.n, self.n) for u in us):
            raise ShapeMismatchError("need d twist unitaries of size n")
        eye = np.eye(self.n)
        for u in us:
            if np.max(np.abs(u @ u.conj().T - eye)) > UNITARY_TOL:
                raise ValueError("twist matrix is not unitary")
            if np.max(np.abs(np.linalg.matrix_power(u, self.M) - eye)) > UNITARY_TOL:
                raise ValueError("twist matrix does not satisfy U^M = I")
        for i, a in enumerate(us):
            for b in us[i + 1:]:
                if np.max(np.abs(a @ b - b @ a)) > COMMUTE_TOL:
                    raise ValueError("twist matrices do not commute")
        object.__setattr__(self, "twist", us)

    @classmethod
    def diagonal_twist(cls, M: int, exponents) -> "ShiftSystem":
        """Twist U_k = diag(exp(2 pi i e_{k,l} / M)); ``exponents`` has shape (d, n)."""
        e = np.asarray(exponents, dtype=np.int64)
        us = tuple(np.diag(np.exp(2j * np.pi * (row % M) / M)) for row in e)
        return cls(M, e.shape[0], e.shape[1], us)

    @property
    def is_pure_shift(self) -> bool:
        return self.twist is None

    def unitary(self, v) -> np.ndarray:
        """W(v) = prod_k U_k^{v_k}, exponents reduced mod M."""
        w = np.eye(self.n, dtype=complex)
        if self.twist is None:
            return w
        for u, vk in zip(self.twist, v):
            w = w @ np.linalg.matrix_power(u, int(vk) % self.M)
        return w

    def check_field(self, f: TorusField) -> None:
        if (f.M, f.d, f.n) != (self.M, self.d, self.n):
            raise ShapeMismatchError(f"field shape {f.shape} does not match system {(self.M, self.d, self.n)}")


def apply_action(sys: ShiftSystem, v, f: TorusField) -> TorusField:
    """(alpha(v) f)(x) = W(v) f(x + v) W(v)^†."""
    sys.check_field(f)
    v = [int(t) for t in v]
    if len(v) != sys.d:
        raise ShapeMismatchError("translation vector has wrong dimension")
    shifted = np.roll(f.values, tuple(-t for t in v), axis=tuple(range(sys.d)))
    if sys.is_pure_shift:
        return TorusField(shifted, f.flags)
    w = sys.unitary(v)
    return f.with_values(w @ shifted @ w.conj().T, f.flags)


def ergodic_average(sys: ShiftSystem, f: TorusField, N: float) -> TorusField:
    """|B_N ∩ Z^d|^{-1} sum_{y in B_N ∩ Z^d} alpha(y) f.

    Offsets are visited as y = -p for the ball points p in lexicographic order;
    when the ball is wider than the torus, coinciding offsets mod M are grouped
    with their multiplicities. For the pure shift this reproduces the spatial
    ball convolution operation for operation.
    """
    sys.check_field(f)
    pts = enumerate_ball(BallSpec(sys.d, N))
    acc = np.zeros_like(f.values)
    if 2 * math.floor(N) + 1 <= sys.M:
        for p in pts:
            acc += apply_action(sys, -p, f).values
        return f.with_values(acc / len(pts), f.flags)
    red, counts = np.unique(pts % sys.M, axis=0, return_counts=True)
    for r, w in zip(red, counts / len(pts)):
        acc += w * apply_action(sys, -r, f).values
    return f.with_values(acc, f.flags)


def fixed_point_expectation(sys: ShiftSystem, f: TorusField) -> TorusField:
    """(1/M^d) sum_{v in Z_M^d} alpha(v) f, the projection onto invariant fields."""
    sys.check_field(f)
    acc = np.zeros_like(f.values)
    for v in np.ndindex(*(sys.M,) * sys.d):
        acc += apply_action(sys, v, f).values
    return f.with_values(acc / sys.M**sys.d, f.flags)


def coboundary_bound(d: int, N: float, v) -> float:
    """|B_N △ (B_N + v)| / |B_N ∩ Z^d|, bounding the average of h - alpha(v) h by |h|_inf."""
    spec = BallSpec(d, N)
    return symmetric_difference_count(spec, v) / count_ball(spec).count


# ------------------------------------------------------------- transference


def transference_slack(d: int, R: float, eps: float, p: float, c_G: int = 1) -> float:
    """((1 + eps/d) + 1/(2 c_G R))^(d/p) - 1."""
    if math.isinf(p):
        return 0.0
    return ((1 + eps / d) + 1 / (2 * c_G * R)) ** (d / p) - 1


@dataclass
class TransferenceReport:
    d: int
    M: int
    p: float
    R: float
    eps: float
    radii: list
    lhs: float
    rhs: float
    slack: float
    c_emp: float
    companion_side: int
    window: int
    identity_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + self.tol)

    def csv_row(self) -> list:
        p = "inf" if math.isinf(self.p) else repr(float(self.p))
        return [self.d, self.M, p, repr(float(self.R)), repr(float(self.eps)), repr(self.lhs),
                repr(self.rhs), repr(self.slack)]


TRANSFERENCE_COLUMNS = ["d", "M", "p", "R", "eps", "lhs", "rhs", "slack"]


def transference_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSFERENCE_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def _normalised_maximal_norm(stack: np.ndarray, p: float, tol: float, sites_per_unit: int) -> float:
    """Maximal norm of a family given as (S, m, n, n), trace normalised by ``sites_per_unit``."""
    if stack.shape[-1] == 1:
        stack = np.abs(stack).astype(complex)
    res = majorant_batch(stack, p, tol)
    return float(vector_pnorm(res.value, p)) / sites_per_unit ** (0 if math.isinf(p) else 1 / p)


def transference_check(sys: ShiftSystem, f: TorusField, p: float, radii, R: int, eps: float,
                       tol: float = DEFAULT_TOL) -> TransferenceReport:
    """Compare the ergodic maximal norm of f with the lattice maximal norm of its localisation.

    phi(y) = alpha(y) f for y in the cube of half-width L = floor(c_G R (1 + eps/d)),
    zero elsewhere, lives on a companion torus of side 2(L + max radius) + 1 so
    no average wraps. With C_emp = |sup_t M_t phi|_p / |phi|_p the chain gives
    |sup_t A_t f|_p <= (1 + slack) C_emp |f|_p, where the trace on the system is
    normalised. Radii must satisfy t < R eps / d so that averages centred in
    the inner cube stay inside the window.
    """
    if not sys.is_pure_shift:
        raise ValueError("transference check is instantiated for the pure shift")
    sys.check_field(f)
    d, M = sys.d, sys.M
    radii = sorted(radii)
    if any(t >= R * eps / d for t in radii):
        raise EmbeddingError(f"radii must stay below R eps / d = {R * eps / d}")
    L = math.floor(sys.c_G * R * (1 + eps / d))
    t_max = math.floor(max(radii))
    side = 2 * (L + t_max) + 1
    sites = side**d * M**d * f.n**2
    if sites > 2**24:
        raise EmbeddingError(f"localisation window needs {sites} entries; reduce R")

    averages = [ergodic_average(sys, f, t) for t in radii]
    lhs_stack = np.stack([a.sites() for a in averages], axis=1)
    lhs = _normalised_maximal_norm(lhs_stack, p, tol, M**d)

    # phi on Z_side^d x Z_M^d: the window is centred at the origin of the companion torus
    phi = np.zeros((side,) * d + f.values.shape, dtype=complex)
    for y in np.ndindex(*(2 * L + 1,) * d):
        y = tuple(k - L for k in y)
        phi[tuple(k % side for k in y)] = apply_action(sys, y, f).values
    axes = tuple(range(d))
    phi_hat = np.fft.fftn(phi, axes=axes)
    expand = (...,) + (None,) * (d + 2)
    family = [np.fft.ifftn(phi_hat * ball_multiplier_grid(side, d, t)[expand], axes=axes) for t in radii]
    phi_stack = np.stack([g.reshape(-1, f.n, f.n) for g in family], axis=1)
    phi_stack = 0.5 * (phi_stack + np.conj(np.swapaxes(phi_stack, -1, -2)))
    sup_phi = _normalised_maximal_norm(phi_stack, p, tol, M**d)
    expo = 0 if math.isinf(p) else d / p
    norm_f = field_lp_norm(f, p) / M**expo
    # |phi|_p^p is (2L+1)^d copies of |f|_p^p, the action being trace preserving
    c_emp = sup_phi / (norm_f * (2 * L + 1) ** expo)
    slack = transference_slack(d, R, eps, p, sys.c_G)
    ident = max(a.max_abs_diff(convolve_ball(f, t, "spatial", wrap=2 * math.floor(t) + 1 > M))
                for a, t in zip(averages, radii))
    return TransferenceReport(d, M, p, R, eps, radii, lhs, (1 + slack) * c_emp * norm_f, slack, c_emp,
                              side, L, ident, tol)


# ---------------------------------------------------------------- b.a.u. search


@dataclass
class BauReport:
    epsilon: float
    e: np.ndarray
    trace_deficit: float
    residuals: list[float]
    weights: list[float]
    tail_tol: float
    converged: bool

    def to_json(self) -> str:
        flat = np.asarray(self.e).reshape(-1)
        return json.dumps({
            "epsilon": self.epsilon,
            "shape": list(np.shape(self.e)),
            "e": [[float(z.real), float(z.imag)] for z in flat],
            "trace_deficit": self.trace_deficit,
            "residuals": self.residuals,
            "weights": self.weights,
            "tail_tol": self.tail_tol,
            "converged": self.converged,
        })


def _as_sites(x) -> tuple[np.ndarray, tuple]:
    if isinstance(x, TorusField):
        return x.sites(), x.values.shape
    a = np.atleast_2d(np.asarray(x, dtype=complex))
    return a[None], a.shape


def _tail_residual(res: list[float]) -> float:
    k = max(1, len(res) // 4)
    return max(res[-k:])


def bau_projection_search(seq, limit, eps: float, weights=None, tail_tol: float = TAIL_TOL) -> BauReport:
    """Greedy spectral search for a projection e with small trace deficit.

    S = sum_N w_N |s_N - limit|^2 (default w_N = 2^-index). Eigendirections of
    S are removed from e, largest eigenvalue first, while the sequence is not
    yet converged on e and the normalised deficit tau(1 - e) stays below eps.
    The sequence counts as converged on e when the largest residual
    |e (s_N - limit) e|_inf over the last quarter of the sequence is at most
    ``tail_tol`` times the largest residual overall.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    seq = list(seq)
    diffs = []
    ref, shape = _as_sites(limit)
    for s in seq:
        a, sh = _as_sites(s)
        if sh != shape:
            raise ShapeMismatchError("sequence and limit shapes differ")
        diffs.append(a - ref)
    weights = [2.0 ** -(i + 1) for i in range(len(seq))] if weights is None else list(weights)
    sites, n = ref.shape[0], ref.shape[-1]
    S = sum(w * (np.conj(np.swapaxes(x, -1, -2)) @ x) for w, x in zip(weights, diffs))
    S = 0.5 * (S + np.conj(np.swapaxes(S, -1, -2))) if diffs else np.zeros_like(ref)
    lam, vec = np.linalg.eigh(S)
    # global order of eigendirections, largest first; ties broken by position
    order = sorted(((-lam[s, j], s, j) for s in range(sites) for j in range(n)))
    keep = np.ones((sites, n), dtype=bool)
    unit = 1.0 / (sites * n)

    def projection() -> np.ndarray:
        return (vec * keep[:, None, :]) @ np.conj(np.swapaxes(vec, -1, -2))

    def residuals(e: np.ndarray) -> list[float]:
        return [float(np.max(np.linalg.norm(e @ x @ e, ord=2, axis=(-2, -1)), initial=0.0)) for x in diffs]

    e = projection()
    res = residuals(e)
    removed = 0
    for neg, s, j in order:
        top = max(res, default=0.0)
        if top == 0.0 or _tail_residual(res) <= tail_tol * top:
            break
        if (removed + 1) * unit >= eps or -neg <= 0.0:
            break
        keep[s, j] = False
        removed += 1
        e = projection()
        res = residuals(e)
    top = max(res, default=0.0)
    converged = top == 0.0 or _tail_residual(res) <= tail_tol * top
    e_out = e.reshape(shape)
    return BauReport(eps, e_out, removed * unit, res, weights, tail_tol, converged)
