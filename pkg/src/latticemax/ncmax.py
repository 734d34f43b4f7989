"""Schatten norms, square-function norms and the selfadjoint maximal norm.

The maximal norm of a hermitian family (x_j) is inf{ |a|_p : -a <= x_j <= a }.
It is computed per site by a batched consensus ADMM on

    minimise |a|_p^p / p   subject to   a >= y_i  for y_i in (+x_j, -x_j),

whose scaled multipliers give a dual feasible point and hence a lower bound.
Every answer comes with a feasible ``a`` and the gap to the best lower bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotHermitianError, ShapeMismatchError
from .torus import TorusField

HERMITIAN_INPUT_TOL = 1e-10
DEFAULT_TOL = 1e-4
MAX_ITER = 50_000
CHECK_EVERY = 25
PSD_TOL = 1e-12


def _dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + _dagger(a))


def vector_pnorm(s: np.ndarray, p: float, axis=-1) -> np.ndarray:
    """p-norm of nonnegative entries along ``axis``, scaled against overflow."""
    s = np.asarray(s, dtype=float)
    if math.isinf(p):
        return np.max(s, axis=axis, initial=0.0)
    top = np.max(s, axis=axis, keepdims=True, initial=0.0)
    safe = np.where(top > 0, top, 1.0)
    out = np.sum((s / safe) ** p, axis=axis) ** (1.0 / p)
    return out * np.squeeze(safe, axis=axis)


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    return p


def is_hermitian(x: np.ndarray, tol: float = HERMITIAN_INPUT_TOL) -> bool:
    x = np.asarray(x)
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    return float(np.max(np.abs(x - _dagger(x)), initial=0.0)) <= tol * scale


def singular_values(x: np.ndarray) -> np.ndarray:
    """Singular values of a (batch of) square matrices, via hermitian eigensolves."""
    x = np.asarray(x, dtype=complex)
    if is_hermitian(x):
        return np.abs(np.linalg.eigvalsh(_herm(x)))
    return np.sqrt(np.clip(np.linalg.eigvalsh(_herm(_dagger(x) @ x)), 0.0, None))


def schatten_norm(x, p: float) -> float:
    """(tr |x|^p)^(1/p) with the unnormalised trace; operator norm at p = inf."""
    p = _check_p(p)
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    return float(vector_pnorm(singular_values(x), p))


def field_lp_norm(f: TorusField, p: float) -> float:
    """(sum_x |f(x)|_p^p)^(1/p); the largest site norm at p = inf."""
    p = _check_p(p)
    site = vector_pnorm(singular_values(f.sites()), p)
    return float(vector_pnorm(site, p))


# -------------------------------------------------------------- certificates


@dataclass
class MajorantCertificate:
    """A feasible majorant ``a`` (-a <= x_j <= a) and the quality of its norm."""

    p: float
    value: float
    a: np.ndarray
    feasibility_residual: float
    gap_estimate: float
    lower_bound: float
    converged: bool
    iterations: int = 0

    def to_json(self) -> str:
        flat = np.asarray(self.a).reshape(-1)
        return json.dumps({
            "p": "inf" if math.isinf(self.p) else self.p,
            "value": self.value,
            "a": [[float(z.real), float(z.imag)] for z in flat],
            "residual": self.feasibility_residual,
            "gap": self.gap_estimate,
            "converged": self.converged,
        })

    @classmethod
    def from_json(cls, text: str) -> "MajorantCertificate":
        obj = json.loads(text)
        p = math.inf if obj["p"] == "inf" else float(obj["p"])
        a = np.array([complex(r, i) for r, i in obj["a"]])
        n = math.isqrt(len(a))
        return cls(p, obj["value"], a.reshape(n, n), obj["residual"], obj["gap"],
                   obj["value"] - obj["gap"], obj["converged"])


def feasibility_residual(a: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """max_j of the most negative eigenvalue of a -+ x_j, clipped at 0.

    ``a`` has shape (..., n, n) and ``xs`` shape (..., m, n, n).
    """
    lo_plus = np.linalg.eigvalsh(_herm(a[..., None, :, :] - xs))[..., 0]
    lo_minus = np.linalg.eigvalsh(_herm(a[..., None, :, :] + xs))[..., 0]
    worst = np.minimum(lo_plus.min(axis=-1), lo_minus.min(axis=-1))
    return np.maximum(-worst, 0.0)


def _spectral_apply(v: np.ndarray, fn) -> np.ndarray:
    w, q = np.linalg.eigh(v)
    return (q * fn(w)[..., None, :]) @ _dagger(q)


def _psd_part(v: np.ndarray) -> np.ndarray:
    return _spectral_apply(v, lambda w: np.maximum(w, 0.0))


def _abs_matrix(v: np.ndarray) -> np.ndarray:
    return _spectral_apply(v, np.abs)


def _prox_power(w: np.ndarray, p: float, step: float) -> np.ndarray:
    """argmin_t |t|^p / p + (t - w)^2 / (2 step), elementwise."""
    mag = np.abs(w)
    if p == 1.0:
        return np.sign(w) * np.maximum(mag - step, 0.0)
    if p == 2.0:
        return w / (1.0 + step)
    # s + step * s^(p-1) = |w| has a unique root in [0, |w|]; bisect
    lo = np.zeros_like(mag)
    hi = mag.copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        too_big = mid + step * mid ** (p - 1.0) > mag
        hi = np.where(too_big, mid, hi)
        lo = np.where(too_big, lo, mid)
    return np.sign(w) * 0.5 * (lo + hi)


def _schatten_batch(a: np.ndarray, p: float) -> np.ndarray:
    return vector_pnorm(np.abs(np.linalg.eigvalsh(a)), p)


def _dual_bound(z: np.ndarray, ys: np.ndarray, p: float) -> np.ndarray:
    """sum_i tr(Z_i y_i) / |sum_i Z_i|_{p'} for PSD Z_i; a lower bound on the optimum."""
    q = math.inf if p == 1.0 else (1.0 if math.isinf(p) else p / (p - 1.0))
    num = np.real(np.einsum("...ijk,...ikj->...", z, ys))
    den = _schatten_batch(_herm(z.sum(axis=-3)), q)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


@dataclass
class _BatchResult:
    a: np.ndarray
    value: np.ndarray
    lower: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def _constraint_set(xs: np.ndarray) -> np.ndarray:
    """Stack +x_j and -x_j; (..., m, n, n) -> (..., 2m, n, n)."""
    return np.concatenate([xs, -xs], axis=-3)


def _admm_batch(xs: np.ndarray, p: float, tol: float, max_iter: int, rho: float = 1.0) -> _BatchResult:
    """Solve a batch of majorant problems; xs has shape (S, m, n, n), normalised."""
    S, m, n, _ = xs.shape
    # for a PSD family a >= x_j already gives a >= -x_j
    if np.min(np.linalg.eigvalsh(xs)) >= -PSD_TOL:
        ys = xs
    else:
        ys = _constraint_set(xs)
    k = ys.shape[1]
    singleton = np.max(vector_pnorm(np.abs(np.linalg.eigvalsh(xs)), p), axis=-1)

    # start from the explicit feasible point sum_j |x_j|
    abs_x = _abs_matrix(xs)
    upper_a = abs_x.sum(axis=1)
    best_a = upper_a.copy()
    best_val = _schatten_batch(upper_a, p)
    best_lower = singleton.copy()
    # a member whose |x_k| dominates the whole family is optimal: value = |x_k|_p = singleton bound
    for j in range(m):
        hit = (feasibility_residual(abs_x[:, j], xs) <= PSD_TOL) & (_schatten_batch(abs_x[:, j], p) < best_val)
        best_a[hit] = abs_x[hit, j]
        best_val[hit] = _schatten_batch(abs_x[hit, j], p)
    best_lower = np.minimum(best_lower, best_val)
    converged = best_val - best_lower <= tol * best_val
    iterations = np.zeros(S, dtype=int)

    a = upper_a.copy()
    b = np.repeat(a[:, None], k, axis=1)
    u = np.zeros_like(b)
    active = np.nonzero(~converged)[0]
    it = 0
    while active.size and it < max_iter:
        ya, aa, ba, ua = ys[active], a[active], b[active], u[active]
        for _ in range(CHECK_EVERY):
            v = (ba - ua).mean(axis=1)
            aa = _herm(_spectral_apply(_herm(v), lambda w: _prox_power(w, p, 1.0 / (k * rho))))
            ba = ya + _psd_part(_herm(aa[:, None] + ua - ya))
            ua = ua + aa[:, None] - ba
        it += CHECK_EVERY
        a[active], b[active], u[active] = aa, ba, ua

        # feasible candidate: shift a by its worst constraint violation
        shift = feasibility_residual(aa, xs[active])
        cand = aa + shift[:, None, None] * np.eye(n)
        cand_val = _schatten_batch(cand, p)
        lower = _dual_bound(_psd_part(_herm(-ua)), ya, p)

        better = cand_val < best_val[active]
        best_a[active[better]] = cand[better]
        best_val[active[better]] = cand_val[better]
        best_lower[active] = np.maximum(best_lower[active], lower)
        iterations[active] = it
        done = best_val[active] - best_lower[active] <= tol * best_val[active]
        converged[active[done]] = True
        active = active[~done]

    residual = feasibility_residual(best_a, xs)
    return _BatchResult(best_a, best_val, best_lower, residual, converged, iterations)


def _exact_batch(xs: np.ndarray, p: float) -> _BatchResult | None:
    """Closed forms: scalar fibres and p = inf."""
    S, m, n, _ = xs.shape
    if n == 1:
        val = np.max(np.abs(xs[..., 0, 0]), axis=1)
        a = val[:, None, None].astype(complex)
    elif math.isinf(p):
        val = np.max(vector_pnorm(np.abs(np.linalg.eigvalsh(xs)), math.inf), axis=1)
        a = val[:, None, None] * np.eye(n)
    else:
        return None
    return _BatchResult(a, val, val.copy(), feasibility_residual(a, xs), np.ones(S, bool),
                        np.zeros(S, dtype=int))


def majorant_batch(xs: np.ndarray, p: float, tol: float = DEFAULT_TOL,
                   max_iter: int = MAX_ITER) -> _BatchResult:
    """Batched majorant problems; xs has shape (S, m, n, n) and holds hermitian matrices.

    Each problem is rescaled by its largest operator norm before solving, so
    the tolerances are relative.
    """
    p = _check_p(p)
    xs = np.asarray(xs, dtype=complex)
    exact = _exact_batch(xs, p)
    if exact is not None:
        return exact
    if xs.shape[1] == 1:
        # a = |x| is optimal for a single member
        a = _abs_matrix(xs[:, 0])
        val = _schatten_batch(xs[:, 0], p)
        return _BatchResult(a, val, val.copy(), feasibility_residual(a, xs),
                            np.ones(len(xs), bool), np.zeros(len(xs), dtype=int))
    scale = np.max(np.abs(np.linalg.eigvalsh(xs)), axis=(1, 2))
    zero = scale == 0
    safe = np.where(zero, 1.0, scale)
    res = _admm_batch(xs / safe[:, None, None, None], p, tol, max_iter)
    res.a = res.a * safe[:, None, None]
    res.value = res.value * safe
    res.lower = res.lower * safe
    res.residual = res.residual * safe
    res.converged = res.converged | zero
    return res


def _as_family(xs) -> np.ndarray:
    arr = np.asarray([np.atleast_2d(np.asarray(x, dtype=complex)) for x in xs])
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ShapeMismatchError("family must consist of square matrices of one size")
    return arr


def _certificate(res: _BatchResult, i: int, p: float) -> MajorantCertificate:
    value = float(res.value[i])
    lower = float(res.lower[i])
    return MajorantCertificate(p=p, value=value, a=res.a[i], feasibility_residual=float(res.residual[i]),
                               gap_estimate=max(value - lower, 0.0), lower_bound=lower,
                               converged=bool(res.converged[i]), iterations=int(res.iterations[i]))


def majorant_norm(xs, p: float, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> MajorantCertificate:
    """inf |a|_p over hermitian a with -a <= x_j <= a for every j.

    Raises NotHermitianError for a non-hermitian member. If the gap does not
    close within ``max_iter`` iterations the best feasible certificate is
    returned with ``converged=False``.
    """
    fam = _as_family(xs)
    if not all(is_hermitian(x) for x in fam):
        raise NotHermitianError("majorant_norm needs hermitian inputs")
    p = _check_p(p)
    res = majorant_batch(_herm(fam)[None], p, tol, max_iter)
    return _certificate(res, 0, p)


@dataclass
class FieldMaximalResult:
    value: float
    p: float
    site_values: np.ndarray
    site_lower: np.ndarray = field(default=None, repr=False)
    site_converged: np.ndarray = field(default=None, repr=False)
    certificates: list[MajorantCertificate] = field(default_factory=list, repr=False)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.site_converged))

    @property
    def lower_bound(self) -> float:
        """Field-level lower bound assembled from the per-site lower bounds."""
        return float(vector_pnorm(np.maximum(self.site_lower, 0.0), self.p))

    @property
    def max_gap(self) -> float:
        return float(np.max(self.site_values - self.site_lower, initial=0.0))


def field_maximal_norm(fs: list[TorusField], p: float, tol: float = DEFAULT_TOL,
                       max_iter: int = MAX_ITER, certificates: bool = True) -> FieldMaximalResult:
    """(sum_x majorant_norm({f_j(x)}_j, p)^p)^(1/p).

    Both the order constraints and the trace objective split over sites, so
    each site is solved on its own. Scalar fields use |f_j(x)|, which also
    covers complex (for example modulated) scalar families.
    """
    p = _check_p(p)
    if not fs:
        raise ValueError("empty family")
    for g in fs[1:]:
        fs[0].check_same_shape(g)
    stack = np.stack([g.sites() for g in fs], axis=1)  # (S, m, n, n)
    if fs[0].n == 1:
        stack = np.abs(stack).astype(complex)
    elif not is_hermitian(stack):
        raise NotHermitianError("field_maximal_norm needs hermitian fields")
    res = majorant_batch(_herm(stack), p, tol, max_iter)
    certs = [_certificate(res, i, p) for i in range(len(stack))] if certificates else []
    return FieldMaximalResult(float(vector_pnorm(res.value, p)), p, res.value, res.lower,
                              res.converged, certs)


# ------------------------------------------------------------ square functions


@dataclass
class CrNormResult:
    column: float
    row: float

    @property
    def combined(self) -> float:
        return max(self.column, self.row)


def _sqrt_psd_batch(a: np.ndarray) -> np.ndarray:
    return _spectral_apply(_herm(a), lambda w: np.sqrt(np.clip(w, 0.0, None)))


def cr_norm(xs, p: float) -> CrNormResult:
    """Column norm |(sum |x_j|^2)^(1/2)|_p and row norm with x_j^*; p >= 2 only."""
    p = _check_p(p)
    if p < 2:
        raise NotImplementedError("the row+column sum norm for p < 2 is not implemented")
    fam = _as_family(xs)
    col = schatten_norm(_sqrt_psd_batch((_dagger(fam) @ fam).sum(axis=0)), p)
    if all(is_hermitian(x) for x in fam):
        return CrNormResult(col, col)
    row = schatten_norm(_sqrt_psd_batch((fam @ _dagger(fam)).sum(axis=0)), p)
    return CrNormResult(col, row)


def field_cr_norm(fs: list[TorusField], p: float) -> CrNormResult:
    """Square-function norms of a family of fields, with the field trace."""
    p = _check_p(p)
    if p < 2:
        raise NotImplementedError("the row+column sum norm for p < 2 is not implemented")
    stack = np.stack([g.sites() for g in fs], axis=1)
    col_sq = (_dagger(stack) @ stack).sum(axis=1)
    col = vector_pnorm(vector_pnorm(np.sqrt(np.clip(np.linalg.eigvalsh(_herm(col_sq)), 0, None)), p), p)
    if all(g.is_hermitian for g in fs):
        return CrNormResult(float(col), float(col))
    row_sq = (stack @ _dagger(stack)).sum(axis=1)
    row = vector_pnorm(vector_pnorm(np.sqrt(np.clip(np.linalg.eigvalsh(_herm(row_sq)), 0, None)), p), p)
    return CrNormResult(float(col), float(row))
