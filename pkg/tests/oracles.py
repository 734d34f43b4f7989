"""Independent reference implementations used by the tests.

Each oracle is deliberately naive (loops, brute force, closed forms) and
shares no code with the package beyond numpy.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def brute_ball(d: int, N: float, q: str) -> list[tuple[int, ...]]:
    """All integer points of the q-ball, lexicographic, by scanning the cube."""
    X = math.floor(Fraction(N))
    out = []
    for x in itertools.product(range(-X, X + 1), repeat=d):
        if q == "two":
            ok = sum(v * v for v in x) <= Fraction(N) ** 2
        elif q == "one":
            ok = sum(abs(v) for v in x) <= Fraction(N)
        else:
            ok = max(abs(v) for v in x) <= Fraction(N)
        if ok:
            out.append(x)
    return out


def brute_exp_sum(d: int, N: float, xi) -> complex:
    pts = brute_ball(d, N, "two")
    return sum(complex(math.cos(2 * math.pi * sum(a * b for a, b in zip(x, xi))),
                       math.sin(2 * math.pi * sum(a * b for a, b in zip(x, xi)))) for x in pts) / len(pts)


def direct_dft(values: np.ndarray, d: int) -> np.ndarray:
    """O(M^(2d)) forward transform with the exp(-2 pi i <x, xi>) convention."""
    M = values.shape[0]
    out = np.zeros_like(values, dtype=complex)
    sites = list(itertools.product(range(M), repeat=d))
    for j in sites:
        acc = 0
        for x in sites:
            acc = acc + values[x] * np.exp(-2j * np.pi * sum(a * b for a, b in zip(x, j)) / M)
        out[j] = acc
    return out


def grid_majorant_2x2(xs, p: float, step: float = 1e-2, fine: float = 1e-4) -> tuple[float, np.ndarray]:
    """Minimise |a|_p over real symmetric a = [[u, w], [w, v]] with a -+ x_j >= 0 by grid search.

    Feasibility forces u >= max |x_j[0,0]| and v >= max |x_j[1,1]|, and
    |a|_inf <= |a|_p <= |sum_j |x_j||_p bounds the box. A grid of spacing
    ``step`` is scanned slab by slab and then refined around the best point
    down to spacing ``fine``. Feasibility of a 2x2 symmetric matrix is
    trace >= 0 and determinant >= 0.
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    ys = xs + [-x for x in xs]
    abs_sum = sum(np.abs(np.linalg.eigvalsh(x)).sum() for x in xs)  # |sum |x_j||_1 >= every p-norm
    lo_u = max(abs(x[0, 0]) for x in xs)
    lo_v = max(abs(x[1, 1]) for x in xs)

    def evaluate(us, vs, ws):
        best, arg = np.inf, None
        V, W = np.meshgrid(vs, ws, indexing="ij")
        for u in us:
            feas = np.ones(V.shape, dtype=bool)
            for y in ys:
                a, b, c = u - y[0, 0], V - y[1, 1], W - y[0, 1]
                feas &= (a + b >= -1e-12) & (a * b - c * c >= -1e-12)
            tr, det = u + V, u * V - W * W
            disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
            l1, l2 = np.abs(tr / 2 + disc), np.abs(tr / 2 - disc)
            val = np.maximum(l1, l2) if math.isinf(p) else (l1**p + l2**p) ** (1 / p)
            val = np.where(feas, val, np.inf)
            k = np.unravel_index(np.argmin(val), val.shape)
            if val[k] < best:
                best, arg = float(val[k]), np.array([[u, W[k]], [W[k], V[k]]])
        return best, arg

    best, a = evaluate(np.arange(lo_u, abs_sum + step, step), np.arange(lo_v, abs_sum + step, step),
                       np.arange(-abs_sum, abs_sum + step, step))
    h = step
    while h > fine:
        h_new = max(h / 10, fine)
        span = np.arange(-2 * h, 2 * h + h_new / 2, h_new)
        best, a = evaluate(a[0, 0] + span, a[1, 1] + span, a[0, 1] + span)
        h = h_new
    return best, a


def delta_sup_oracle(d: int, radii) -> float:
    """|sup_N M_N delta_0|_2 by brute force over ball points (embedded balls)."""
    radii = sorted(radii)
    counts = {N: len(brute_ball(d, N, "two")) for N in radii}
    best = {}
    for N in radii:
        for x in brute_ball(d, N, "two"):
            best[x] = max(best.get(x, 0.0), 1.0 / counts[N])
    return math.sqrt(sum(v * v for v in best.values()))


def wrapped_average_bound(M: int, d: int, N: float) -> float:
    """sum_r |c_r/|B_N| - M^-d| over residues r of the ball mod M.

    For the pure shift this bounds max_x |A_N f(x) - mean f| by |f|_inf.
    """
    pts = brute_ball(d, N, "two")
    counts = {}
    for x in pts:
        r = tuple(v % M for v in x)
        counts[r] = counts.get(r, 0) + 1
    total = 0.0
    for r in itertools.product(range(M), repeat=d):
        total += abs(counts.get(r, 0) / len(pts) - M**-d)
    return total
