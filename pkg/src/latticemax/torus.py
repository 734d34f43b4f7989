"""Matrix-valued fields on the finite torus Z_M^d.

A field stores ``values`` with shape ``(M,)*d + (n, n)``; axis ``k`` of the
array is the coordinate x_{k+1}. The DFT is unnormalised forward,
``F(xi) = sum_x f(x) exp(-2 pi i <x, xi>)`` at xi = j/M, and Plancherel
reads ``M^-d sum_xi |F(xi)|_HS^2 = sum_x |f(x)|_HS^2``.
"""

from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmbeddingError, ShapeMismatchError
from .lattice import BallSpec, count_ball, enumerate_ball
from .multiplier import canonicalize, exp_sum_multiplier_batch

HERMITIAN_TOL = 1e-12
POSITIVE_TOL = 1e-10
SERIES_TAIL = 1e-12

_FLAG_BITS = {"hermitian": 1, "positive": 2}
_MAGIC = b"TFLD"


def _hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


@dataclass(frozen=True, eq=False)
class TorusField:
    values: np.ndarray
    flags: frozenset = frozenset()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim < 3 or v.shape[-1] != v.shape[-2]:
            raise ValueError(f"values must have shape (M,)*d + (n, n), got {v.shape}")
        if len(set(v.shape[:-2])) != 1:
            raise ValueError(f"torus must have equal side lengths, got {v.shape[:-2]}")
        unknown = set(self.flags) - set(_FLAG_BITS)
        if unknown:
            raise ValueError(f"unknown flags {unknown}")
        flags = frozenset(self.flags)
        if "positive" in flags:
            flags |= {"hermitian"}
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "flags", flags)

    # --- constructors -------------------------------------------------------

    @classmethod
    def make(cls, values, hermitian: bool = False, positive: bool = False) -> "TorusField":
        """Build a field and check the requested flags against the data."""
        flags = {"hermitian"} if hermitian or positive else set()
        if positive:
            flags.add("positive")
        f = cls(values, frozenset(flags))
        f.validate()
        return f

    @classmethod
    def from_scalar(cls, array, **kw) -> "TorusField":
        a = np.asarray(array)
        return cls.make(a[..., None, None], **kw)

    @classmethod
    def delta(cls, M: int, d: int, n: int = 1, at=None) -> "TorusField":
        v = np.zeros((M,) * d + (n, n), dtype=complex)
        at = tuple(at) if at is not None else (0,) * d
        v[at] = np.eye(n)
        return cls(v, frozenset({"hermitian", "positive"}))

    @classmethod
    def constant(cls, M: int, d: int, c) -> "TorusField":
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        v = np.broadcast_to(c, (M,) * d + c.shape).copy()
        return cls(v)

    @classmethod
    def random(cls, M: int, d: int, n: int, rng: np.random.Generator,
               kind: str = "hermitian") -> "TorusField":
        """Seeded random field.

        ``kind``: ``general`` (complex Gaussian entries), ``hermitian``,
        ``positive`` (G G^† / n), ``projector`` (rank-one v v^† with unit v).
        Scalar fields (n = 1) are real for every kind but ``general``.
        """
        shape = (M,) * d + (n, n)
        g = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        if kind == "general":
            return cls(g)
        if kind == "hermitian":
            return cls(_hermitian_part(g), frozenset({"hermitian"}))
        if kind == "positive":
            p = g @ np.conj(np.swapaxes(g, -1, -2)) / n
            return cls(_hermitian_part(p), frozenset({"positive"}))
        if kind == "projector":
            vec = g[..., 0]
            vec = vec / np.linalg.norm(vec, axis=-1, keepdims=True)
            p = vec[..., :, None] * np.conj(vec[..., None, :])
            return cls(_hermitian_part(p), frozenset({"positive"}))
        raise ValueError(f"unknown kind {kind!r}")

    # --- shape --------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def d(self) -> int:
        return self.values.ndim - 2

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.M, self.d, self.n)

    @property
    def scalar(self) -> np.ndarray:
        if self.n != 1:
            raise ValueError("field is not scalar")
        return self.values[..., 0, 0]

    @property
    def is_hermitian(self) -> bool:
        return "hermitian" in self.flags

    @property
    def is_positive(self) -> bool:
        return "positive" in self.flags

    def sites(self) -> np.ndarray:
        """Matrices in row-major site order, shape (M^d, n, n)."""
        return self.values.reshape(-1, self.n, self.n)

    def validate(self) -> None:
        v = self.values
        if self.is_hermitian:
            err = np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2))), initial=0.0)
            if err > HERMITIAN_TOL:
                raise ValueError(f"field flagged hermitian deviates by {err:.3g}")
        if self.is_positive:
            lo = np.min(np.linalg.eigvalsh(_hermitian_part(v)), initial=0.0)
            if lo < -POSITIVE_TOL:
                raise ValueError(f"field flagged positive has eigenvalue {lo:.3g}")

    def with_values(self, values, flags=None) -> "TorusField":
        flags = self.flags if flags is None else frozenset(flags)
        if "hermitian" in flags:
            values = _hermitian_part(values)
        return TorusField(values, flags)

    def check_same_shape(self, other: "TorusField") -> None:
        if self.values.shape != other.values.shape:
            raise ShapeMismatchError(f"shapes {self.shape} and {other.shape} differ")

    def __add__(self, other: "TorusField") -> "TorusField":
        self.check_same_shape(other)
        return TorusField(self.values + other.values, self.flags & other.flags)

    def __sub__(self, other: "TorusField") -> "TorusField":
        self.check_same_shape(other)
        return TorusField(self.values - other.values, self.flags & {"hermitian"} & other.flags)

    def __mul__(self, c) -> "TorusField":
        c = complex(c)
        flags = set()
        if c.imag == 0 and self.is_hermitian:
            flags.add("hermitian")
            if c.real >= 0 and self.is_positive:
                flags.add("positive")
        return TorusField(self.values * c, frozenset(flags))

    __rmul__ = __mul__

    def hs_norm2(self) -> float:
        """sum_x |f(x)|_HS^2."""
        return float(np.sum(np.abs(self.values) ** 2))

    def max_abs_diff(self, other: "TorusField") -> float:
        self.check_same_shape(other)
        return float(np.max(np.abs(self.values - other.values)))

    # --- serialisation ------------------------------------------------------

    def _flag_bits(self) -> int:
        return sum(_FLAG_BITS[f] for f in self.flags)

    def to_bytes(self) -> bytes:
        header = struct.pack("<4sIIII", _MAGIC, self.M, self.d, self.n, self._flag_bits())
        return header + np.ascontiguousarray(self.values, dtype="<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TorusField":
        magic, M, d, n, bits = struct.unpack_from("<4sIIII", data)
        if magic != _MAGIC:
            raise ValueError("not a torus field blob")
        off = struct.calcsize("<4sIIII")
        v = np.frombuffer(data, dtype="<c16", offset=off).reshape((M,) * d + (n, n))
        flags = frozenset(f for f, b in _FLAG_BITS.items() if bits & b)
        return cls(v.astype(complex), flags)

    def to_json(self) -> str:
        flat = self.values.reshape(-1)
        return json.dumps({"M": self.M, "d": self.d, "n": self.n, "flags": sorted(self.flags),
                           "values": [[float(z.real), float(z.imag)] for z in flat]})

    @classmethod
    def from_json(cls, text: str) -> "TorusField":
        obj = json.loads(text)
        M, d, n = obj["M"], obj["d"], obj["n"]
        v = np.array([complex(re, im) for re, im in obj["values"]]).reshape((M,) * d + (n, n))
        return cls.make(v, hermitian="hermitian" in obj["flags"], positive="positive" in obj["flags"])


@dataclass(frozen=True, eq=False)
class SpectrumField:
    """DFT of a torus field; ``values[j]`` sits at frequency j/M (canonicalised)."""

    values: np.ndarray

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.ndim - 2

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def axis_frequencies(self) -> np.ndarray:
        return grid_frequencies_1d(self.M)

    def hs_norm2(self) -> float:
        """M^-d sum_xi |F(xi)|_HS^2, the frequency-side Plancherel mass."""
        return float(np.sum(np.abs(self.values) ** 2)) / self.M**self.d


def grid_frequencies_1d(M: int) -> np.ndarray:
    return canonicalize(np.arange(M) / M)


def grid_frequencies(M: int, d: int) -> np.ndarray:
    """All grid frequencies, shape (M,)*d + (d,), in storage order."""
    axes = np.meshgrid(*([grid_frequencies_1d(M)] * d), indexing="ij")
    return np.stack(axes, axis=-1)


def _space_axes(d: int) -> tuple[int, ...]:
    return tuple(range(d))


def dft(f: TorusField) -> SpectrumField:
    return SpectrumField(np.fft.fftn(f.values, axes=_space_axes(f.d)))


def idft(F: SpectrumField, flags=frozenset()) -> TorusField:
    v = np.fft.ifftn(F.values, axes=_space_axes(F.d))
    if "hermitian" in flags:
        v = _hermitian_part(v)
    return TorusField(v, frozenset(flags))


def plancherel_residual(f: TorusField) -> float:
    """Relative mismatch of the two sides of Plancherel."""
    a = f.hs_norm2()
    b = dft(f).hs_norm2()
    return abs(a - b) / max(a, 1e-300)


# -------------------------------------------------------------- ball averages


def check_embedding(M: int, N: float) -> None:
    w = 2 * math.floor(N) + 1
    if w > M:
        raise EmbeddingError(f"ball of radius {N} (width {w}) does not embed in Z_{M}")


@functools.lru_cache(maxsize=64)
def _multiplier_grid_cached(M: int, d: int, N: float, method: str) -> np.ndarray:
    spec = BallSpec(d, N)
    if method == "fft":
        pts = enumerate_ball(spec)
        kernel = np.zeros((M,) * d)
        np.add.at(kernel, tuple((pts % M).T), 1.0)
        kernel /= len(pts)
        out = np.fft.fftn(kernel).real
    elif method == "dp":
        xis = grid_frequencies(M, d).reshape(-1, d)
        out = exp_sum_multiplier_batch(spec, xis).real.reshape((M,) * d)
    else:
        raise ValueError(f"unknown multiplier method {method!r}")
    out.flags.writeable = False
    return out


def ball_multiplier_grid(M: int, d: int, N: float, method: str = "auto") -> np.ndarray:
    """The ball multiplier sampled at every grid frequency j/M.

    ``dp`` runs the squared-radius dynamic program at each grid point;
    ``fft`` transforms the periodised averaging kernel. Both agree whenever
    the ball is enumerable; ``auto`` uses ``dp`` for small grids.
    """
    if method == "auto":
        spec = BallSpec(d, N)
        work = M**d * spec.d * max(spec.level, 1) * (2 * spec.coord_bound + 1)
        method = "dp" if work <= 2**24 else "fft"
    return _multiplier_grid_cached(int(M), int(d), float(N), method)


def _offset_weights(M: int, d: int, N: float) -> tuple[np.ndarray, np.ndarray]:
    """Distinct ball offsets reduced mod M (lexicographic) and their weights."""
    pts = enumerate_ball(BallSpec(d, N))
    red, counts = np.unique(pts % M, axis=0, return_counts=True)
    return red, counts / len(pts)


def convolve_ball(f: TorusField, N: float, path: str = "spectral", wrap: bool = False,
                  method: str = "auto") -> TorusField:
    """Ball average |B_N ∩ Z^d|^{-1} sum_{y in B_N} f(x - y), periodised.

    ``wrap`` admits balls wider than the torus; the average is then over the
    multiset of wrapped offsets.
    """
    if not wrap:
        check_embedding(f.M, N)
    flags = f.flags
    if path == "spatial":
        M, d = f.M, f.d
        if wrap:
            offsets, weights = _offset_weights(M, d, N)
            acc = np.zeros_like(f.values)
            for y, w in zip(offsets, weights):
                acc += w * np.roll(f.values, tuple(y), axis=_space_axes(d))
            return f.with_values(acc, flags)
        pts = enumerate_ball(BallSpec(d, N))
        acc = np.zeros_like(f.values)
        for y in pts:
            acc += np.roll(f.values, tuple(y), axis=_space_axes(d))
        return f.with_values(acc / len(pts), flags)
    if path == "spectral":
        mult = ball_multiplier_grid(f.M, f.d, N, method)
        F = dft(f).values * mult[(...,) + (None, None)]
        v = np.fft.ifftn(F, axes=_space_axes(f.d))
        return f.with_values(v, flags)
    raise ValueError(f"unknown path {path!r}")


def ball_count(d: int, N: float) -> int:
    return count_ball(BallSpec(d, N)).count


# ------------------------------------------------------- derivatives and heat


def discrete_derivative(f: TorusField, k: int) -> TorusField:
    """Delta_k f(x) = f(x) - f(x + e_k), k = 0..d-1."""
    v = f.values - np.roll(f.values, -1, axis=k)
    return f.with_values(v, f.flags & {"hermitian"})


def discrete_derivative_adjoint(f: TorusField, k: int) -> TorusField:
    """Delta_k^* f(x) = f(x) - f(x - e_k)."""
    v = f.values - np.roll(f.values, 1, axis=k)
    return f.with_values(v, f.flags & {"hermitian"})


def partial_laplacian(f: TorusField, k: int) -> TorusField:
    """L_k = (1/4) Delta_k^* Delta_k = 1/2 - (shift_+ + shift_-)/4."""
    v = 0.5 * f.values - 0.25 * (np.roll(f.values, -1, axis=k) + np.roll(f.values, 1, axis=k))
    return f.with_values(v, f.flags & {"hermitian"})


def laplacian(f: TorusField) -> TorusField:
    v = np.zeros_like(f.values)
    for k in range(f.d):
        v += partial_laplacian(f, k).values
    return f.with_values(v, f.flags & {"hermitian"})


def heat_multiplier_grid(M: int, d: int, t: float) -> np.ndarray:
    s = np.sin(np.pi * grid_frequencies_1d(M)) ** 2
    total = np.zeros((M,) * d)
    for k in range(d):
        shape = [1] * d
        shape[k] = M
        total = total + s.reshape(shape)
    return np.exp(-t * total)


def series_terms(t: float, tail: float = SERIES_TAIL) -> int:
    """Smallest n_max with exp(-t/2) (t/2)^(n_max+1) / (n_max+1)! <= tail."""
    if t == 0:
        return 0
    a = t / 2.0
    n = 0
    while True:
        log_term = -a + (n + 1) * math.log(a) - math.lgamma(n + 2)
        if log_term <= math.log(tail) and n + 2 > a:
            return n
        n += 1


def _axis_heat_series(values: np.ndarray, k: int, t: float) -> np.ndarray:
    a = t / 2.0
    n_max = series_terms(t)
    coef = math.exp(-a)
    term = values
    acc = coef * term
    for m in range(1, n_max + 1):
        term = 0.5 * (np.roll(term, -1, axis=k) + np.roll(term, 1, axis=k))
        coef *= a / m
        acc = acc + coef * term
    return acc


def heat_semigroup(f: TorusField, t: float, path: str = "spectral") -> TorusField:
    """P_t f, the semigroup exp(-t L) with multiplier exp(-t sum sin^2(pi xi_k)).

    ``series`` composes exp(-t L_k) = exp(-t/2) sum_n (t/2)^n/n! G_k^n over
    axes 1..d, with G_k the average of the two unit shifts along axis k.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return f
    if path == "spectral":
        mult = heat_multiplier_grid(f.M, f.d, t)
        v = np.fft.ifftn(dft(f).values * mult[(...,) + (None, None)], axes=_space_axes(f.d))
        return f.with_values(v, f.flags)
    if path == "series":
        v = f.values
        for k in range(f.d):
            v = _axis_heat_series(v, k, t)
        return f.with_values(v, f.flags)
    raise ValueError(f"unknown path {path!r}")


def frequency_split(f: TorusField) -> tuple[TorusField, TorusField]:
    """f = f1 + f2 with f1 carrying the grid frequencies where |V_xi| <= d/2."""
    big = (np.abs(grid_frequencies_1d(f.M)) > 0.25).astype(int)
    count = np.zeros((f.M,) * f.d, dtype=int)
    for k in range(f.d):
        shape = [1] * f.d
        shape[k] = f.M
        count = count + big.reshape(shape)
    keep = (count <= f.d / 2)[(...,) + (None, None)]
    F = dft(f).values
    ax = _space_axes(f.d)
    f1 = TorusField(np.fft.ifftn(np.where(keep, F, 0), axes=ax))
    f2 = TorusField(np.fft.ifftn(np.where(keep, 0, F), axes=ax))
    return f1, f2


def modulate(f: TorusField, t) -> TorusField:
    """Pointwise multiplication by exp(2 pi i <t, x>), x in {0..M-1}^d."""
    t = np.asarray(t, dtype=float)
    if t.shape != (f.d,):
        raise ValueError("modulation vector has wrong dimension")
    grids = np.meshgrid(*([np.arange(f.M)] * f.d), indexing="ij")
    phase = np.exp(2j * np.pi * sum(t[k] * grids[k] for k in range(f.d)))
    return TorusField(f.values * phase[(...,) + (None, None)])
