"""Orthonormal tensor-product wavelet bases on the unit cube.

Two families are available: the Haar tensor basis (exact, closed form,
the default everywhere) and periodized Daubechies bases whose mother and
father functions are tabulated by the cascade algorithm on a dyadic grid
of resolution 2**14.  Mother indices at level ``level`` carry a position
vector in [0, 2**level)**d and a type bit-vector selecting, per axis,
the mother (bit 1) or the same-level father (bit 0); the all-zero type
is reserved for the coarse fathers.

Dyadic cells are half open, [k/2^l, (k+1)/2^l), except the last cell of
each axis which is closed at 1, so dyadic points are never double
counted.  Haar mothers vanish identically outside their dyadic cell;
periodized Daubechies mothers wrap around the torus and do not.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
import itertools

import numpy as np

from .errors import InvalidIndexError, LevelError

CASCADE_RESOLUTION = 14  # dyadic refinement depth of the Daubechies tables

# Holder regularity of the Daubechies scaling functions, indexed by the
# number of vanishing moments (standard numerical values).
_DB_REGULARITY = {
    2: 0.550, 3: 1.088, 4: 1.618, 5: 1.969, 6: 2.189,
    7: 2.460, 8: 2.761, 9: 3.074, 10: 3.369,
}


@dataclass(frozen=True)
class WaveletSpec:
    """A concrete basis: family, coarsest level and dimension."""

    family: str = "haar"          # "haar" or "db"
    vanishing_moments: int = 0    # Daubechies only; filter has 2K taps
    base_level: int = 0
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidIndexError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.family == "haar":
            if self.base_level != 0:
                raise InvalidIndexError("haar basis has base_level 0")
        elif self.family == "db":
            K = self.vanishing_moments
            if K < 2 or K > 10:
                raise InvalidIndexError("db family supports 2..10 vanishing moments")
            need = _min_periodization_level(K)
            if self.base_level < need:
                raise InvalidIndexError(
                    f"db{K} needs base_level >= {need} so level-l0 functions fit in [0,1]")
        else:
            raise InvalidIndexError(f"unknown family {self.family!r}")

    @property
    def regularity(self) -> float:
        """Smoothness ceiling S of the family; priors require alpha < S."""
        if self.family == "haar":
            return 1.0
        return _DB_REGULARITY[self.vanishing_moments]

    @property
    def n_father_positions(self) -> int:
        return 2 ** self.base_level

    @property
    def n_types(self) -> int:
        return 2 ** self.dim - 1


@dataclass(frozen=True)
class WaveletIndex:
    """Identifies one basis function.

    ``kind`` is "father" or "mother".  Fathers live at the base level and
    have an all-zero type; mothers carry a level >= base_level and a
    nonzero type bit-vector.
    """

    kind: str
    position: tuple
    level: int = 0
    type_bits: tuple = ()


def _validate_index(spec: WaveletSpec, idx: WaveletIndex):
    d = spec.dim
    if len(idx.position) != d:
        raise InvalidIndexError(f"position must have {d} components")
    if idx.kind == "father":
        lim = spec.n_father_positions
        if any(not (0 <= k < lim) for k in idx.position):
            raise InvalidIndexError(f"father position out of range [0, {lim})")
        return
    if idx.kind != "mother":
        raise InvalidIndexError(f"unknown index kind {idx.kind!r}")
    if idx.level < spec.base_level:
        raise LevelError(f"mother level {idx.level} below base level {spec.base_level}")
    lim = 2 ** idx.level
    if any(not (0 <= k < lim) for k in idx.position):
        raise InvalidIndexError(f"mother position out of range [0, {lim})")
    if len(idx.type_bits) != d or any(t not in (0, 1) for t in idx.type_bits):
        raise InvalidIndexError("type must be a d-dimensional 0/1 vector")
    if not any(idx.type_bits):
        raise InvalidIndexError("mother type must be nonzero")


def type_bits_to_int(bits) -> int:
    """Pack a type bit-vector into 1..2^d-1 (axis j contributes 2^j)."""
    return int(sum(b << j for j, b in enumerate(bits)))


def int_to_type_bits(t: int, d: int) -> tuple:
    return tuple((t >> j) & 1 for j in range(d))


# ---------------------------------------------------------------------------
# Daubechies construction: filter, cascade tables, periodization
# ---------------------------------------------------------------------------

def _min_periodization_level(K: int) -> int:
    """Smallest level at which the support width 2K-1 fits in [0,1]."""
    return int(np.ceil(np.log2(2 * K - 1)))


@lru_cache(maxsize=None)
def _daubechies_filter(K: int) -> np.ndarray:
    """Extremal-phase scaling filter with K vanishing moments (2K taps).

    Spectral factorization of the binomial moment polynomial; roots inside
    the unit circle are kept, and the filter is normalized to sum sqrt(2).
    """
    if K == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # z^{K-1} P(y) with y = (1-z)(1-1/z)/4 expanded as a polynomial in z
    poly = np.zeros(2 * K - 1)
    for k in range(K):
        pk = comb(K - 1 + k, k) * (-0.25) ** k
        term = np.array([pk])
        for _ in range(2 * k):
            term = np.convolve(term, [-1.0, 1.0])  # (1 - z) factors
        padded = np.zeros(2 * K - 1)
        offset = K - 1 - k
        padded[offset:offset + len(term)] = term
        poly += padded
    roots = np.roots(poly[::-1])
    inside = roots[np.abs(roots) < 1.0]
    h = np.array([1.0], dtype=complex)
    for _ in range(K):
        h = np.convolve(h, [0.5, 0.5])  # ((1+z)/2)^K
    for r in inside:
        h = np.convolve(h, [-r, 1.0]) / (1.0 - r)
    h = np.real(h)
    return h * (np.sqrt(2.0) / h.sum())


@lru_cache(maxsize=None)
def _cascade_tables(K: int):
    """Father and mother values on the grid j/2^14, j = 0..(2K-1)*2^14."""
    h = _daubechies_filter(K)
    n = len(h)  # 2K taps, support [0, 2K-1]
    width = n - 1
    # values at the integers: eigenvector of A[i, j] = sqrt(2) h_{2i-j}
    A = np.zeros((width + 1, width + 1))
    for i in range(width + 1):
        for j in range(width + 1):
            k = 2 * i - j
            if 0 <= k < n:
                A[i, j] = np.sqrt(2.0) * h[k]
    vals, vecs = np.linalg.eig(A)
    pick = np.argmin(np.abs(vals - 1.0))
    phi = np.real(vecs[:, pick])
    phi = phi / phi.sum()
    phi[0] = phi[-1] = 0.0  # continuous scaling functions vanish at the edges
    # dyadic refinement from spacing 2^-j to 2^-(j+1): even fine points copy
    # the coarse values; odd points use phi(x) = sqrt(2) sum_k h_k phi(2x-k),
    # where 2x - k sits on the coarse grid at index (fine index) - k 2^j.
    for j in range(CASCADE_RESOLUTION):
        m = len(phi)
        fine = np.zeros(2 * m - 1)
        fine[::2] = phi
        odd = np.arange(1, 2 * m - 1, 2)
        acc = np.zeros(len(odd))
        for k_tap in range(n):
            src = odd - k_tap * 2 ** j
            ok = (src >= 0) & (src < m)
            acc[ok] += np.sqrt(2.0) * h[k_tap] * phi[src[ok]]
        fine[1::2] = acc
        phi = fine
    g = ((-1) ** np.arange(n)) * h[::-1]  # quadrature-mirror mother filter
    psi = np.zeros_like(phi)
    idxs = np.arange(len(phi))
    for k_tap in range(n):
        src = 2 * idxs - k_tap * 2 ** CASCADE_RESOLUTION
        ok = (src >= 0) & (src < len(phi))
        psi[ok] += np.sqrt(2.0) * g[k_tap] * phi[src[ok]]
    return phi, psi


def _db_periodized_1d(K: int, which: str, level: int, k: int, x):
    """Periodized scaling/mother value 2^{l/2} sum_m f(2^l (x+m) - k)."""
    phi, psi = _cascade_tables(K)
    table = phi if which == "father" else psi
    width = 2 * K - 1
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for m in (0, 1):
        t = 2.0 ** level * (x + m) - k
        idx = np.round(t * 2 ** CASCADE_RESOLUTION).astype(int)
        ok = (t >= 0.0) & (t <= width) & (idx >= 0) & (idx < len(table))
        out[ok] += table[idx[ok]]
    return 2.0 ** (level / 2.0) * out


# ---------------------------------------------------------------------------
# One-dimensional factors
# ---------------------------------------------------------------------------

def _haar_father_1d(level: int, k: int, x):
    x = np.asarray(x, dtype=float)
    lo = k / 2.0 ** level
    hi = (k + 1) / 2.0 ** level
    last = k == 2 ** level - 1
    inside = (x >= lo) & ((x <= hi) if last else (x < hi))
    return np.where(inside, 2.0 ** (level / 2.0), 0.0)


def _haar_mother_1d(level: int, k: int, x):
    x = np.asarray(x, dtype=float)
    lo = k / 2.0 ** level
    mid = (k + 0.5) / 2.0 ** level
    hi = (k + 1) / 2.0 ** level
    last = k == 2 ** level - 1
    in_left = (x >= lo) & (x < mid)
    in_right = (x >= mid) & ((x <= hi) if last else (x < hi))
    s = 2.0 ** (level / 2.0)
    return np.where(in_left, s, 0.0) - np.where(in_right, s, 0.0)


def _factor_1d(spec: WaveletSpec, which: str, level: int, k: int, x):
    if spec.family == "haar":
        if which == "father":
            return _haar_father_1d(level, k, x)
        return _haar_mother_1d(level, k, x)
    return _db_periodized_1d(spec.vanishing_moments, which, level, k, x)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def eval_basis(spec: WaveletSpec, idx: WaveletIndex, x) -> float:
    """Tensor-product basis value at a point of [0,1]^d.

    Haar mothers are exactly zero outside the dyadic cube
    ``[k/2^l, (k+1)/2^l]^d`` of their index.
    """
    _validate_index(spec, idx)
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (spec.dim,):
        raise InvalidIndexError(f"point must have {spec.dim} components")
    out = 1.0
    if idx.kind == "father":
        for j in range(spec.dim):
            out *= float(_factor_1d(spec, "father", spec.base_level, idx.position[j], pt[j]))
        return out
    for j in range(spec.dim):
        which = "mother" if idx.type_bits[j] else "father"
        out *= float(_factor_1d(spec, which, idx.level, idx.position[j], pt[j]))
    return out


def enumerate_fathers(spec: WaveletSpec):
    """All father indices, K = [0 : 2^l0 - 1]^d."""
    rng = range(spec.n_father_positions)
    return [WaveletIndex("father", pos) for pos in itertools.product(rng, repeat=spec.dim)]


def enumerate_mothers(spec: WaveletSpec, level: int):
    """All mother indices at a level; there are 2^{ld} (2^d - 1) of them."""
    if level < spec.base_level:
        raise LevelError(f"level {level} below base level {spec.base_level}")
    positions = itertools.product(range(2 ** level), repeat=spec.dim)
    types = [int_to_type_bits(t, spec.dim) for t in range(1, 2 ** spec.dim)]
    return [
        WaveletIndex("mother", pos, level, tb)
        for pos in positions
        for tb in types
    ]


@dataclass
class CoefficientTree:
    """Wavelet coefficients up to a truncation level.

    ``fathers`` has one entry per father position (shape ``(2^l0,)*d``);
    ``mothers[level]`` has shape ``(2^d - 1,) + (2^level,)*d`` with the
    packed type integer minus one as the leading axis.
    """

    fathers: np.ndarray
    mothers: dict = field(default_factory=dict)
    max_level: int = 0

    def father(self, position) -> float:
        return float(self.fathers[tuple(np.atleast_1d(position))])

    def mother(self, level: int, position, type_bits) -> float:
        arr = self.mothers[level]
        t = type_bits_to_int(type_bits) - 1
        return float(arr[(t, *np.atleast_1d(position))])

    @classmethod
    def zeros(cls, spec: WaveletSpec, max_level: int) -> "CoefficientTree":
        if max_level < spec.base_level:
            raise LevelError("max_level below base level")
        d = spec.dim
        fathers = np.zeros((spec.n_father_positions,) * d)
        mothers = {
            l: np.zeros((spec.n_types,) + (2 ** l,) * d)
            for l in range(spec.base_level, max_level + 1)
        }
        return cls(fathers, mothers, max_level)

    def validate(self):
        if not np.all(np.isfinite(self.fathers)):
            raise ValueError("non-finite father coefficient")
        for l, arr in self.mothers.items():
            if l > self.max_level:
                raise LevelError(f"stored level {l} exceeds truncation {self.max_level}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite mother coefficient at level {l}")


def besov_sup_norm(tree: CoefficientTree, alpha: float, spec: WaveletSpec) -> float:
    """B^alpha_{inf,inf} coefficient norm of the stored levels.

    2^{l0 d/2} max|a_k| + max over stored levels of 2^{l(alpha+d/2)} max|b|.
    An empty tree has norm 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    d = spec.dim
    total = 0.0
    if tree.fathers.size:
        total += 2.0 ** (spec.base_level * d / 2.0) * float(np.max(np.abs(tree.fathers)))
    peak = 0.0
    for l, arr in tree.mothers.items():
        if arr.size:
            peak = max(peak, 2.0 ** (l * (alpha + d / 2.0)) * float(np.max(np.abs(arr))))
    return total + peak


def inner_product_grid(f, g, resolution: int, dim: int = 1) -> float:
    """Midpoint-rule approximation of the L2 inner product on [0,1]^dim.

    The midpoint rule is exact for functions that are constant on dyadic
    cells finer than the grid, hence exact for truncated Haar expansions
    when ``resolution`` is a power of two at least 2^{max_level + 2}.
    """
    if resolution < 2 or resolution & (resolution - 1):
        raise ValueError("resolution must be a power of two >= 2")
    mids = (np.arange(resolution) + 0.5) / resolution
    if dim == 1:
        pts = mids.reshape(-1, 1)
    else:
        grids = np.meshgrid(*([mids] * dim), indexing="ij")
        pts = np.stack([gr.ravel() for gr in grids], axis=-1)
    fv = np.array([float(f(p if dim > 1 else p[0])) for p in pts])
    gv = np.array([float(g(p if dim > 1 else p[0])) for p in pts])
    return float(np.sum(fv * gv) / resolution ** dim)


@lru_cache(maxsize=None)
def measured_constants(spec: WaveletSpec):
    """(sup-norm constant, overlap constant) measured once at the base level.

    The sup-norm constant C satisfies max|Psi_{l,gamma}| <= C 2^{l d/2};
    the overlap constant bounds, at any fixed point, how many same-level
    mothers are nonzero.  Both are measured on a dense grid at the base
    level and reused for all levels.
    """
    l0 = spec.base_level
    probe = np.linspace(0.0, 1.0, 2049)
    sup_c = 0.0
    overlap = 0
    mothers = enumerate_mothers(spec, l0)
    if spec.dim == 1:
        vals = np.stack([
            np.abs(np.asarray(_factor_1d(spec, "mother", l0, idx.position[0], probe)))
            for idx in mothers
        ])
        sup_c = float(vals.max()) / 2.0 ** (l0 / 2.0)
        overlap = int((vals > 1e-12).sum(axis=0).max())
    else:
        # tensor structure: per-axis factors share the 1d constants
        vals_m = np.stack([
            np.abs(np.asarray(_factor_1d(spec, "mother", l0, k, probe)))
            for k in range(2 ** l0)
        ])
        vals_f = np.stack([
            np.abs(np.asarray(_factor_1d(spec, "father", l0, k, probe)))
            for k in range(2 ** l0)
        ])
        c1 = max(vals_m.max(), vals_f.max()) / 2.0 ** (l0 / 2.0)
        sup_c = c1 ** spec.dim
        ov1 = max(
            int((vals_m > 1e-12).sum(axis=0).max()),
            int((vals_f > 1e-12).sum(axis=0).max()),
        )
        overlap = spec.n_types * ov1 ** spec.dim
    return sup_c, overlap
