"""Random regression functions from wavelet-coefficient priors.

A draw has raw coefficients sampled independently from a bounded law on
[-1,1] and is scaled so that level-l mother coefficients decay like
C0 2^{-l(alpha+d/2)}, which places every draw in the Besov ball of
radius 2 C0 for smoothness alpha.  Multi-index draws compose a
low-dimensional base function with a uniformly random orthonormal
projection, and mixtures pick a component by weight first.

All sampling is driven by an explicit generator; identical generators
give bitwise-identical draws.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import json

import numpy as np

from . import wavelets as wv
from .errors import DomainError
from .wavelets import CoefficientTree, WaveletSpec

_EVAL_EPS = 1e-12  # domain-membership slack for rounded inputs


@dataclass(frozen=True)
class CoefficientLaw:
    """Law of the raw coefficients: uniform on [-1,1], with optional
    linear tilts (1 + eps x)/2 on a finite set of coefficient keys.

    A key is ("father", position) or ("mother", level, position, type_bits).
    The density stays within [c0/2, 1/(2 c0)] with c0 = 1 - max|eps|.
    """

    tilts: tuple = ()  # ((key, eps), ...)

    def __post_init__(self):
        for key, eps in self.tilts:
            if abs(eps) > 1.0:
                raise ValueError(f"tilt magnitude must be <= 1, got {eps} at {key}")

    @property
    def kind(self) -> str:
        return "tilted" if self.tilts else "uniform"

    @property
    def c0(self) -> float:
        worst = max((abs(e) for _, e in self.tilts), default=0.0)
        return 1.0 - worst if worst < 1.0 else 1e-12

    def tilt_of(self, key):
        for k, eps in self.tilts:
            if k == key:
                return eps
        return 0.0


def sample_tilted(rng: np.random.Generator, eps: float, size: int) -> np.ndarray:
    """Draws from density (1 + eps x)/2 on [-1,1] by rejection from uniform.

    Acceptance probability is 1/(1+|eps|) >= 1/2 per round.
    """
    out = np.empty(size)
    need = np.ones(size, dtype=bool)
    while need.any():
        m = int(need.sum())
        x = rng.uniform(-1.0, 1.0, m)
        u = rng.uniform(0.0, 1.0, m)
        accept = u * (1.0 + abs(eps)) <= 1.0 + eps * x
        idx = np.flatnonzero(need)[accept]
        out[idx] = x[accept]
        need[idx] = False
    return out


@dataclass(frozen=True)
class BesovPriorSpec:
    """Prior over functions on [0,1]^d with smoothness ``alpha``."""

    alpha: float
    C0: float = 1.0
    max_level: int = 6
    basis: WaveletSpec = field(default_factory=WaveletSpec)
    law: CoefficientLaw = field(default_factory=CoefficientLaw)

    def __post_init__(self):
        if not 0.0 < self.alpha < self.basis.regularity:
            raise ValueError(
                f"alpha must lie in (0, {self.basis.regularity}) for this basis")
        if self.C0 < 1.0:
            raise ValueError("C0 must be at least 1")
        if self.max_level < self.basis.base_level:
            raise ValueError("max_level below the basis base level")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def ambient_dim(self) -> int:
        return self.basis.dim


@dataclass(frozen=True)
class MultiIndexPriorSpec:
    """Composition of a p-dimensional base prior with a random projection."""

    base: BesovPriorSpec
    ambient_dim: int

    def __post_init__(self):
        if not 1 <= self.base.dim <= self.ambient_dim:
            raise ValueError("need 1 <= effective dim <= ambient dim")

    @property
    def effective_dim(self) -> int:
        return self.base.dim


@dataclass(frozen=True)
class MixtureSpec:
    """Finite mixture of component priors with positive weights summing to 1."""

    components: tuple  # ((label, BesovPriorSpec | MultiIndexPriorSpec), ...)
    weights: tuple

    def __post_init__(self):
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("components and weights must be nonempty and aligned")
        if any(w <= 0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        dims = {ambient_dim(spec) for _, spec in self.components}
        if len(dims) != 1:
            raise ValueError("all mixture components must share the ambient dimension")

    @property
    def labels(self):
        return [label for label, _ in self.components]


def as_mixture(prior) -> MixtureSpec:
    """View any prior spec as a (possibly single-component) mixture."""
    if isinstance(prior, MixtureSpec):
        return prior
    return MixtureSpec(((component_label(prior), prior),), (1.0,))


def component_label(spec) -> str:
    if isinstance(spec, MultiIndexPriorSpec):
        return f"alpha={spec.base.alpha:g},p={spec.effective_dim}"
    return f"alpha={spec.alpha:g}"


def ambient_dim(spec) -> int:
    return spec.ambient_dim


def uses_ball_domain(prior) -> bool:
    mix = as_mixture(prior)
    flags = {isinstance(s, MultiIndexPriorSpec) for _, s in mix.components}
    if len(flags) != 1:
        raise ValueError("mixture mixes cube-domain and ball-domain components")
    return flags.pop()


@dataclass
class RandomFunction:
    """A sampled regression function.

    ``tree`` stores the raw coefficients (all in [-1,1]); the scaling by
    C0 2^{-l(alpha+d/2)} is applied at evaluation time.  ``projection``
    carries the orthonormal columns for multi-index draws.
    """

    spec: BesovPriorSpec
    tree: CoefficientTree
    projection: np.ndarray = None
    _table: np.ndarray = None  # lazy Haar piecewise-constant cache

    @property
    def ambient_dim(self) -> int:
        if self.projection is not None:
            return self.projection.shape[0]
        return self.spec.dim


# ---------------------------------------------------------------------------
# Coefficient layout shared by single draws and batched pools
# ---------------------------------------------------------------------------

def _level_sizes(spec: BesovPriorSpec):
    """(father block size, [(level, block size), ...]) in storage order."""
    b = spec.basis
    d = b.dim
    father = b.n_father_positions ** d
    levels = [(l, b.n_types * (2 ** l) ** d) for l in range(b.base_level, spec.max_level + 1)]
    return father, levels


def coefficient_count(spec: BesovPriorSpec) -> int:
    father, levels = _level_sizes(spec)
    return father + sum(s for _, s in levels)


def _key_to_flat(spec: BesovPriorSpec, key) -> int:
    """Flat storage offset of a coefficient key."""
    b = spec.basis
    d = b.dim
    father, levels = _level_sizes(spec)
    if key[0] == "father":
        pos = np.ravel_multi_index(tuple(key[1]), (b.n_father_positions,) * d)
        return int(pos)
    _, level, pos, type_bits = key
    off = father
    for l, size in levels:
        if l == level:
            t = wv.type_bits_to_int(type_bits) - 1
            inner = np.ravel_multi_index(tuple(pos), (2 ** l,) * d)
            return int(off + t * (2 ** l) ** d + inner)
        off += size
    raise ValueError(f"tilt key {key} beyond truncation level {spec.max_level}")


def _slab_to_tree(spec: BesovPriorSpec, slab: np.ndarray) -> CoefficientTree:
    b = spec.basis
    d = b.dim
    father, levels = _level_sizes(spec)
    fathers = slab[:father].reshape((b.n_father_positions,) * d).copy()
    mothers = {}
    off = father
    for l, size in levels:
        mothers[l] = slab[off:off + size].reshape((b.n_types,) + (2 ** l,) * d).copy()
        off += size
    return CoefficientTree(fathers, mothers, spec.max_level)


def _draw_slab(spec: BesovPriorSpec, rng: np.random.Generator, rows: int) -> np.ndarray:
    """Raw coefficient slab of shape (rows, count); tilted keys are redrawn
    by rejection after the uniform bulk, in sorted key order."""
    count = coefficient_count(spec)
    slab = rng.uniform(-1.0, 1.0, (rows, count))
    for key, eps in sorted(spec.law.tilts, key=lambda t: _key_to_flat(spec, t[0])):
        slab[:, _key_to_flat(spec, key)] = sample_tilted(rng, eps, rows)
    return slab


# ---------------------------------------------------------------------------
# Sampling operations
# ---------------------------------------------------------------------------

def sample_besov(spec: BesovPriorSpec, rng: np.random.Generator) -> RandomFunction:
    """One draw: independent raw coefficients for every stored index."""
    slab = _draw_slab(spec, rng, 1)[0]
    return RandomFunction(spec, _slab_to_tree(spec, slab))


def sample_stiefel(d: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the orthonormal d x p frames, via Z (Z^T Z)^{-1/2}."""
    if not 1 <= p <= d:
        raise ValueError("need 1 <= p <= d")
    while True:
        z = rng.standard_normal((d, p))
        gram = z.T @ z
        vals, vecs = np.linalg.eigh(gram)
        if vals.min() > 1e-12:
            inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
            return z @ inv_sqrt
        # a singular Gram matrix has probability zero; redraw


def sample_stiefel_batch(d: int, p: int, rows: int,
                         rng: np.random.Generator) -> np.ndarray:
    """(rows, d, p) stack of independent uniform frames, Z (Z^T Z)^{-1/2}
    applied with batched linear algebra."""
    if not 1 <= p <= d:
        raise ValueError("need 1 <= p <= d")
    z = rng.standard_normal((rows, d, p))
    gram = np.einsum("mdp,mdq->mpq", z, z)
    vals, vecs = np.linalg.eigh(gram)
    bad = vals[:, 0] <= 1e-12
    for m in np.flatnonzero(bad):  # probability-zero fallback
        z[m] = rng.standard_normal((d, p))
        vals[m], vecs[m] = np.linalg.eigh(z[m].T @ z[m])
    inv_sqrt = np.einsum("mpq,mq,mrq->mpr", vecs, 1.0 / np.sqrt(vals), vecs)
    return np.einsum("mdp,mpq->mdq", z, inv_sqrt)


def sample_multi_index(spec: MultiIndexPriorSpec, rng: np.random.Generator,
                       projection_override: np.ndarray = None) -> RandomFunction:
    """Base draw in dimension p composed with an independent uniform frame.

    ``projection_override`` pins the frame (test hook for the identity case).
    """
    g = sample_besov(spec.base, rng)
    U = projection_override
    if U is None:
        U = sample_stiefel(spec.ambient_dim, spec.effective_dim, rng)
    g.projection = np.asarray(U, dtype=float)
    return g


def sample_any(spec, rng: np.random.Generator) -> RandomFunction:
    if isinstance(spec, MultiIndexPriorSpec):
        return sample_multi_index(spec, rng)
    return sample_besov(spec, rng)


def sample_mixture(mix: MixtureSpec, rng: np.random.Generator):
    """(label, draw) with the component picked by the mixture weights."""
    mix = as_mixture(mix)
    i = int(rng.choice(len(mix.components), p=np.asarray(mix.weights)))
    label, spec = mix.components[i]
    return label, sample_any(spec, rng)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _haar1_synthesis_matrix(spec: BesovPriorSpec) -> np.ndarray:
    """(coefficient count, 2^{L+1}) map from raw coefficients to the
    piecewise-constant cell values of a Haar d=1 draw.

    Level l contributes +/- C0 2^{-l alpha} b on the two half-cells, the
    scaled coefficient times the mother height 2^{l/2}.
    """
    father, levels = _level_sizes(spec)
    n_cells = 2 ** (spec.max_level + 1)
    W = np.zeros((coefficient_count(spec), n_cells))
    W[0, :] = spec.C0
    off = father
    for l, size in levels:
        block = n_cells // (2 * size)  # cells per half-support
        amp = spec.C0 * 2.0 ** (-l * spec.alpha)
        for k in range(size):
            lo = 2 * k * block
            W[off + k, lo:lo + block] = amp
            W[off + k, lo + block:lo + 2 * block] = -amp
        off += size
    return W


def _haar1_cell_values(spec: BesovPriorSpec, slab2d: np.ndarray) -> np.ndarray:
    """Piecewise-constant values on the 2^{L+1} dyadic cells (Haar, d=1)."""
    return slab2d @ _haar1_synthesis_matrix(spec)


def _cells_of(xs: np.ndarray, n_cells: int) -> np.ndarray:
    idx = np.floor(np.asarray(xs, dtype=float) * n_cells).astype(np.int64)
    return np.clip(idx, 0, n_cells - 1)


def _is_fast_haar1(spec) -> bool:
    return (isinstance(spec, BesovPriorSpec) and spec.basis.family == "haar"
            and spec.basis.dim == 1)


def _check_domain(f: RandomFunction, pts: np.ndarray):
    if f.projection is not None:
        norms = np.linalg.norm(pts, axis=-1)
        if np.any(norms > 1.0 + _EVAL_EPS):
            raise DomainError("point outside the unit ball")
    else:
        if np.any(pts < -_EVAL_EPS) or np.any(pts > 1.0 + _EVAL_EPS):
            raise DomainError("point outside the unit cube")


def eval_function_many(f: RandomFunction, xs) -> np.ndarray:
    """Values of the draw at a batch of points (shape (n, ambient_dim))."""
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if f.ambient_dim == 1 else pts.reshape(1, -1)
    _check_domain(f, pts)
    if f.projection is not None:
        z = (pts @ f.projection + 1.0) / 2.0
    else:
        z = pts
    spec = f.spec
    if _is_fast_haar1(spec):
        if f._table is None:
            father, levels = _level_sizes(spec)
            slab = np.concatenate(
                [f.tree.fathers.reshape(1, -1)]
                + [f.tree.mothers[l].reshape(1, -1) for l, _ in levels], axis=1)
            f._table = _haar1_cell_values(spec, slab)[0]
        return f._table[_cells_of(z[:, 0], f._table.shape[0])]
    return np.array([_eval_tree_point(spec, f.tree, z[i]) for i in range(z.shape[0])])


def eval_function(f: RandomFunction, x) -> float:
    """Value of the draw at one point; empty trees evaluate to 0."""
    return float(eval_function_many(f, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def _eval_tree_point(spec: BesovPriorSpec, tree: CoefficientTree, z: np.ndarray) -> float:
    """Direct synthesis at one point, visiting only indices whose support
    can contain it (one position per axis for Haar, a width-(2K-1) window
    for periodized Daubechies)."""
    b = spec.basis
    d = b.dim
    total = 0.0
    if b.family == "haar":
        window = [0]
    else:
        window = range(-(2 * b.vanishing_moments - 2), 1)
    # fathers
    scale_f = spec.C0 * 2.0 ** (-b.base_level * d / 2.0)
    n0 = b.n_father_positions
    for offs in np.ndindex(*([len(window)] * d)):
        pos = tuple(
            int(np.clip(np.floor(z[j] * n0), 0, n0 - 1) + window[offs[j]]) % n0
            for j in range(d))
        val = 1.0
        for j in range(d):
            val *= float(wv._factor_1d(b, "father", b.base_level, pos[j], z[j]))
        if val != 0.0:
            total += scale_f * tree.fathers[pos] * val
    # mothers
    for l in range(b.base_level, tree.max_level + 1):
        n_l = 2 ** l
        scale = spec.C0 * 2.0 ** (-l * (spec.alpha + d / 2.0))
        base_pos = [int(np.clip(np.floor(z[j] * n_l), 0, n_l - 1)) for j in range(d)]
        arr = tree.mothers[l]
        for t in range(1, 2 ** d):
            bits = wv.int_to_type_bits(t, d)
            for offs in np.ndindex(*([len(window)] * d)):
                pos = tuple((base_pos[j] + window[offs[j]]) % n_l for j in range(d))
                val = 1.0
                for j in range(d):
                    which = "mother" if bits[j] else "father"
                    val *= float(wv._factor_1d(b, which, l, pos[j], z[j]))
                    if val == 0.0:
                        break
                if val != 0.0:
                    total += scale * arr[(t - 1, *pos)] * val
    return total


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

def truncation_tail_bound(spec: BesovPriorSpec) -> float:
    """Sup-norm bound on the discarded levels beyond the truncation.

    C' C0 sum_{l > max_level} 2^{-l alpha} with C' the measured
    overlap x sup-norm constant of the basis; a closed geometric sum.
    """
    sup_c, overlap = wv.measured_constants(spec.basis)
    a = spec.alpha
    tail = 2.0 ** (-(spec.max_level + 1) * a) / (1.0 - 2.0 ** (-a))
    return sup_c * overlap * spec.C0 * tail


def sup_norm_bound(prior) -> float:
    """Computable bound on sup|g| over the prior's support.

    Per point, at most one father block and ``overlap`` mothers per level
    are active, each scaled coefficient contributing C0 2^{-l alpha}
    times the measured sup-norm constant.
    """
    mix = as_mixture(prior)
    worst = 0.0
    for _, spec in mix.components:
        base = spec.base if isinstance(spec, MultiIndexPriorSpec) else spec
        b = base.basis
        sup_c, overlap = wv.measured_constants(b)
        father_overlap = max(1, overlap // b.n_types)
        levels = np.arange(b.base_level, base.max_level + 1)
        mother_sum = float(np.sum(2.0 ** (-levels * base.alpha)))
        worst = max(worst, sup_c * base.C0 * (father_overlap + overlap * mother_sum))
    return worst


def choose_truncation_level(alpha: float, C0: float, sigma: float,
                            basis: WaveletSpec = None, cap: int = 12) -> int:
    """Smallest truncation level whose tail bound is at most sigma/10,
    capped (slowly decaying tails at small alpha would need huge trees)."""
    basis = basis or WaveletSpec()
    for L in range(basis.base_level, cap):
        spec = BesovPriorSpec(alpha, C0, L, basis)
        if truncation_tail_bound(spec) <= sigma / 10.0:
            return L
    return cap


def density_ratio(shifted: BesovPriorSpec, f: RandomFunction) -> float:
    """d(shifted)/d(untilted) at a draw: product of (1 + eps x_c) over the
    tilted coefficients (the 1/2 base densities cancel)."""
    ratio = 1.0
    for key, eps in shifted.law.tilts:
        if key[0] == "father":
            x = f.tree.father(key[1])
        else:
            _, level, pos, bits = key
            x = f.tree.mother(level, pos, bits)
        ratio *= 1.0 + eps * x
    return ratio


# ---------------------------------------------------------------------------
# Batched pools (the oracle's sample clouds)
# ---------------------------------------------------------------------------

class FunctionBatch:
    """M draws from a mixture prior, stored as per-component slabs.

    ``values_at`` evaluates every draw at a batch of points, vectorized
    over draws.  When all components are Haar on [0,1], ``cell_tables``
    exposes the shared piecewise-constant representation that the
    posterior oracle exploits.
    """

    def __init__(self, mix: MixtureSpec, labels_idx: np.ndarray, slabs: list,
                 projections: list):
        self.mix = mix
        self.labels_idx = labels_idx          # (M,) component index per draw
        self.slabs = slabs                    # per component: (M_c, count)
        self.projections = projections        # per component: (M_c, d, p) or None
        self.m_total = len(labels_idx)
        self._tables = None
        # position of each draw inside its component slab
        self.row_in_slab = np.zeros(self.m_total, dtype=np.int64)
        for c in range(len(mix.components)):
            sel = labels_idx == c
            self.row_in_slab[sel] = np.arange(int(sel.sum()))

    @property
    def labels(self):
        return [self.mix.labels[i] for i in self.labels_idx]

    def function_at(self, m: int):
        c = int(self.labels_idx[m])
        label, spec = self.mix.components[c]
        row = int(self.row_in_slab[m])
        base = spec.base if isinstance(spec, MultiIndexPriorSpec) else spec
        f = RandomFunction(base, _slab_to_tree(base, self.slabs[c][row]))
        if self.projections[c] is not None:
            f.projection = self.projections[c][row]
        return label, f

    def _component_tables(self):
        """Haar-d=1 cell tables per component, upsampled to a shared width."""
        if self._tables is not None:
            return self._tables
        specs = [s.base if isinstance(s, MultiIndexPriorSpec) else s
                 for _, s in self.mix.components]
        if not all(_is_fast_haar1(s) for s in specs):
            self._tables = []
            return self._tables
        width = max(2 ** (s.max_level + 1) for s in specs)
        tables = []
        for c, s in enumerate(specs):
            t = _haar1_cell_values(s, self.slabs[c])
            if t.shape[1] < width:
                t = np.repeat(t, width // t.shape[1], axis=1)
            tables.append(t)
        self._tables = tables
        return tables

    def _component_table(self, c: int):
        tables = self._component_tables()
        return tables[c] if tables else None

    def cell_tables(self):
        """(table, width) with one row per draw, or None when unavailable.

        Only valid for cube-domain pools (no projections)."""
        if any(p is not None for p in self.projections):
            return None
        tables = self._component_tables()
        if not tables:
            return None
        width = tables[0].shape[1]
        out = np.empty((self.m_total, width))
        for c, t in enumerate(tables):
            out[self.labels_idx == c] = t
        return out, width

    def values_at(self, xs: np.ndarray) -> np.ndarray:
        """(M, n) matrix of draw values at the points ``xs``."""
        pts = np.asarray(xs, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        out = np.empty((self.m_total, pts.shape[0]))
        for c, (label, spec) in enumerate(self.mix.components):
            sel = self.labels_idx == c
            if not sel.any():
                continue
            base = spec.base if isinstance(spec, MultiIndexPriorSpec) else spec
            proj = self.projections[c]
            table = self._component_table(c) if _is_fast_haar1(base) else None
            if proj is None:
                z = pts[:, 0] if base.dim == 1 else pts
                if table is not None:
                    out[sel] = table[:, _cells_of(z, table.shape[1])]
                else:
                    out[sel] = self._slow_values(c, pts)
            else:
                # per-draw projection: z_m = (U_m^T x + 1)/2
                if proj.shape[2] == 1:
                    z = (proj[:, :, 0] @ pts.T + 1.0)[:, :, None] / 2.0
                else:
                    z = (np.einsum("mdp,nd->mnp", proj, pts) + 1.0) / 2.0
                if table is not None:
                    idx = _cells_of(z[:, :, 0], table.shape[1])
                    out[sel] = np.take_along_axis(table, idx, axis=1)
                else:
                    out[sel] = self._slow_values(c, pts)
        return out

    def _slow_values(self, c: int, pts: np.ndarray) -> np.ndarray:
        rows = np.flatnonzero(self.labels_idx == c)
        vals = np.empty((len(rows), pts.shape[0]))
        for i, m in enumerate(rows):
            _, f = self.function_at(int(m))
            vals[i] = eval_function_many(f, pts)
        return vals


def sample_function_batch(prior, m_total: int, rng: np.random.Generator) -> FunctionBatch:
    """M independent draws from the prior, component labels first, then one
    coefficient slab per component, then projections; all from one stream."""
    mix = as_mixture(prior)
    k = len(mix.components)
    labels_idx = rng.choice(k, size=m_total, p=np.asarray(mix.weights)) if k > 1 \
        else np.zeros(m_total, dtype=np.int64)
    slabs, projections = [], []
    for c, (_, spec) in enumerate(mix.components):
        rows = int((labels_idx == c).sum())
        base = spec.base if isinstance(spec, MultiIndexPriorSpec) else spec
        slabs.append(_draw_slab(base, rng, rows))
        if isinstance(spec, MultiIndexPriorSpec):
            projections.append(sample_stiefel_batch(
                spec.ambient_dim, spec.effective_dim, rows, rng))
        else:
            projections.append(None)
    return FunctionBatch(mix, labels_idx, slabs, projections)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def function_to_json(f: RandomFunction) -> str:
    """JSON form: {family, d, p?, alpha, C0, L_max, fathers, mothers, U?}."""
    spec = f.spec
    b = spec.basis
    family = "haar" if b.family == "haar" else f"db{b.vanishing_moments}"
    doc = {
        "family": family,
        "d": f.ambient_dim,
        "alpha": spec.alpha,
        "C0": spec.C0,
        "L_max": spec.max_level,
        "fathers": [[list(map(int, pos)), float(f.tree.fathers[pos])]
                    for pos in np.ndindex(f.tree.fathers.shape)],
        "mothers": [
            [l, list(map(int, pos)), list(wv.int_to_type_bits(t + 1, b.dim)),
             float(arr[(t, *pos)])]
            for l, arr in sorted(f.tree.mothers.items())
            for t in range(arr.shape[0])
            for pos in np.ndindex(arr.shape[1:])
        ],
    }
    if f.projection is not None:
        doc["p"] = int(f.projection.shape[1])
        doc["U"] = [float(v) for v in f.projection.ravel()]
    return json.dumps(doc)


def function_from_json(text: str) -> RandomFunction:
    doc = json.loads(text)
    family = doc["family"]
    has_proj = "U" in doc
    inner_dim = int(doc.get("p", doc["d"]))
    if family == "haar":
        basis = WaveletSpec("haar", 0, 0, inner_dim)
    else:
        K = int(family[2:])
        basis = WaveletSpec("db", K, wv._min_periodization_level(K), inner_dim)
    spec = BesovPriorSpec(doc["alpha"], doc["C0"], int(doc["L_max"]), basis)
    tree = CoefficientTree.zeros(basis, spec.max_level)
    for pos, val in doc["fathers"]:
        tree.fathers[tuple(pos)] = val
    for l, pos, bits, val in doc["mothers"]:
        t = wv.type_bits_to_int(bits) - 1
        tree.mothers[int(l)][(t, *pos)] = val
    f = RandomFunction(spec, tree)
    if has_proj:
        f.projection = np.array(doc["U"], dtype=float).reshape(int(doc["d"]), inner_dim)
    return f


def tilt_spec(spec: BesovPriorSpec, tilts) -> BesovPriorSpec:
    """Copy of ``spec`` with the given ((key, eps), ...) coefficient tilts."""
    return replace(spec, law=CoefficientLaw(tuple(tilts)))
