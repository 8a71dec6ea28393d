"""Monte-Carlo posterior regression function and reference dataflows.

The posterior mean at a query given n examples is approximated by
importance-weighting M prior draws with their Gaussian likelihoods,
combined through a max-subtracted softmax.  A finite-support variant
computes the exact weighted Bayes ratio, and ``dataflow_reference``
executes the attention-averaging construction that realizes the same
computation inside a three-block transformer.

Examples are canonicalized (sorted) before any reduction, so the
posterior mean is bitwise invariant under permutations of the prompt.
"""

from dataclasses import dataclass

import numpy as np

from . import priors as pr
from .errors import ConditioningError, DegenerateLikelihoodError


@dataclass(frozen=True)
class OracleConfig:
    """Monte-Carlo budget, noise scale and output clip bound."""

    m_samples: int = 4096
    sigma: float = 0.25
    clip: float = 10.0

    def __post_init__(self):
        if self.m_samples < 1:
            raise ValueError("need at least one posterior sample")
        if self.sigma <= 0:
            raise DegenerateLikelihoodError(
                "zero-noise conditioning is degenerate; use the discrete oracle")
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")


def _as_points(xs) -> np.ndarray:
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


def canonical_order(xs: np.ndarray, ys: np.ndarray):
    """Sort examples by (coordinates, response); any permutation of the
    same multiset maps to identical arrays."""
    keys = (np.asarray(ys),) + tuple(xs[:, j] for j in range(xs.shape[1]))
    idx = np.lexsort(keys)
    return xs[idx], np.asarray(ys)[idx]


def _eval_g(g, pts: np.ndarray) -> np.ndarray:
    if isinstance(g, pr.RandomFunction):
        return pr.eval_function_many(g, pts)
    return np.array([float(g(p if pts.shape[1] > 1 else p[0])) for p in pts])


def log_likelihood(xs, ys, g, sigma: float) -> float:
    """Gaussian log-likelihood up to the shared additive constant:
    -sum_i (y_i - g(x_i))^2 / (2 sigma^2); an empty prompt gives 0."""
    if sigma <= 0:
        raise DegenerateLikelihoodError("log_likelihood requires sigma > 0")
    ys = np.asarray(ys, dtype=float)
    if len(ys) == 0:
        return 0.0
    pts = _as_points(xs)
    res = ys - _eval_g(g, pts)
    return float(-np.dot(res, res) / (2.0 * sigma ** 2))


def _pool_statistics(pool: pr.FunctionBatch, xs: np.ndarray, ys: np.ndarray,
                     query: np.ndarray, sigma: float):
    """(log-weights, draw values at the query) for a sample pool.

    Cube-domain Haar pools reduce to binned sufficient statistics on the
    shared dyadic cells; other pools evaluate the draws directly.
    """
    ct = pool.cell_tables()
    if ct is not None and len(ys) > 0:
        table, width = ct
        cells = pr._cells_of(xs[:, 0], width)
        sum_y = np.bincount(cells, weights=ys, minlength=width)
        counts = np.bincount(cells, minlength=width).astype(float)
        rss = float(np.dot(ys, ys)) - 2.0 * table @ sum_y + (table * table) @ counts
        gq = table[:, int(pr._cells_of(np.atleast_1d(query)[0:1], width)[0])]
        return -rss / (2.0 * sigma ** 2), gq
    gq = pool.values_at(np.atleast_2d(query))[:, 0]
    if len(ys) == 0:
        return np.zeros(pool.m_total), gq
    vals = pool.values_at(xs)
    res = vals - ys[None, :]
    return -np.einsum("mn,mn->m", res, res) / (2.0 * sigma ** 2), gq


def _softmax_combine(log_w: np.ndarray, gq: np.ndarray) -> float:
    top = np.max(log_w)
    if not np.isfinite(top):
        raise ConditioningError("all posterior sample weights vanished")
    w = np.exp(log_w - top)
    return float(np.dot(w, gq) / np.sum(w))


def clip_to(value: float, bound: float) -> float:
    return float(min(max(value, -bound), bound))


def posterior_mean(xs, ys, query, prior, cfg: OracleConfig,
                   rng: np.random.Generator, pool: pr.FunctionBatch = None) -> float:
    """Monte-Carlo posterior regression value at the query.

    Draws a fresh pool of ``cfg.m_samples`` prior functions unless one is
    supplied; the output is a weight-convex combination of draw values,
    clipped to ``cfg.clip``.
    """
    pts = _as_points(xs)
    ys = np.asarray(ys, dtype=float)
    if len(ys):
        pts, ys = canonical_order(pts, ys)
    if pool is None:
        pool = pr.sample_function_batch(prior, cfg.m_samples, rng)
    log_w, gq = _pool_statistics(pool, pts, ys, np.atleast_1d(query), cfg.sigma)
    return clip_to(_softmax_combine(log_w, gq), cfg.clip)


def posterior_mean_discrete(atoms, xs, ys, query, sigma: float) -> float:
    """Exact posterior mean for a finite-support prior.

    ``atoms`` is a list of (function, weight) with positive weights
    summing to 1; functions may be draws or plain callables.
    """
    weights = np.array([w for _, w in atoms], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("atom weights must be positive and sum to 1")
    pts = _as_points(xs)
    ys = np.asarray(ys, dtype=float)
    if len(ys):
        pts, ys = canonical_order(pts, ys)
    q = np.atleast_2d(np.asarray(query, dtype=float))
    log_w = np.empty(len(atoms))
    gq = np.empty(len(atoms))
    for j, (g, w) in enumerate(atoms):
        ll = log_likelihood(pts, ys, g, sigma) if len(ys) else 0.0
        log_w[j] = np.log(w) + ll
        gq[j] = _eval_g(g, q)[0]
    return _softmax_combine(log_w, gq)


# ---------------------------------------------------------------------------
# The constructive three-block dataflow
# ---------------------------------------------------------------------------

def dataflow_reference(xs, ys, query, pool, sigma: float, clip: float = None,
                       return_info: bool = False):
    """Posterior mean computed through the constructive transformer dataflow.

    Block 1 writes per-example log-likelihood rows against each pool draw
    (two copies) and per-draw query encodings; block 2 is a single
    attention head with zero queries/keys, whose uniform row average
    accumulates the log-likelihood sums scaled by 1/(n+1); the readout
    rescales by the positional coordinate and takes the ratio of summed
    exponentials.  Equals the softmax posterior mean over the same pool.

    Draw values at the query are encoded as log g when all are positive;
    otherwise as log(g + shift) with shift = clip + 1 (or a bound derived
    from the pool), decoded exactly after the ratio.
    """
    if sigma <= 0:
        raise DegenerateLikelihoodError("dataflow reference requires sigma > 0")
    pts = _as_points(xs)
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    if isinstance(pool, pr.FunctionBatch):
        g_at_examples = pool.values_at(pts)                      # (M, n)
        g_at_query = pool.values_at(np.atleast_2d(query))[:, 0]  # (M,)
        M = pool.m_total
    else:
        g_at_examples = np.stack([_eval_g(g, pts) for g in pool])
        g_at_query = np.array([_eval_g(g, np.atleast_2d(query))[0] for g in pool])
        M = len(pool)
    d_model = 4 * M + 1

    # normalized log-densities: log fbar = -(resid)^2 / (2 sigma^2) <= 0
    log_fbar = -(ys[None, :] - g_at_examples) ** 2 / (2.0 * sigma ** 2)  # (M, n)

    shift = 0.0
    if np.min(g_at_query) <= 0.0:
        bound = clip if clip is not None else float(np.max(np.abs(g_at_query)))
        shift = bound + 1.0
    encoded = np.log(g_at_query + shift)

    Z = np.zeros((n + 1, d_model))
    Z[:n, 0:M] = log_fbar.T
    Z[:n, M:2 * M] = log_fbar.T
    Z[n, 0:M] = encoded
    Z[n, d_model - 1] = 1.0

    # attention head with zero queries and keys: scores vanish, the softmax
    # is uniform, and the value matrix copies column blocks [0:2M] -> [2M:4M]
    # and preserves the positional flag
    V = np.zeros((d_model, d_model))
    for j in range(2 * M):
        V[j, 2 * M + j] = 1.0
    V[d_model - 1, d_model - 1] = 1.0
    scores = (Z @ np.zeros((d_model, d_model))) @ (Z @ np.zeros((d_model, d_model))).T
    scores /= np.sqrt(d_model)
    attn = np.exp(scores - scores.max(axis=1, keepdims=True))
    attn /= attn.sum(axis=1, keepdims=True)
    Zbar = Z + attn @ Z @ V

    row = Zbar[n]
    positional = row[d_model - 1]          # 1 + 1/(n+1)
    scale = positional - 1.0               # 1/(n+1)
    numer = np.sum(np.exp(row[2 * M:3 * M] / scale))
    denom = np.sum(np.exp(row[3 * M:4 * M] / scale))
    if denom == 0.0 or not np.isfinite(denom):
        raise ConditioningError("dataflow readout under/overflowed; reduce n or sigma")
    value = numer / denom - shift
    if clip is not None:
        value = clip_to(value, clip)
    if return_info:
        return float(value), {
            "positional": float(positional),
            "d_model": d_model,
            "shift": shift,
        }
    return float(value)
