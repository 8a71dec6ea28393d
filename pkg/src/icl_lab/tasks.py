"""Episode generation: covariates, noisy responses, pretraining streams.

An episode is n labeled examples plus a query, its noisy response and
the true regression value at the query.  Episode t of a stream is
generated entirely from the stream's root seed and t, so any subset of
the stream can be produced independently and in any order.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from . import priors as pr
from .seeding import STREAM_TASKS, child_rng, child_seed


@dataclass(frozen=True)
class DomainSampler:
    """Covariate law: uniform on the unit cube or on the unit ball."""

    kind: str = "unit-cube"   # "unit-cube" | "unit-ball"
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("unit-cube", "unit-ball"):
            raise ValueError(f"unknown domain sampler {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian response noise."""

    sigma: float = 0.25

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError("sigma must be finite and nonnegative")


@dataclass
class Episode:
    """One prompt: examples, query, noisy target and the ground truth."""

    xs: np.ndarray            # (n, d)
    ys: np.ndarray            # (n,)
    query: np.ndarray         # (d,)
    target: float             # noisy response at the query
    g_at_query: float         # true regression value at the query
    component_label: str = ""
    seed: int = -1

    @property
    def n(self) -> int:
        return len(self.ys)


def domain_for(prior) -> DomainSampler:
    """The default covariate law matching a prior: cube for Besov draws,
    ball for multi-index draws."""
    kind = "unit-ball" if pr.uses_ball_domain(prior) else "unit-cube"
    return DomainSampler(kind, pr.ambient_dim(pr.as_mixture(prior).components[0][1]))


def sample_covariate(sampler: DomainSampler, rng: np.random.Generator,
                     count: int = None) -> np.ndarray:
    """Uniform covariates; the ball uses a Gaussian direction and a U^{1/d}
    radius. Returns shape (d,) or (count, d)."""
    squeeze = count is None
    m = 1 if squeeze else count
    d = sampler.dim
    if sampler.kind == "unit-cube":
        out = rng.uniform(0.0, 1.0, (m, d))
    else:
        z = rng.standard_normal((m, d))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        radii = rng.uniform(0.0, 1.0, (m, 1)) ** (1.0 / d)
        out = z / norms * radii
    return out[0] if squeeze else out


def make_episode(g: pr.RandomFunction, n: int, noise: NoiseSpec,
                 sampler: DomainSampler, rng: np.random.Generator,
                 component_label: str = "", seed: int = -1) -> Episode:
    """n examples plus a query from one regression function.

    All n+1 covariates are independent; responses are g(x) + N(0, sigma^2)
    with independent noise, the query's noisy response included.
    """
    if n < 1:
        raise ValueError("episodes need at least one example")
    pts = sample_covariate(sampler, rng, n + 1)
    vals = pr.eval_function_many(g, pts)
    eps = noise.sigma * rng.standard_normal(n + 1) if noise.sigma > 0 \
        else np.zeros(n + 1)
    return Episode(
        xs=pts[:n],
        ys=vals[:n] + eps[:n],
        query=pts[n],
        target=float(vals[n] + eps[n]),
        g_at_query=float(vals[n]),
        component_label=component_label,
        seed=seed,
    )


def episode_seed(root_seed: int, t: int) -> int:
    """Per-episode seed hashed from (root_seed, t) via the seed tree."""
    return int(child_seed(root_seed, STREAM_TASKS, t).generate_state(1, np.uint64)[0])


def generate_episode(prior, n: int, noise: NoiseSpec, sampler: DomainSampler,
                     root_seed: int, t: int, vary_context: bool = False) -> Episode:
    """Episode t of the stream rooted at ``root_seed``: fresh function from
    the prior, then the prompt.  Deterministic in (root_seed, t)."""
    rng = child_rng(root_seed, STREAM_TASKS, t)
    label, g = pr.sample_mixture(pr.as_mixture(prior), rng)
    n_t = int(rng.integers(1, n + 1)) if vary_context else n
    return make_episode(g, n_t, noise, sampler, rng,
                        component_label=label, seed=episode_seed(root_seed, t))


def pretraining_stream(prior, T: int, n: int, noise: NoiseSpec,
                       sampler: DomainSampler, root_seed: int,
                       vary_context: bool = False):
    """Iterator over episodes 0..T-1; safe to consume in parallel slices."""
    if T < 1:
        raise ValueError("stream length must be at least 1")
    for t in range(T):
        yield generate_episode(prior, n, noise, sampler, root_seed, t, vary_context)


# ---------------------------------------------------------------------------
# JSONL corpus files
# ---------------------------------------------------------------------------

def episode_to_json(ep: Episode) -> str:
    return json.dumps({
        "xs": ep.xs.tolist(),
        "ys": ep.ys.tolist(),
        "query": ep.query.tolist(),
        "target": ep.target,
        "g_at_query": ep.g_at_query,
        "component_label": ep.component_label,
        "seed": ep.seed,
    })


def episode_from_json(line: str) -> Episode:
    doc = json.loads(line)
    return Episode(
        xs=np.asarray(doc["xs"], dtype=float),
        ys=np.asarray(doc["ys"], dtype=float),
        query=np.asarray(doc["query"], dtype=float),
        target=float(doc["target"]),
        g_at_query=float(doc["g_at_query"]),
        component_label=doc.get("component_label", ""),
        seed=int(doc.get("seed", -1)),
    )


def write_episodes(path, episodes):
    count = 0
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(episode_to_json(ep) + "\n")
            count += 1
    return count


def read_episodes(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(episode_from_json(line))
    return out
