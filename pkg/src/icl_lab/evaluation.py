"""Excess-risk estimation, divergences, shifted test laws and rate fits.

Excess risk is measured in the truth-difference form, the mean squared
gap between a prediction and the true regression value at the query, so
the noise floor cancels exactly.  Test distributions are tilted
coefficient laws with closed-form chi-squared divergence.  Log-log rate
fits report the slope, its standard error propagated from the per-point
risk errors, and the theoretical target exponent.

Paired comparisons reuse identical episode streams across predictors;
all estimates are deterministic given the experiment seed and are
independent of how episodes are partitioned across workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import oracle as orc
from . import priors as pr
from . import tasks as tk
from . import transformer as tfm
from .errors import LogDomainError, ShiftBudgetError
from .seeding import STREAM_ORACLE, child_rng


@dataclass
class RiskEstimate:
    mean: float
    stderr: float
    J: int
    n: int
    predictor_id: str = ""
    errors: np.ndarray = None  # per-episode squared errors, kept for pairing

    def __post_init__(self):
        if self.J >= 2 and self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


@dataclass(frozen=True)
class ShiftSpec:
    """A finitely-tilted test law near one mixture component.

    ``tilts`` maps coefficient keys to tilt sizes; the resulting
    chi-squared divergence from the untilted component is the closed
    product over tilted coefficients.
    """

    component_label: str
    tilts: tuple = ()

    @property
    def kappa(self) -> float:
        return chi_squared_of_shift(self)


def chi_squared_of_shift(shift: ShiftSpec) -> float:
    """prod_c (1 + eps_c^2 / 3) - 1; each linear tilt contributes eps^2/3
    and independence across coefficients makes the divergence multiply."""
    total = 1.0
    for _, eps in shift.tilts:
        total *= 1.0 + eps ** 2 / 3.0
    return total - 1.0


def single_tilt_for_kappa(kappa: float):
    """Tilt size achieving a target divergence with one tilted coefficient."""
    eps = np.sqrt(3.0 * kappa)
    if eps > 1.0:
        raise ShiftBudgetError(f"kappa={kappa} needs a tilt beyond |eps|<=1")
    return float(eps)


def make_shifted_prior(prior, shift: ShiftSpec, kappa_budget: float = None):
    """The tilted component as a standalone test prior.

    Identical to the named component except for the tilted coefficient
    laws; density-ratio queries stay available through the tilted spec.
    """
    if kappa_budget is not None and shift.kappa > kappa_budget + 1e-12:
        raise ShiftBudgetError(
            f"shift kappa {shift.kappa:.6g} exceeds budget {kappa_budget:.6g}")
    mix = pr.as_mixture(prior)
    for label, spec in mix.components:
        if label == shift.component_label:
            if isinstance(spec, pr.MultiIndexPriorSpec):
                tilted = pr.MultiIndexPriorSpec(
                    pr.tilt_spec(spec.base, shift.tilts), spec.ambient_dim)
            else:
                tilted = pr.tilt_spec(spec, shift.tilts)
            return pr.MixtureSpec(((label, tilted),), (1.0,))
    raise ShiftBudgetError(f"no component labelled {shift.component_label!r}")


def component_weight(prior, label: str) -> float:
    mix = pr.as_mixture(prior)
    for (lab, _), w in zip(mix.components, mix.weights):
        if lab == label:
            return float(w)
    raise ValueError(f"no component labelled {label!r}")


def chi_squared_vs_mixture(prior, shift: ShiftSpec) -> float:
    """Upper bound on the divergence from the full mixture: components have
    essentially disjoint supports, so chi^2(mu, pi) <= (kappa+1)/lambda - 1
    with lambda the tilted component's mixture weight."""
    lam = component_weight(prior, shift.component_label)
    return (shift.kappa + 1.0) / lam - 1.0


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

class OraclePredictor:
    """Posterior-mean predictor with a per-episode fresh sample pool."""

    def __init__(self, prior, cfg: orc.OracleConfig, tag: str = "oracle"):
        self.prior = prior
        self.cfg = cfg
        self.id = tag

    def __call__(self, ep: tk.Episode, rng: np.random.Generator) -> float:
        return orc.posterior_mean(ep.xs, ep.ys, ep.query, self.prior, self.cfg, rng)


class TransformerPredictor:
    def __init__(self, params: tfm.TransformerParams, tag: str = "transformer"):
        self.params = params
        self.id = tag

    def __call__(self, ep: tk.Episode, rng) -> float:
        return tfm.predict_clipped(self.params, ep.xs, ep.ys, ep.query)


class ConstantPredictor:
    def __init__(self, value: float = 0.0, tag: str = None):
        self.value = value
        self.id = tag or f"constant({value:g})"

    def __call__(self, ep, rng) -> float:
        return self.value


class TruthPredictor:
    """Test hook: reads the ground truth straight from the episode."""

    id = "truth"

    def __call__(self, ep: tk.Episode, rng) -> float:
        return ep.g_at_query


# ---------------------------------------------------------------------------
# Paired excess-risk estimation
# ---------------------------------------------------------------------------

def _chunk_errors(predictors, test_prior, n, noise, root_seed, j_range, metric):
    sampler = tk.domain_for(test_prior)
    out = np.empty((len(predictors), len(j_range)))
    for col, j in enumerate(j_range):
        ep = tk.generate_episode(test_prior, n, noise, sampler, root_seed, j)
        reference = ep.g_at_query if metric == "excess" else ep.target
        for pi, pred in enumerate(predictors):
            rng = child_rng(root_seed, STREAM_ORACLE, j, pi)
            out[pi, col] = (pred(ep, rng) - reference) ** 2
    return out


def paired_risks(predictors, test_prior, n: int, noise: tk.NoiseSpec,
                 J: int, root_seed: int, threads: int = 1,
                 metric: str = "excess"):
    """One RiskEstimate per predictor, all on identical episodes.

    ``metric`` "excess" squares the gap to the true regression value
    (noise-free form); "pi" squares the gap to the noisy response.
    Episode j is derived from (root_seed, j), so estimates are bitwise
    reproducible for any thread count and any chunking.
    """
    if J < 1:
        raise ValueError("need at least one episode")
    if metric not in ("excess", "pi"):
        raise ValueError(f"unknown risk metric {metric!r}")
    if threads > 1 and J >= 4 * threads:
        chunks = np.array_split(np.arange(J), threads)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                _chunk_errors,
                *zip(*[(predictors, test_prior, n, noise, root_seed, list(c), metric)
                       for c in chunks])))
        errors = np.concatenate(parts, axis=1)
    else:
        errors = _chunk_errors(predictors, test_prior, n, noise, root_seed,
                               range(J), metric)
    out = []
    for pi, pred in enumerate(predictors):
        errs = errors[pi]
        stderr = float(errs.std(ddof=1) / np.sqrt(J)) if J > 1 else 0.0
        out.append(RiskEstimate(float(errs.mean()), stderr, J, n, pred.id, errs))
    return out


def paired_excess_risks(predictors, test_prior, n: int, noise: tk.NoiseSpec,
                        J: int, root_seed: int, threads: int = 1):
    return paired_risks(predictors, test_prior, n, noise, J, root_seed,
                        threads, metric="excess")


def estimate_excess_risk(predictor, test_prior, n: int, noise: tk.NoiseSpec,
                         J: int, root_seed: int, threads: int = 1) -> RiskEstimate:
    """Monte-Carlo ICL excess risk of one predictor under a test prior."""
    return paired_excess_risks([predictor], test_prior, n, noise, J,
                               root_seed, threads)[0]


def paired_gap_stderr(a: RiskEstimate, b: RiskEstimate) -> float:
    """Standard error of mean(a - b) using the shared episodes."""
    if a.errors is None or b.errors is None or len(a.errors) != len(b.errors):
        return float(np.hypot(a.stderr, b.stderr))
    diff = a.errors - b.errors
    return float(diff.std(ddof=1) / np.sqrt(len(diff)))


# ---------------------------------------------------------------------------
# Gaussian-regression divergences (closed forms over covariate samples)
# ---------------------------------------------------------------------------

def _gap_squared(g1, g2, xs) -> np.ndarray:
    pts = np.asarray(xs, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return (orc._eval_g(g1, pts) - orc._eval_g(g2, pts)) ** 2


def kl_gaussian_regression(g1, g2, xs, sigma: float) -> float:
    """KL(P1, P2) = E[(g1(X)-g2(X))^2] / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return float(np.mean(_gap_squared(g1, g2, xs)) / (2.0 * sigma ** 2))


def v2_gaussian_regression(g1, g2, xs, sigma: float) -> float:
    """Variance of the log-likelihood ratio under P1.

    Var(log dP1/dP2) = Var(D^2)/(4 sigma^4) + E(D^2)/sigma^2 with
    D = g1 - g2: the quadratic term from the squared-gap fluctuations
    plus the cross term from the Gaussian noise.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = _gap_squared(g1, g2, xs)
    return float(d2.var() / (4.0 * sigma ** 4) + d2.mean() / sigma ** 2)


@dataclass
class HellingerResult:
    value: float
    lower: float     # (1 - e^{-R^2/(2 s^2)}) / (2 R^2) * E(D^2)
    upper: float     # E(D^2) / (4 s^2)
    sandwich_ok: bool


def hellinger_gaussian_regression(g1, g2, xs, sigma: float, R: float,
                                  slack: float = 0.0) -> HellingerResult:
    """Squared Hellinger distance 2 E[1 - exp(-D^2/(8 sigma^2))], with the
    two-sided quadratic sandwich checked up to MC ``slack``."""
    if sigma <= 0 or R <= 0:
        raise ValueError("sigma and R must be positive")
    d2 = _gap_squared(g1, g2, xs)
    value = float(2.0 * np.mean(1.0 - np.exp(-d2 / (8.0 * sigma ** 2))))
    mean_d2 = float(d2.mean())
    lower = (1.0 - np.exp(-R ** 2 / (2.0 * sigma ** 2))) / (2.0 * R ** 2) * mean_d2
    upper = mean_d2 / (4.0 * sigma ** 2)
    ok = (value >= lower - slack) and (value <= upper + slack)
    return HellingerResult(value, float(lower), float(upper), bool(ok))


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    ns: list
    means: list
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    target: float

    @property
    def deviation(self) -> float:
        return self.slope - self.target


def target_exponent(beta: float, effective_dim: int) -> float:
    """-2 beta / (2 beta + dim), the contraction-rate slope."""
    return -2.0 * beta / (2.0 * beta + effective_dim)


def fit_rate(estimates, target: float) -> RateFit:
    """OLS of log risk on log n.

    The slope standard error propagates the per-point risk errors by the
    delta method (se of log mean = stderr/mean); needs >= 4 grid points
    and positive means.
    """
    ests = sorted(estimates, key=lambda e: e.n)
    ns = [e.n for e in ests]
    if len(ns) < 4:
        raise ValueError("rate fits need at least 4 grid points")
    if len(set(ns)) != len(ns):
        raise ValueError("grid points must be distinct")
    means = np.array([e.mean for e in ests])
    if np.any(means <= 0):
        raise LogDomainError("risk means must be positive for a log-log fit")
    x = np.log(np.array(ns, dtype=float))
    y = np.log(means)
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    coeffs = (x - xbar) / sxx
    slope = float(np.dot(coeffs, y))
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    log_se = np.array([e.stderr / e.mean if e.mean > 0 else 0.0 for e in ests])
    slope_se = float(np.sqrt(np.sum(coeffs ** 2 * log_se ** 2)))
    return RateFit(list(ns), [float(m) for m in means], slope, intercept,
                   slope_se, r2, float(target))


# ---------------------------------------------------------------------------
# The excess-risk decomposition bound
# ---------------------------------------------------------------------------

def verify_decomposition_bound(predictor, oracle_predictor, prior,
                               shift: ShiftSpec, n: int, noise: tk.NoiseSpec,
                               clip_R: float, J: int, root_seed: int,
                               threads: int = 1) -> dict:
    """Check LHS <= 4R sqrt((chi2+1) E) + 2 prox + 4 x combined stderr.

    LHS is the predictor's excess risk under the (possibly shifted) test
    law; E is its mean squared gap to the posterior oracle under the
    pretraining prior; prox is the oracle's excess risk under the test
    law.  chi-squared uses the closed-form component bound.
    """
    mu = make_shifted_prior(prior, shift) if shift is not None else None
    kappa = shift.kappa if shift is not None else 0.0
    if shift is not None:
        chi2 = chi_squared_vs_mixture(prior, shift)
    else:
        chi2 = 0.0
    test_prior = mu if mu is not None else prior

    # LHS and proximity share mu-episodes; the posterior-gap term uses
    # pi-episodes (seed offset keeps the two streams distinct)
    lhs_est, prox_est = paired_excess_risks(
        [predictor, oracle_predictor], test_prior, n, noise, J, root_seed, threads)

    sampler = tk.domain_for(prior)
    gaps = np.empty(J)
    for j in range(J):
        ep = tk.generate_episode(prior, n, noise, sampler, root_seed + 1_000_003, j)
        pred = predictor(ep, child_rng(root_seed, STREAM_ORACLE, j, 10))
        gpi = oracle_predictor(ep, child_rng(root_seed, STREAM_ORACLE, j, 11))
        gaps[j] = (pred - gpi) ** 2
    e_term = float(gaps.mean())
    e_se = float(gaps.std(ddof=1) / np.sqrt(J)) if J > 1 else 0.0

    first = 4.0 * clip_R * np.sqrt((chi2 + 1.0) * max(e_term, 0.0))
    rhs = first + 2.0 * prox_est.mean
    if e_term > 0:
        first_se = 4.0 * clip_R * np.sqrt(chi2 + 1.0) * e_se / (2.0 * np.sqrt(e_term))
    else:
        first_se = 4.0 * clip_R * np.sqrt((chi2 + 1.0) * e_se)
    slack = 4.0 * (lhs_est.stderr + first_se + 2.0 * prox_est.stderr)
    return {
        "predictor": predictor.id,
        "n": n,
        "J": J,
        "kappa": float(kappa),
        "chi_squared_vs_pretraining": float(chi2),
        "clip_R": float(clip_R),
        "lhs_excess_risk": {"mean": lhs_est.mean, "stderr": lhs_est.stderr},
        "posterior_gap": {"mean": e_term, "stderr": e_se},
        "posterior_proximity": {"mean": prox_est.mean, "stderr": prox_est.stderr},
        "rhs": float(rhs),
        "slack": float(slack),
        "holds": bool(lhs_est.mean <= rhs + slack),
        "margin": float(rhs + slack - lhs_est.mean),
    }
