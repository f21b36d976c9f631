"""Cross-site combination with data-dependent weights.

Each site ships its stopping time, shared-coefficient estimate and the
shared block of its inverse information.  The combined estimate weights
sites by the realized sample-size fractions ``w_j = n_j / n_total``; its
covariance estimate is ``sum_j w_j^2 * theta_cov_j``.  The resulting
confidence ellipsoid has maximum axis exactly ``2 * d1``, matching the
per-site sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .confidence import ConfidenceEllipsoid
from .errors import ExhaustedSiteError, SingularInformationError
from .glm import resolve_selector
from .linalg import max_eigenvalue, solve_spd
from .quantiles import chi2_quantile
from .sequential import SiteConfig, SiteResult, run_site
from .validation import check_design_matrix


def allocate_budget(n_sites: int, a_sq: float, weights=None) -> np.ndarray:
    """Split the squared chi-square budget ``a_sq`` across sites.

    ``weights`` are relative proportions (equal when omitted).  The shares
    are renormalized so they sum to ``a_sq`` exactly; any floating-point
    residual is absorbed by the largest share.
    """
    if n_sites < 1:
        raise ValueError(f"n_sites must be at least 1, got {n_sites}")
    if not a_sq > 0:
        raise ValueError(f"a_sq must be positive, got {a_sq}")
    if weights is None:
        weights = np.ones(n_sites)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != n_sites:
        raise ValueError(f"got {weights.shape[0]} weights for {n_sites} sites")
    if not np.all(weights > 0):
        raise ValueError("budget weights must all be positive")
    shares = a_sq * (weights / weights.sum())
    shares[np.argmax(shares)] += a_sq - shares.sum()
    return shares


@dataclass(frozen=True)
class FederationPlan:
    """Budget allocation shared by all sites of one federated run."""

    n_sites: int
    p0: int
    alpha: float = 0.05
    budget_weights: Optional[tuple] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.p0 < 1:
            raise ValueError(f"p0 must be at least 1, got {self.p0}")

    @property
    def a_sq(self) -> float:
        return chi2_quantile(self.p0, 1.0 - self.alpha)

    def site_budgets(self) -> np.ndarray:
        return allocate_budget(self.n_sites, self.a_sq, self.budget_weights)


@dataclass(frozen=True)
class CombinedResult:
    """Random-weight combination of per-site results."""

    total_n: int
    weights: np.ndarray
    theta: np.ndarray
    theta_cov: np.ndarray
    precision_stat: float


def combine(results: Sequence[SiteResult], allow_exhausted: bool = False) -> CombinedResult:
    """Combine site results with realized sample-size weights.

    A site that exhausted its pool never satisfied its stopping rule, so the
    combined set's guarantees do not cover it; by default its presence raises
    :class:`ExhaustedSiteError`.  With ``allow_exhausted=True`` exhausted
    sites are excluded and the weights renormalized over the sites that did
    stop (excluded sites get weight 0).
    """
    if len(results) == 0:
        raise ValueError("need at least one site result")
    p0 = results[0].theta.shape[0]
    for r in results:
        if r.theta.shape[0] != p0 or r.theta_cov.shape != (p0, p0):
            raise ValueError("site results disagree on the shared block dimension")
    exhausted = [i for i, r in enumerate(results) if r.exhausted]
    if exhausted and not allow_exhausted:
        raise ExhaustedSiteError(
            f"site(s) {exhausted} ran out of candidates before stopping"
        )
    if len(exhausted) == len(results):
        raise ExhaustedSiteError("every site ran out of candidates before stopping")
    stop_times = np.array(
        [0.0 if r.exhausted else float(r.stopping_time) for r in results]
    )
    for r in results:
        if not r.exhausted and r.stopping_time < 1:
            raise ValueError(f"invalid stopping time {r.stopping_time}")
    total_n = float(stop_times.sum())
    weights = stop_times / total_n
    theta = np.zeros(p0)
    theta_cov = np.zeros((p0, p0))
    for w, r in zip(weights, results):
        if w == 0.0:
            continue
        theta += w * r.theta
        theta_cov += (w * w) * r.theta_cov
    return CombinedResult(
        total_n=int(total_n),
        weights=weights,
        theta=theta,
        theta_cov=theta_cov,
        precision_stat=float(total_n * max_eigenvalue(theta_cov)),
    )


def combined_confidence_set(combined: CombinedResult, d1: float) -> ConfidenceEllipsoid:
    """Fixed-size confidence ellipsoid of the combined estimate (max axis ``2 * d1``)."""
    if not (math.isfinite(combined.precision_stat) and combined.precision_stat > 0):
        raise SingularInformationError(
            f"precision statistic {combined.precision_stat} unusable for a confidence set"
        )
    threshold = combined.total_n * d1 * d1 / combined.precision_stat
    return ConfidenceEllipsoid(
        center=combined.theta, shape=combined.theta_cov, threshold=threshold
    )


def confidence_set_contains(combined: CombinedResult, z, d1: float) -> bool:
    """Membership of ``z`` in the combined confidence set (boundary included)."""
    return combined_confidence_set(combined, d1).contains(z)


def wald_statistic(combined: CombinedResult, theta0) -> float:
    """Wald quadratic form of the combined estimate against ``theta0``.

    Asymptotically chi-square with ``p0`` degrees of freedom.
    """
    diff = np.asarray(theta0, dtype=np.float64).reshape(-1) - combined.theta
    solved, singular = solve_spd(combined.theta_cov, diff)
    if singular:
        raise SingularInformationError("combined covariance is singular")
    return float(diff @ solved)


def efficiency_ratio(combined: CombinedResult, true_cov_blocks, d1: float, a_sq: float) -> dict:
    """First-order efficiency diagnostics of the realized total sample size.

    ``true_cov_blocks`` are the population shared-coefficient covariance
    blocks (inverse information per observation) of each site; the ratio
    ``d1^2 * total_n / (a_sq * mu)`` tends to 1 as ``d1`` shrinks, where
    ``mu`` is the largest eigenvalue of the weight-mixed block.
    """
    blocks = [np.asarray(b, dtype=np.float64) for b in true_cov_blocks]
    if len(blocks) != combined.weights.shape[0]:
        raise ValueError("need one true covariance block per site")
    mixed = sum(w * b for w, b in zip(combined.weights, blocks))
    mu = max_eigenvalue(mixed)
    ratio = d1 * d1 * combined.total_n / (a_sq * mu)
    return {"mu": float(mu), "ratio": float(ratio)}


class FederatedSequentialEstimator(BaseEstimator):
    """Federated sequential estimation across site-local candidate pools.

    ``fit(pools)`` takes a sequence of ``(X, y)`` pairs, runs the sequential
    procedure on each with its share of the chi-square budget, and combines
    the estimates with realized sample-size weights.

    Parameters
    ----------
    d1, d2 : float
        Estimation-precision and prediction-precision targets.
    alpha : float
        Joint confidence level ``1 - alpha``.
    common_indices : sequence of int or None
        Positions of the shared coefficients inside each site's coefficient
        vector (identical across sites); all coefficients when None.
    budget_weights : sequence of float or None
        Relative chi-square budget shares, equal when None.
    sampler : "random" or "a_optimal"
    criterion : "auc" or "mse"

    Attributes
    ----------
    site_results_ : list of SiteResult
    combined_ : CombinedResult
    theta_ : ndarray of shape (p0,)
    theta_cov_ : ndarray of shape (p0, p0)
    n_total_ : int
    weights_ : ndarray of shape (M,)
    stopping_times_ : ndarray of shape (M,)
    """

    def __init__(
        self,
        d1=0.2,
        d2=0.05,
        alpha=0.05,
        family="logistic",
        common_indices=None,
        budget_weights=None,
        sampler="random",
        criterion="auc",
        n0=None,
        max_steps=None,
        tie_half=False,
        variance_method="hanley-mcneil",
        refresh_every=256,
        record_trace=False,
        random_state=None,
    ):
        self.d1 = d1
        self.d2 = d2
        self.alpha = alpha
        self.family = family
        self.common_indices = common_indices
        self.budget_weights = budget_weights
        self.sampler = sampler
        self.criterion = criterion
        self.n0 = n0
        self.max_steps = max_steps
        self.tie_half = tie_half
        self.variance_method = variance_method
        self.refresh_every = refresh_every
        self.record_trace = record_trace
        self.random_state = random_state

    def fit(self, pools, y=None):
        """Fit on a sequence of per-site ``(X, y)`` candidate pools."""
        pools = [(check_design_matrix(X), y_site) for X, y_site in pools]
        n_sites = len(pools)
        if n_sites < 1:
            raise ValueError("need at least one site pool")
        selector = resolve_selector(self.common_indices, pools[0][0].shape[1])
        plan = FederationPlan(
            n_sites=n_sites,
            p0=selector.p0,
            alpha=self.alpha,
            budget_weights=tuple(self.budget_weights) if self.budget_weights else None,
        )
        budgets = plan.site_budgets()
        seeds = np.random.SeedSequence(self.random_state).spawn(n_sites)
        results = []
        for (X, y_site), budget_sq, seed in zip(pools, budgets, seeds):
            config = SiteConfig(
                d1=self.d1,
                d2=self.d2,
                budget_sq=float(budget_sq),
                alpha=self.alpha,
                family=self.family,
                selector=resolve_selector(self.common_indices, X.shape[1]),
                sampler=self.sampler,
                criterion=self.criterion,
                n0=self.n0,
                max_steps=self.max_steps,
                tie_half=self.tie_half,
                variance_method=self.variance_method,
                refresh_every=self.refresh_every,
                record_trace=self.record_trace,
            )
            rng = np.random.Generator(np.random.Philox(seed))
            results.append(run_site(X, y_site, config, rng))
        combined = combine(results)
        self.plan_ = plan
        self.site_results_ = results
        self.combined_ = combined
        self.theta_ = combined.theta
        self.theta_cov_ = combined.theta_cov
        self.n_total_ = combined.total_n
        self.weights_ = combined.weights
        self.stopping_times_ = np.array([r.stopping_time for r in results])
        return self

    def confidence_set(self) -> ConfidenceEllipsoid:
        self._check_fitted()
        return combined_confidence_set(self.combined_, self.d1)

    def contains(self, theta0) -> bool:
        self._check_fitted()
        return confidence_set_contains(self.combined_, theta0, self.d1)

    def wald_statistic(self, theta0) -> float:
        self._check_fitted()
        return wald_statistic(self.combined_, theta0)

    def _check_fitted(self):
        if not hasattr(self, "combined_"):
            raise AttributeError("estimator is not fitted; call fit first")
