"""Per-site sequential recruitment with a dual stopping rule.

A site starts from a small random sample, then recruits one observation at
a time (uniformly or by A-optimality), refitting the GLM after every
recruit.  Recruitment stops at the first sample size ``k >= n0`` where both

* the estimation-precision statistic ``lambda_max(k * B_k)`` — with ``B_k``
  the shared-coefficient block of the inverse information — falls below
  ``d1^2 * k / budget_sq``, and
* the prediction-criterion variance (AUC variance, or MSE-estimator
  variance for linear models) falls below ``(d2 / z_{1-alpha/2})^2``,

both inequalities inclusive.  The first condition pins the confidence-set
geometry (maximum axis ``2 * d1``), the second the prediction precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .confidence import ConfidenceEllipsoid
from .errors import EstimationError, InitInfeasibleError, SingularInformationError
from .families import LinearFamily, resolve_family
from .glm import CommonSelector, common_cov_block, fit_mqle, resolve_selector
from .linalg import max_eigenvalue
from .metrics import auc_with_variance, mse_criterion
from .quantiles import chi2_quantile, normal_quantile
from .samplers import CandidatePool, make_sampler, select_random
from .validation import check_binary, check_design_matrix, check_response

_SAMPLERS = ("random", "a_optimal")
_CRITERIA = ("auc", "mse")
_VARIANCE_METHODS = ("hanley-mcneil", "delong")


@dataclass(frozen=True)
class SiteConfig:
    """Configuration of one site's sequential procedure.

    ``budget_sq`` is the site's share of the squared chi-square budget; for
    a single standalone site it equals the full ``chi2_quantile(p0, 1-alpha)``.
    ``n0`` defaults to ``max(10 * p, 30)`` at run time.
    """

    d1: float
    d2: float
    budget_sq: float
    alpha: float = 0.05
    family: object = "logistic"
    selector: object = None
    sampler: str = "random"
    criterion: str = "auc"
    n0: Optional[int] = None
    max_steps: Optional[int] = None
    tie_half: bool = False
    variance_method: str = "hanley-mcneil"
    refresh_every: int = 256
    estimate_dispersion: bool = True
    record_trace: bool = False
    debug_checks: bool = False
    tol: float = 1e-8
    max_iter: int = 100
    init_retries: int = 50
    redraw_limit: int = 100

    def __post_init__(self):
        if not self.d1 > 0:
            raise ValueError(f"d1 must be positive, got {self.d1}")
        if not self.d2 > 0:
            raise ValueError(f"d2 must be positive, got {self.d2}")
        if not self.budget_sq > 0:
            raise ValueError(f"budget_sq must be positive, got {self.budget_sq}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sampler not in _SAMPLERS:
            raise ValueError(f"sampler must be one of {_SAMPLERS}, got {self.sampler!r}")
        if self.criterion not in _CRITERIA:
            raise ValueError(f"criterion must be one of {_CRITERIA}, got {self.criterion!r}")
        if self.variance_method not in _VARIANCE_METHODS:
            raise ValueError(
                f"variance_method must be one of {_VARIANCE_METHODS}, "
                f"got {self.variance_method!r}"
            )
        if self.n0 is not None and self.n0 < 1:
            raise ValueError(f"n0 must be positive, got {self.n0}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


def resolve_n0(config: SiteConfig, p: int) -> int:
    n0 = config.n0 if config.n0 is not None else max(10 * p, 30)
    if n0 < p + 1:
        raise ValueError(f"n0={n0} too small for {p} coefficients; need n0 >= p + 1")
    return n0


@dataclass
class SiteState:
    """Snapshot of the procedure after the fit at sample size ``k``."""

    k: int
    n0: int
    beta: np.ndarray
    info: np.ndarray
    precision_stat: float
    criterion_variance: float
    fit_ok: bool = True
    info_singular: bool = False


@dataclass(frozen=True)
class TraceStep:
    step: int
    k: int
    precision_stat: float
    criterion_variance: float
    stopped: bool


@dataclass(frozen=True)
class SiteResult:
    """Everything the stopped procedure hands to the combiner."""

    stopping_time: int
    beta: np.ndarray
    theta: np.ndarray
    theta_cov: np.ndarray
    precision_stat: float
    criterion: str
    criterion_value: float
    criterion_variance: float
    exhausted: bool
    converged: bool
    singular: bool
    n_initial: int
    indices: np.ndarray
    trace: Optional[tuple] = None

    @property
    def auc(self) -> Optional[float]:
        return self.criterion_value if self.criterion == "auc" else None


def check_stop(state: SiteState, config: SiteConfig) -> bool:
    """Dual stopping rule; inclusive inequalities, conservative on failures.

    A singular information matrix or an unconverged fit never stops: both
    mean the precision statistic cannot be trusted yet.
    """
    if state.k < state.n0:
        return False
    if not state.fit_ok or state.info_singular:
        return False
    if not (math.isfinite(state.precision_stat) and math.isfinite(state.criterion_variance)):
        return False
    precision_bound = config.d1 * config.d1 * state.k / config.budget_sq
    a_p = normal_quantile(1.0 - 0.5 * config.alpha)
    criterion_bound = (config.d2 / a_p) ** 2
    return (
        state.precision_stat <= precision_bound
        and state.criterion_variance <= criterion_bound
    )


def _criterion_values(scores, y, config: SiteConfig):
    if config.criterion == "auc":
        res = auc_with_variance(
            scores, y, tie_half=config.tie_half, variance_method=config.variance_method
        )
        return res.auc, res.variance
    res = mse_criterion(scores, y)
    return res.mse, res.variance


def run_site(X, y, config: SiteConfig, rng: np.random.Generator) -> SiteResult:
    """Run one site's sequential procedure over the candidate pool ``(X, y)``.

    Returns a :class:`SiteResult` at the stopping time, or with
    ``exhausted=True`` when the pool (or ``max_steps``) ran out first.
    Raises :class:`InitInfeasibleError` when no usable initial sample or
    initial fit can be produced.
    """
    X = check_design_matrix(X)
    family = resolve_family(config.family)
    if config.criterion == "auc":
        y = check_binary(y)
    y = check_response(y, X.shape[0])
    n, p = X.shape
    selector = resolve_selector(config.selector, p)
    n0 = resolve_n0(config, p)
    if n0 > n:
        raise InitInfeasibleError(f"pool of {n} rows cannot seed an initial sample of {n0}")

    pool = CandidatePool(X)
    bufX = np.empty((n, p))
    bufy = np.empty(n)
    indices = np.empty(n, dtype=np.intp)

    def recruit_random() -> None:
        k = pool.n_active
        j = select_random(pool, rng)
        indices[k] = j
        bufX[k] = X[j]
        bufy[k] = y[j]

    for _ in range(n0):
        recruit_random()

    if config.criterion == "auc":
        redraws = 0
        while not (np.any(bufy[:n0] == 1.0) and np.any(bufy[:n0] == 0.0)):
            if redraws >= config.redraw_limit or pool.n_inactive == 0:
                raise InitInfeasibleError(
                    f"could not draw both classes into the initial sample "
                    f"after {redraws} redraws"
                )
            last = indices[n0 - 1]
            pool.mark_inactive(int(last))
            j = select_random(pool, rng)
            indices[n0 - 1] = j
            bufX[n0 - 1] = X[j]
            bufy[n0 - 1] = y[j]
            redraws += 1

    def refit(k: int, init):
        fit = fit_mqle(
            bufX[:k], bufy[:k], family, init=init, tol=config.tol, max_iter=config.max_iter
        )
        if init is not None and not fit.converged:
            # a warm start left saturated by an earlier quasi-separated
            # stretch can trap the scoring iteration; restarting from zero
            # recovers whenever the current data are well behaved
            cold = fit_mqle(
                bufX[:k], bufy[:k], family, tol=config.tol, max_iter=config.max_iter
            )
            if cold.converged or cold.score_norm < fit.score_norm:
                fit = cold
        run_family = family
        info = fit.info
        if family.kind == "linear" and config.estimate_dispersion and k > p:
            resid = bufy[:k] - bufX[:k] @ fit.beta
            sigma_sq = max(float(resid @ resid) / (k - p), 1e-12)
            # info scales as 1 / sigma_sq for the linear family
            info = info * (family.sigma_sq / sigma_sq)
            run_family = LinearFamily(sigma_sq)
        return fit, info, run_family

    k = pool.n_active
    fit, info, run_family = refit(k, None)
    retries = 0
    while (not fit.converged or fit.singular) and retries < config.init_retries:
        if pool.n_inactive == 0:
            raise InitInfeasibleError("pool exhausted while retrying the initial fit")
        recruit_random()
        k = pool.n_active
        fit, info, run_family = refit(k, None)
        retries += 1
    if not fit.converged or fit.singular:
        raise InitInfeasibleError(
            f"initial fit failed after {retries} retries "
            f"(converged={fit.converged}, singular={fit.singular})"
        )

    sampler = make_sampler(config.sampler, config.refresh_every)
    sampler.start(info)

    n_initial = k
    max_k = n if config.max_steps is None else min(n, config.max_steps)
    trace = [] if config.record_trace else None
    step = 0
    exhausted = False

    while True:
        step += 1
        block, block_singular = common_cov_block(info, selector)
        precision_stat = k * max_eigenvalue(block)
        scores = family.mean(bufX[:k] @ fit.beta)
        crit_value, crit_var = _criterion_values(scores, bufy[:k], config)
        state = SiteState(
            k=k,
            n0=n0,
            beta=fit.beta,
            info=info,
            precision_stat=precision_stat,
            criterion_variance=crit_var,
            fit_ok=fit.converged,
            info_singular=fit.singular or block_singular,
        )
        stopped = check_stop(state, config)
        if trace is not None:
            trace.append(
                TraceStep(
                    step=step,
                    k=k,
                    precision_stat=precision_stat,
                    criterion_variance=crit_var,
                    stopped=stopped,
                )
            )
        if stopped:
            break
        if k >= max_k or pool.n_inactive == 0:
            exhausted = True
            break

        beta_at_selection = fit.beta
        j = sampler.select(pool, beta_at_selection, run_family, rng)
        indices[k] = j
        bufX[k] = X[j]
        bufy[k] = y[j]
        k += 1
        fit, info, run_family = refit(k, beta_at_selection)
        weight = float(
            np.asarray(run_family.info_weight(np.asarray(X[j] @ beta_at_selection)))
        )
        sampler.observe(X[j], weight, info)

        if config.debug_checks and k % 50 == 0:
            cold, _, _ = refit(k, None)
            if cold.converged and fit.converged:
                gap = float(np.abs(cold.beta - fit.beta).max())
                if gap > 1e-6:
                    raise EstimationError(
                        f"warm and cold fits disagree at k={k}: max gap {gap:.3e}"
                    )

    theta = selector.select(fit.beta).astype(np.float64)
    theta_cov, cov_singular = common_cov_block(info, selector)
    return SiteResult(
        stopping_time=k,
        beta=fit.beta,
        theta=theta,
        theta_cov=theta_cov,
        precision_stat=float(k * max_eigenvalue(theta_cov)),
        criterion=config.criterion,
        criterion_value=float(crit_value),
        criterion_variance=float(crit_var),
        exhausted=exhausted,
        converged=bool(fit.converged),
        singular=bool(fit.singular or cov_singular),
        n_initial=int(n_initial),
        indices=indices[:k].copy(),
        trace=tuple(trace) if trace is not None else None,
    )


def site_confidence_set(result: SiteResult, d1: float) -> ConfidenceEllipsoid:
    """Fixed-size confidence set of one site's shared-coefficient estimate.

    The maximum axis length is ``2 * d1`` by construction.
    """
    if not (math.isfinite(result.precision_stat) and result.precision_stat > 0):
        raise SingularInformationError(
            f"precision statistic {result.precision_stat} unusable for a confidence set"
        )
    threshold = result.stopping_time * d1 * d1 / result.precision_stat
    return ConfidenceEllipsoid(
        center=result.theta, shape=result.theta_cov, threshold=threshold
    )


class SequentialSiteEstimator(BaseEstimator):
    """Single-site sequential estimator with the dual stopping rule.

    ``fit(X, y)`` treats ``(X, y)`` as the recruitment pool.  When
    ``budget_sq`` is omitted the full chi-square budget
    ``chi2_quantile(p0, 1 - alpha)`` is used, which is the standalone
    single-site procedure.

    Attributes
    ----------
    result_ : SiteResult
    stopping_time_ : int
    coef_ : ndarray of shape (p,)
    theta_ : ndarray of shape (p0,)
    theta_cov_ : ndarray of shape (p0, p0)
    auc_ : float or None
    exhausted_ : bool
    """

    def __init__(
        self,
        d1=0.2,
        d2=0.05,
        alpha=0.05,
        budget_sq=None,
        family="logistic",
        common_indices=None,
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
        self.budget_sq = budget_sq
        self.family = family
        self.common_indices = common_indices
        self.sampler = sampler
        self.criterion = criterion
        self.n0 = n0
        self.max_steps = max_steps
        self.tie_half = tie_half
        self.variance_method = variance_method
        self.refresh_every = refresh_every
        self.record_trace = record_trace
        self.random_state = random_state

    def _site_config(self, p: int) -> SiteConfig:
        selector = resolve_selector(self.common_indices, p)
        budget_sq = self.budget_sq
        if budget_sq is None:
            budget_sq = chi2_quantile(selector.p0, 1.0 - self.alpha)
        return SiteConfig(
            d1=self.d1,
            d2=self.d2,
            budget_sq=budget_sq,
            alpha=self.alpha,
            family=self.family,
            selector=selector,
            sampler=self.sampler,
            criterion=self.criterion,
            n0=self.n0,
            max_steps=self.max_steps,
            tie_half=self.tie_half,
            variance_method=self.variance_method,
            refresh_every=self.refresh_every,
            record_trace=self.record_trace,
        )

    def fit(self, X, y):
        X = check_design_matrix(X)
        rng = np.random.default_rng(self.random_state)
        config = self._site_config(X.shape[1])
        result = run_site(X, y, config, rng)
        self.result_ = result
        self.config_ = config
        self.stopping_time_ = result.stopping_time
        self.coef_ = result.beta
        self.theta_ = result.theta
        self.theta_cov_ = result.theta_cov
        self.precision_stat_ = result.precision_stat
        self.auc_ = result.auc
        self.criterion_variance_ = result.criterion_variance
        self.exhausted_ = result.exhausted
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise AttributeError("estimator is not fitted; call fit first")
        family = resolve_family(self.family)
        X = check_design_matrix(X)
        return family.mean(X @ self.coef_)

    def confidence_set(self) -> ConfidenceEllipsoid:
        if not hasattr(self, "result_"):
            raise AttributeError("estimator is not fitted; call fit first")
        return site_confidence_set(self.result_, self.d1)
