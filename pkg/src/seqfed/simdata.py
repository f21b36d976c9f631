"""Synthetic multi-site logistic designs for the simulation harness.

Five sites share the coefficient block ``theta = (2.0, 1.0)`` that sits
after the intercept; site-specific nuisance coefficients and covariate
scales differ by design:

* ``beta_setup``: "B1" gives every site the vector (-2, 2, 1, 1, 0);
  "B2" varies intercepts and nuisance blocks across sites (site 3 carries
  one extra covariate).
* ``proportions``: "p1" splits the chi-square budget equally; "p2" gives
  site 5 six tenths of it.
* ``covariates``: "h1" draws all covariates as standard normal; "h2"
  inflates the variance of the site-specific covariates at sites 2, 4, 5.

Covariates are independent centered normals; the design matrix carries an
explicit leading intercept column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermitenorm

from .families import LogisticFamily
from .glm import CommonSelector
from .linalg import inv_spd

THETA = np.array([2.0, 1.0])
COMMON_INDICES = (1, 2)

_B1_BETA = (-2.0, 2.0, 1.0, 1.0, 0.0)
_B2_BETAS = {
    1: (-2.0, 2.0, 1.0, 1.0, 0.0),
    2: (-2.0, 2.0, 1.0, 1.0, 0.5),
    3: (-2.0, 2.0, 1.0, 1.0, 0.5, 0.0),
    4: (-1.5, 2.0, 1.0, 1.0, 0.0),
    5: (-2.5, 2.0, 1.0, 1.0, 1.0),
}
# variance of the two site-specific covariates under "h2" (others stay 1)
_H2_SPECIFIC_VAR = {2: 4.0, 4: 2.0, 5: 4.0}

_BETA_SETUPS = ("B1", "B2")
_PROPORTIONS = ("p1", "p2")
_COVARIATES = ("h1", "h2")


@dataclass(frozen=True)
class SimDesign:
    """One cell of the simulation design grid."""

    beta_setup: str = "B1"
    proportions: str = "p1"
    covariates: str = "h1"
    n_sites: int = 5
    pool_size: int = 20000

    def __post_init__(self):
        if self.beta_setup not in _BETA_SETUPS:
            raise ValueError(f"beta_setup must be one of {_BETA_SETUPS}")
        if self.proportions not in _PROPORTIONS:
            raise ValueError(f"proportions must be one of {_PROPORTIONS}")
        if self.covariates not in _COVARIATES:
            raise ValueError(f"covariates must be one of {_COVARIATES}")
        if self.n_sites < 1:
            raise ValueError("n_sites must be at least 1")
        fixed_five = self.beta_setup == "B2" or self.proportions == "p2"
        if fixed_five and self.n_sites != 5:
            raise ValueError(
                f"{self.beta_setup}/{self.proportions} is defined for 5 sites, "
                f"got {self.n_sites}"
            )
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        # the shared block must be theta at the post-intercept positions
        for site in range(1, self.n_sites + 1):
            beta = self.site_beta(site)
            if not np.array_equal(beta[list(COMMON_INDICES)], THETA):
                raise AssertionError(f"site {site} does not embed the shared block")

    def site_beta(self, site: int) -> np.ndarray:
        """Full coefficient vector of ``site`` (1-based), intercept first."""
        self._check_site(site)
        if self.beta_setup == "B1":
            return np.array(_B1_BETA)
        return np.array(_B2_BETAS[site])

    def site_scales(self, site: int) -> np.ndarray:
        """Variances of the covariates of ``site`` (intercept excluded)."""
        self._check_site(site)
        q = self.site_beta(site).shape[0] - 1
        scales = np.ones(q)
        if self.covariates == "h2" and site in _H2_SPECIFIC_VAR:
            scales[2:4] = _H2_SPECIFIC_VAR[site]
        return scales

    def selector(self) -> CommonSelector:
        return CommonSelector(COMMON_INDICES)

    def budget_weights(self) -> np.ndarray:
        if self.proportions == "p1":
            return np.ones(self.n_sites)
        return np.array([1.0, 1.0, 1.0, 1.0, 6.0])

    def _check_site(self, site: int) -> None:
        if not 1 <= site <= self.n_sites:
            raise ValueError(f"site must lie in 1..{self.n_sites}, got {site}")


def gen_covariates(design: SimDesign, site: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Design matrix of ``n`` pool rows: intercept column, then scaled normals."""
    scales = design.site_scales(site)
    X = np.empty((n, scales.shape[0] + 1))
    X[:, 0] = 1.0
    X[:, 1:] = rng.standard_normal((n, scales.shape[0])) * np.sqrt(scales)
    return X


def gen_responses(X, beta, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli responses with logistic means at ``X @ beta``."""
    X = np.asarray(X, dtype=np.float64)
    means = LogisticFamily().mean(X @ np.asarray(beta, dtype=np.float64))
    return (rng.random(X.shape[0]) < means).astype(np.float64)


def make_pool(design: SimDesign, site: int, rng: np.random.Generator):
    """One site's candidate pool ``(X, y)``."""
    X = gen_covariates(design, site, design.pool_size, rng)
    y = gen_responses(X, design.site_beta(site), rng)
    return X, y


def logistic_information_gaussian(beta, scales, nodes: int = 201) -> np.ndarray:
    """Population per-observation information of a logistic model.

    Covariates are independent centered normals with variances ``scales``
    and an intercept column in front.  The two-dimensional integral reduces
    to one-dimensional Gauss-Hermite sums over the linear predictor because
    the covariates are jointly Gaussian:

        E[g(eta) x x'] splits into E[g], E[g (eta - b0)], E[g (eta - b0)^2]

    with ``g`` the logistic information weight.
    """
    beta = np.asarray(beta, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    b0, slopes = beta[0], beta[1:]
    if slopes.shape != scales.shape:
        raise ValueError("scales must cover every covariate (intercept excluded)")
    var_eta = float(np.sum(slopes * slopes * scales))
    t, w = roots_hermitenorm(nodes)
    w = w / w.sum()
    eta = b0 + np.sqrt(var_eta) * t
    g = LogisticFamily().info_weight(eta)
    m0 = float(np.sum(w * g))
    m1 = float(np.sum(w * g * (eta - b0)))
    m2 = float(np.sum(w * g * (eta - b0) ** 2))
    q = slopes.shape[0]
    if var_eta > 0:
        gamma = scales * slopes / var_eta
    else:
        gamma = np.zeros(q)
    info = np.empty((q + 1, q + 1))
    info[0, 0] = m0
    info[0, 1:] = info[1:, 0] = gamma * m1
    cond_cov = np.diag(scales) - var_eta * np.outer(gamma, gamma)
    info[1:, 1:] = cond_cov * m0 + np.outer(gamma, gamma) * m2
    return info


def true_information(design: SimDesign, site: int, nodes: int = 201) -> np.ndarray:
    """Population per-observation information matrix of one site."""
    return logistic_information_gaussian(
        design.site_beta(site), design.site_scales(site), nodes=nodes
    )


def true_common_cov_block(design: SimDesign, site: int, nodes: int = 201) -> np.ndarray:
    """Shared-coefficient block of the inverse population information."""
    inv, singular = inv_spd(true_information(design, site, nodes=nodes))
    if singular:
        raise ValueError(f"population information of site {site} is singular")
    return design.selector().block(inv)


def dump_pools(path, pools, site_labels=None) -> None:
    """Write pools to CSV with columns ``y, x1..xp, site``.

    ``pools`` is a sequence of ``(X, y)``; ``X`` includes the intercept
    column, which is not written.  Sites with fewer covariates leave the
    extra cells empty.
    """
    import csv

    if site_labels is None:
        site_labels = [str(i + 1) for i in range(len(pools))]
    max_q = max(X.shape[1] - 1 for X, _ in pools)
    header = ["y"] + [f"x{i + 1}" for i in range(max_q)] + ["site"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for label, (X, y) in zip(site_labels, pools):
            q = X.shape[1] - 1
            for i in range(X.shape[0]):
                row = [repr(float(y[i]))]
                row += [repr(float(v)) for v in X[i, 1:]]
                row += [""] * (max_q - q)
                row.append(label)
                writer.writerow(row)
