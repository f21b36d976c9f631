"""Quasi-likelihood GLM estimation by Fisher scoring.

The solver targets the quasi-score equations

    sum_i mean_deriv(t_i) * weight(t_i) * (y_i - mean(t_i)) * x_i = 0,
    t_i = x_i' beta,

with the un-normalized quasi-information ``sum_i info_weight(t_i) x_i x_i'``
as the scoring matrix.  For the logistic family the score collapses to
``sum_i (y_i - mean(t_i)) x_i`` and the information weight to
``mean(t)(1 - mean(t))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .families import resolve_family
from .linalg import solve_spd
from .validation import (
    check_binary,
    check_design_matrix,
    check_response,
    require_both_classes,
)

# Threshold on |x'beta| beyond which a non-converged logistic fit is taken
# as a sign of (quasi-)complete separation.
SEPARATION_PREDICTOR_BOUND = 30.0

# Maximum number of times a scoring step is halved when the score norm
# fails to decrease.
MAX_STEP_HALVINGS = 20


@dataclass(frozen=True)
class CommonSelector:
    """Index selector for the parameter block shared across sites.

    ``indices`` are positions into the full per-site coefficient vector,
    strictly increasing.  ``select`` pulls the shared sub-vector out of a
    coefficient vector; ``block`` pulls the matching sub-matrix out of a
    square matrix.
    """

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("selector needs at least one index")
        if any(i < 0 for i in idx):
            raise ValueError(f"selector indices must be non-negative, got {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"selector indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def p0(self) -> int:
        return len(self.indices)

    def validate_dim(self, p: int) -> None:
        if self.indices[-1] >= p:
            raise ValueError(
                f"selector index {self.indices[-1]} out of range for {p} coefficients"
            )

    def select(self, v) -> np.ndarray:
        v = np.asarray(v)
        return v[list(self.indices)]

    def block(self, m) -> np.ndarray:
        m = np.asarray(m)
        idx = np.asarray(self.indices)
        return m[np.ix_(idx, idx)]


def resolve_selector(selector, p: int) -> CommonSelector:
    """Coerce ``selector`` (CommonSelector, index iterable or None) for ``p`` coefficients."""
    if selector is None:
        selector = CommonSelector(tuple(range(p)))
    elif not isinstance(selector, CommonSelector):
        selector = CommonSelector(tuple(selector))
    selector.validate_dim(p)
    return selector


@dataclass(frozen=True)
class FitResult:
    """Outcome of one quasi-likelihood fit.

    ``info`` is the un-normalized quasi-information evaluated at ``beta``.
    ``singular`` records that some scoring step needed the pseudo-inverse
    fallback; ``separation_suspected`` that the fit did not converge while
    some linear predictor exceeded ``SEPARATION_PREDICTOR_BOUND``.
    """

    beta: np.ndarray
    info: np.ndarray
    converged: bool
    n_iter: int
    score_norm: float
    singular: bool
    separation_suspected: bool


def quasi_score(X, y, beta, family="logistic") -> np.ndarray:
    """Quasi-score vector at ``beta``."""
    family = resolve_family(family)
    X = check_design_matrix(X)
    y = check_response(y, X.shape[0])
    eta = X @ np.asarray(beta, dtype=np.float64)
    resid = family.mean_deriv(eta) * family.weight(eta) * (y - family.mean(eta))
    return X.T @ resid


def information_matrix(X, beta, family="logistic") -> np.ndarray:
    """Un-normalized quasi-information ``sum_i info_weight(t_i) x_i x_i'`` at ``beta``."""
    family = resolve_family(family)
    X = check_design_matrix(X)
    eta = X @ np.asarray(beta, dtype=np.float64)
    iw = family.info_weight(eta)
    h = (X * iw[:, None]).T @ X
    return 0.5 * (h + h.T)


def common_cov_block(info, selector: CommonSelector) -> tuple[np.ndarray, bool]:
    """Sub-block of the inverse information for the selected coefficients.

    Returns ``(block, singular)``; the block equals the selected rows and
    columns of ``inv(info)`` and is the un-normalized covariance estimate of
    the shared coefficient block.
    """
    info = np.asarray(info, dtype=np.float64)
    selector.validate_dim(info.shape[0])
    cols = np.zeros((info.shape[0], selector.p0))
    for j, idx in enumerate(selector.indices):
        cols[idx, j] = 1.0
    solved, singular = solve_spd(info, cols)
    block = solved[list(selector.indices), :]
    return 0.5 * (block + block.T), singular


def fit_mqle(
    X,
    y,
    family="logistic",
    init=None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> FitResult:
    """Maximize the quasi-likelihood by Fisher scoring with step-halving.

    Parameters
    ----------
    X : array-like of shape (n, p)
        Design matrix (include the intercept column explicitly).
    y : array-like of shape (n,)
        Responses; 0/1 for the logistic family.
    family : str or family object
        Response family, by default the logistic one.
    init : array-like of shape (p,), optional
        Starting value; zeros when omitted.  Warm starts from a previous
        fit converge in one or two iterations.
    tol : float
        Convergence threshold on the max-norm of the quasi-score.
    max_iter : int
        Iteration cap; hitting it leaves ``converged=False`` and returns the
        best iterate found.

    Returns
    -------
    FitResult
        The information matrix is re-evaluated at the returned ``beta``.
    """
    family = resolve_family(family)
    X = check_design_matrix(X)
    y = check_response(y, X.shape[0])
    if family.kind == "logistic":
        check_binary(y)
        require_both_classes(y)
    n, p = X.shape
    if init is None:
        beta = np.zeros(p)
    else:
        beta = np.array(init, dtype=np.float64).reshape(-1)
        if beta.shape[0] != p:
            raise ValueError(f"init has length {beta.shape[0]}, expected {p}")

    def score_state(b):
        eta = X @ b
        resid = family.mean_deriv(eta) * family.weight(eta) * (y - family.mean(eta))
        s = X.T @ resid
        norm = float(np.abs(s).max()) if np.all(np.isfinite(s)) else np.inf
        return s, eta, norm

    score, eta, norm = score_state(beta)
    singular = False
    n_iter = 0
    converged = norm <= tol
    while not converged and n_iter < max_iter:
        iw = family.info_weight(eta)
        h = (X * iw[:, None]).T @ X
        step, step_singular = solve_spd(h, score)
        singular = singular or step_singular
        scale = 1.0
        improved = False
        for _ in range(MAX_STEP_HALVINGS + 1):
            cand = beta + scale * step
            cand_score, cand_eta, cand_norm = score_state(cand)
            if cand_norm < norm:
                beta, score, eta, norm = cand, cand_score, cand_eta, cand_norm
                improved = True
                break
            scale *= 0.5
        n_iter += 1
        if not improved:
            break
        converged = norm <= tol

    separation = bool(
        not converged and np.any(np.abs(X @ beta) > SEPARATION_PREDICTOR_BOUND)
    )
    return FitResult(
        beta=beta,
        info=information_matrix(X, beta, family),
        converged=converged,
        n_iter=n_iter,
        score_norm=norm,
        singular=singular,
        separation_suspected=separation,
    )


class QuasiLikelihoodGLM(BaseEstimator):
    """GLM estimator solving the quasi-score equations.

    Parameters
    ----------
    family : str or family object, default "logistic"
    tol : float, default 1e-8
        Convergence threshold on the score max-norm.
    max_iter : int, default 100

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
    information_ : ndarray of shape (p, p)
        Un-normalized quasi-information at ``coef_``.
    converged_ : bool
    n_iter_ : int
    score_norm_ : float
    """

    def __init__(self, family="logistic", tol=1e-8, max_iter=100):
        self.family = family
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, init=None):
        result = fit_mqle(
            X, y, family=self.family, init=init, tol=self.tol, max_iter=self.max_iter
        )
        self.result_ = result
        self.coef_ = result.beta
        self.information_ = result.info
        self.converged_ = result.converged
        self.n_iter_ = result.n_iter
        self.score_norm_ = result.score_norm
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def decision_function(self, X):
        if not hasattr(self, "coef_"):
            raise AttributeError("estimator is not fitted; call fit first")
        X = check_design_matrix(X)
        if X.shape[1] != self.coef_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} columns, expected {self.coef_.shape[0]}"
            )
        return X @ self.coef_

    def predict(self, X):
        """Predicted mean response."""
        family = resolve_family(self.family)
        return family.mean(self.decision_function(X))
