"""Response families: mean, mean derivative, variance and weight functions.

A family bundles the link-scale functions the quasi-likelihood equations
need.  Only the logistic (Bernoulli, logit link) and linear-Gaussian
families are shipped; anything exposing the same methods works as a custom
family.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

# Fitted probabilities are clamped away from 0/1 before entering any
# variance or weight computation.
PROB_CLAMP = 1e-12


class FamilyValues(NamedTuple):
    mean: np.ndarray
    mean_deriv: np.ndarray
    variance: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True)
class LogisticFamily:
    """Bernoulli responses with the canonical logit link.

    The mean derivative and the variance function coincide, which is what
    collapses the quasi-score to ``sum((y - mean) * x)``.
    """

    kind: str = "logistic"

    def mean(self, t):
        return expit(t)

    def _clamped_mean(self, t):
        return np.clip(expit(t), PROB_CLAMP, 1.0 - PROB_CLAMP)

    def mean_deriv(self, t):
        p = self._clamped_mean(t)
        return p * (1.0 - p)

    def variance(self, t):
        p = self._clamped_mean(t)
        return p * (1.0 - p)

    def weight(self, t):
        return 1.0 / self.variance(t)

    def info_weight(self, t):
        """Weight ``mean_deriv(t)**2 / variance(t)`` in the information matrix."""
        p = self._clamped_mean(t)
        return p * (1.0 - p)


@dataclass(frozen=True)
class LinearFamily:
    """Gaussian responses with the identity link and constant variance."""

    sigma_sq: float = 1.0
    kind: str = "linear"

    def __post_init__(self):
        if not self.sigma_sq > 0.0:
            raise ValueError(f"sigma_sq must be positive, got {self.sigma_sq}")

    def mean(self, t):
        return np.asarray(t, dtype=np.float64)

    def mean_deriv(self, t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def variance(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), self.sigma_sq)

    def weight(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), 1.0 / self.sigma_sq)

    def info_weight(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), 1.0 / self.sigma_sq)


def evaluate_family(family, t) -> FamilyValues:
    """Evaluate mean, mean derivative, variance and weight at linear predictor ``t``.

    The reported mean is saturation-safe: for the logistic family it is the
    clamped probability actually used in the weights, never exactly 0 or 1.
    """
    t = np.asarray(t, dtype=np.float64)
    mean = np.asarray(family.mean(t))
    clamped = getattr(family, "_clamped_mean", None)
    if clamped is not None:
        mean = np.asarray(clamped(t))
    return FamilyValues(
        mean=mean,
        mean_deriv=np.asarray(family.mean_deriv(t)),
        variance=np.asarray(family.variance(t)),
        weight=np.asarray(family.weight(t)),
    )


def resolve_family(family):
    """Map a family name or instance to a family instance."""
    if isinstance(family, str):
        if family == "logistic":
            return LogisticFamily()
        if family == "linear":
            return LinearFamily()
        raise ValueError(f"unknown family {family!r}, expected 'logistic' or 'linear'")
    for attr in ("mean", "mean_deriv", "variance", "weight", "info_weight", "kind"):
        if not hasattr(family, attr):
            raise TypeError(f"family object lacks required attribute {attr!r}")
    return family
