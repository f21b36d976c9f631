"""Distribution quantiles used by the stopping rule and budget allocation."""
from __future__ import annotations

from scipy.special import gammaincinv, ndtri


def chi2_quantile(df: int, prob: float) -> float:
    """Quantile of the chi-square distribution with ``df`` degrees of freedom.

    Computed by inverting the regularized lower incomplete gamma function.
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0, 1), got {prob}")
    if df < 1:
        raise ValueError(f"df must be a positive integer, got {df}")
    return float(2.0 * gammaincinv(0.5 * df, prob))


def normal_quantile(prob: float) -> float:
    """Quantile of the standard normal distribution."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0, 1), got {prob}")
    return float(ndtri(prob))
