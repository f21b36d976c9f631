"""Ellipsoidal confidence sets with a fixed maximum axis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformationError
from .linalg import solve_spd


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """Ellipsoid ``{z : (z - center)' shape^{-1} (z - center) <= threshold}``.

    ``shape`` is a symmetric positive-definite scale matrix (a covariance
    estimate); axis half-lengths are ``sqrt(threshold * eig(shape))``.
    """

    center: np.ndarray
    shape: np.ndarray
    threshold: float

    def mahalanobis_sq(self, z) -> float:
        diff = np.asarray(z, dtype=np.float64).reshape(-1) - self.center
        solved, singular = solve_spd(self.shape, diff)
        if singular:
            raise SingularInformationError("ellipsoid shape matrix is singular")
        return float(diff @ solved)

    def contains(self, z) -> bool:
        """Membership test; the boundary is included."""
        return self.mahalanobis_sq(z) <= self.threshold

    def axis_lengths(self) -> np.ndarray:
        """Full axis lengths, ascending."""
        vals = np.linalg.eigvalsh(0.5 * (self.shape + self.shape.T))
        return 2.0 * np.sqrt(np.clip(vals, 0.0, None) * self.threshold)

    def max_axis_length(self) -> float:
        return float(self.axis_lengths()[-1])


def max_axis_length(ellipsoid: ConfidenceEllipsoid) -> float:
    return ellipsoid.max_axis_length()


def axis_lengths(ellipsoid: ConfidenceEllipsoid) -> np.ndarray:
    return ellipsoid.axis_lengths()
