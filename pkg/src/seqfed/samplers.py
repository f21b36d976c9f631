"""Recruitment samplers over a finite candidate pool.

``CandidatePool`` tracks which pool rows are still available with O(1)
selection and removal.  ``select_random`` draws uniformly; the A-optimality
sampler picks the candidate minimizing the post-update trace of the inverse
information, scored through the rank-one identity

    tr((A + c x x')^{-1}) = tr(A^{-1}) - c * x' A^{-2} x / (1 + c * x' A^{-1} x)

so a full scan costs one matrix-vector product per candidate instead of a
matrix inversion.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import EmptyPoolError
from .linalg import inv_spd
from .validation import check_design_matrix

logger = logging.getLogger(__name__)

# The maintained inverse drifts as coefficient updates re-weight earlier rows;
# it is rebuilt from the current information after this many selections.
DEFAULT_REFRESH_EVERY = 256


class CandidatePool:
    """Bookkeeping for active (recruited) and inactive (available) pool rows.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Covariate rows of the site pool; the pool keeps a reference, not a
        copy.
    """

    def __init__(self, X):
        self.X = check_design_matrix(X)
        n = self.X.shape[0]
        # _order[:_n_active] holds active indices, the rest are inactive
        self._order = np.arange(n, dtype=np.intp)
        self._slot = np.arange(n, dtype=np.intp)
        self._n_active = 0

    @property
    def n_total(self) -> int:
        return self.X.shape[0]

    @property
    def n_active(self) -> int:
        return self._n_active

    @property
    def n_inactive(self) -> int:
        return self.X.shape[0] - self._n_active

    def active_indices(self) -> np.ndarray:
        return self._order[: self._n_active].copy()

    def inactive_indices(self) -> np.ndarray:
        """View of the available pool indices (arbitrary order)."""
        return self._order[self._n_active :]

    def is_active(self, index: int) -> bool:
        return self._slot[index] < self._n_active

    def _swap_slots(self, a: int, b: int) -> None:
        ia, ib = self._order[a], self._order[b]
        self._order[a], self._order[b] = ib, ia
        self._slot[ia], self._slot[ib] = b, a

    def mark_active(self, index: int) -> None:
        slot = self._slot[index]
        if slot < self._n_active:
            raise ValueError(f"index {index} is already active")
        self._swap_slots(slot, self._n_active)
        self._n_active += 1

    def mark_inactive(self, index: int) -> None:
        slot = self._slot[index]
        if slot >= self._n_active:
            raise ValueError(f"index {index} is not active")
        self._swap_slots(slot, self._n_active - 1)
        self._n_active -= 1


def select_random(pool: CandidatePool, rng: np.random.Generator) -> int:
    """Draw one index uniformly from the inactive pool and mark it active."""
    m = pool.n_inactive
    if m == 0:
        raise EmptyPoolError("no inactive candidates remain")
    index = int(pool.inactive_indices()[rng.integers(m)])
    pool.mark_active(index)
    return index


def a_optimal_score(a_inv, x, c: float) -> float:
    """Post-update trace of the inverse information for one candidate.

    ``a_inv`` is the inverse of the current information ``A``; the returned
    value equals ``tr((A + c x x')^{-1})`` by the rank-one identity.
    """
    a_inv = np.asarray(a_inv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    ax = a_inv @ x
    return float(np.trace(a_inv) - c * (ax @ ax) / (1.0 + c * (x @ ax)))


def a_optimal_scores(a_inv, X, c) -> np.ndarray:
    """Vectorized :func:`a_optimal_score` over candidate rows of ``X``."""
    a_inv = np.asarray(a_inv, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    ax = X @ a_inv
    num = np.einsum("ij,ij->i", ax, ax)
    den = 1.0 + c * np.einsum("ij,ij->i", ax, X)
    return np.trace(a_inv) - c * num / den


def select_a_optimal(pool: CandidatePool, a_inv, beta, family, state=None) -> int:
    """Pick the inactive candidate minimizing the A-optimality score.

    Candidate weights are evaluated at the current coefficient estimate
    ``beta``.  Ties are broken toward the lowest pool index.  The winner is
    marked active and returned.
    """
    candidates = pool.inactive_indices()
    if candidates.size == 0:
        raise EmptyPoolError("no inactive candidates remain")
    rows = pool.X[candidates]
    weights = family.info_weight(rows @ np.asarray(beta, dtype=np.float64))
    scores = a_optimal_scores(a_inv, rows, weights)
    best = scores.min()
    index = int(candidates[scores == best].min())
    pool.mark_active(index)
    return index


class RandomSampler:
    """Uniform recruitment without replacement."""

    name = "random"

    def start(self, info) -> None:
        pass

    def select(self, pool, beta, family, rng) -> int:
        return select_random(pool, rng)

    def observe(self, x, weight: float, info) -> None:
        pass


class AOptimalSampler:
    """A-optimality recruitment with a maintained inverse information.

    The inverse is updated by the Sherman-Morrison formula after each
    selection and rebuilt from the freshly fitted information every
    ``refresh_every`` selections to bound drift.  When the information is
    singular the sampler falls back to a uniform draw for that step.
    """

    name = "a_optimal"

    def __init__(self, refresh_every: int = DEFAULT_REFRESH_EVERY):
        if refresh_every < 1:
            raise ValueError("refresh_every must be at least 1")
        self.refresh_every = refresh_every
        self._a_inv = None
        self._since_refresh = 0

    def start(self, info) -> None:
        a_inv, singular = inv_spd(info)
        self._a_inv = None if singular else a_inv
        self._since_refresh = 0

    def select(self, pool, beta, family, rng) -> int:
        if self._a_inv is None:
            logger.info("a-optimal sampler: singular information, random fallback")
            return select_random(pool, rng)
        return select_a_optimal(pool, self._a_inv, beta, family)

    def observe(self, x, weight: float, info) -> None:
        """Account for the accepted row ``x``; ``info`` is the current fit's information."""
        self._since_refresh += 1
        if self._a_inv is None or self._since_refresh >= self.refresh_every:
            self.start(info)
            return
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        ax = self._a_inv @ x
        denom = 1.0 + weight * float(x @ ax)
        if denom <= 1e-12:
            self.start(info)
            return
        self._a_inv = self._a_inv - (weight / denom) * np.outer(ax, ax)


def make_sampler(name: str, refresh_every: int = DEFAULT_REFRESH_EVERY):
    if name == "random":
        return RandomSampler()
    if name in ("a_optimal", "aopt"):
        return AOptimalSampler(refresh_every=refresh_every)
    raise ValueError(f"unknown sampler {name!r}, expected 'random' or 'a_optimal'")
