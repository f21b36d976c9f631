"""Quick end-to-end sanity checks for an installed copy.

Each check is small enough to run in well under a second; together they
exercise the quantile helpers, the model fit, the ranking statistic, the
selection score identity, and a miniature sequential run.  The CLI prints
one line per check and exits nonzero if any fails.
"""
from __future__ import annotations

import math

import numpy as np

from .confidence import max_axis_length
from .federation import combine, combined_confidence_set
from .glm import CommonSelector, fit_mqle
from .linalg import inv_spd
from .metrics import auc_with_variance, hanley_mcneil_variance
from .quantiles import chi2_quantile, normal_quantile
from .samplers import a_optimal_score
from .sequential import SiteConfig, run_site


def _check_quantiles():
    want = -2.0 * math.log(0.05)
    got = chi2_quantile(2, 0.95)
    ok = abs(got - want) < 1e-10
    z = normal_quantile(0.975)
    ok = ok and abs(z - 1.959963984540054) < 1e-12
    return ok, f"chi2(2,0.95)={got!r}"


def _check_glm():
    # one predictor, aggregated 2x2 layout whose MLE is known in closed form
    X = np.array([[1.0, 0.0]] * 4 + [[1.0, 1.0]] * 4)
    y = np.array([0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0])
    fit = fit_mqle(X, y, family="logistic")
    want = np.array([0.0, math.log(3.0)])
    ok = fit.converged and np.allclose(fit.beta, want, atol=1e-8)
    return ok, f"beta={fit.beta.tolist()}"


def _check_auc():
    scores = np.array([0.8, 0.4, 0.6, 0.2])
    labels = np.array([1.0, 1.0, 0.0, 0.0])
    res = auc_with_variance(scores, labels)
    ok = res.auc == 0.75
    ok = ok and abs(res.variance - hanley_mcneil_variance(0.75, 2, 2)) < 1e-15
    ok = ok and abs(res.variance - 513.0 / 6720.0) < 1e-12
    return ok, f"auc={res.auc!r} var={res.variance!r}"


def _check_selection_score():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 4))
    a = a @ a.T + 4.0 * np.eye(4)
    x = rng.normal(size=4)
    c = 0.37
    direct = np.trace(np.linalg.inv(a + c * np.outer(x, x)))
    a_inv, singular = inv_spd(a)
    fast = a_optimal_score(a_inv, x, c)
    ok = (not singular) and abs(direct - fast) < 1e-10
    return ok, f"direct={direct!r} fast={fast!r}"


def _mini_run(seed: int):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    n = 4000
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    beta = np.array([-1.0, 1.0, 0.5])
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(X @ beta)))).astype(np.float64)
    config = SiteConfig(
        d1=0.8,
        d2=0.5,
        budget_sq=chi2_quantile(2, 0.95),
        selector=CommonSelector((1, 2)),
        sampler="random",
    )
    run_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed + 1)))
    return run_site(X, y, config, run_rng)


def _check_sequential():
    first = _mini_run(11)
    second = _mini_run(11)
    ok = first.stopping_time == second.stopping_time
    ok = ok and np.array_equal(first.theta, second.theta)
    ok = ok and not first.exhausted
    return ok, f"stopping_time={first.stopping_time}"


def _check_combine():
    first = _mini_run(11)
    second = _mini_run(12)
    combined = combine([first, second])
    ok = combined.total_n == first.stopping_time + second.stopping_time
    d1 = 0.8
    ellipsoid = combined_confidence_set(combined, d1)
    ok = ok and abs(max_axis_length(ellipsoid) - 2.0 * d1) < 1e-8
    return ok, f"N={combined.total_n} max_axis={max_axis_length(ellipsoid)!r}"


CHECKS = (
    ("quantiles", _check_quantiles),
    ("glm-fit", _check_glm),
    ("auc", _check_auc),
    ("selection-score", _check_selection_score),
    ("sequential-run", _check_sequential),
    ("combine", _check_combine),
)


def run_selftest(verbose: bool = True) -> bool:
    """Run every check; print one line each; return True when all pass."""
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok = all_ok and ok
        if verbose:
            print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
