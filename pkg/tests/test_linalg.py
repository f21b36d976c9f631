import numpy as np
import pytest

from seqfed.linalg import inv_spd, max_eigenvalue, solve_spd


def charpoly_coeffs(m):
    """Characteristic polynomial by the Faddeev-LeVerrier recursion.

    Trace-only arithmetic, independent of any eigensolver.
    """
    n = m.shape[0]
    coeffs = [1.0]
    b = np.eye(n)
    for k in range(1, n + 1):
        a = m @ b
        c = -np.trace(a) / k
        coeffs.append(c)
        b = a + c * np.eye(n)
    return np.array(coeffs)


def test_max_eigenvalue_diagonal():
    assert max_eigenvalue(np.diag([3.0, 1.0])) == pytest.approx(3.0, abs=1e-14)


def test_max_eigenvalue_2x2_exact():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert max_eigenvalue(m) == pytest.approx(3.0, abs=1e-12)


def test_max_eigenvalue_1x1():
    assert max_eigenvalue(np.array([[7.5]])) == 7.5


def test_max_eigenvalue_matches_charpoly_roots():
    rng = np.random.default_rng(42)
    for _ in range(25):
        a = rng.normal(size=(5, 5))
        m = a @ a.T + np.eye(5)
        want = float(np.max(np.roots(charpoly_coeffs(m)).real))
        got = max_eigenvalue(m)
        assert got == pytest.approx(want, rel=1e-8)


def test_max_eigenvalue_small_sizes_match_eigvalsh():
    rng = np.random.default_rng(3)
    for p in (1, 2, 3, 4):
        for _ in range(50):
            a = rng.normal(size=(p, p))
            m = a @ a.T
            assert max_eigenvalue(m) == pytest.approx(
                float(np.linalg.eigvalsh(m)[-1]), rel=1e-10, abs=1e-12
            )


def test_solve_spd_well_conditioned():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(4, 4))
    m = a @ a.T + 2.0 * np.eye(4)
    b = rng.normal(size=4)
    x, singular = solve_spd(m, b)
    assert not singular
    assert np.allclose(m @ x, b, atol=1e-10)


def test_solve_spd_singular_flags_and_pseudoinverse():
    # rank-one matrix: solvable only on its range
    v = np.array([1.0, 2.0])
    m = np.outer(v, v)
    x, singular = solve_spd(m, v * 3.0)
    assert singular
    # pseudo-inverse solution still reproduces the in-range right side
    assert np.allclose(m @ x, v * 3.0, atol=1e-8)


def test_inv_spd_round_trip():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 3))
    m = a @ a.T + np.eye(3)
    inv, singular = inv_spd(m)
    assert not singular
    assert np.allclose(inv @ m, np.eye(3), atol=1e-10)
