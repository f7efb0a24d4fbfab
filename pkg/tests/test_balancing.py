import numpy as np
import pytest

from cliffordstack.balancing import (StackConfig, NonConvergenceError,
                                     poly_eval, gamma_root, limit_ratios,
                                     solve_balance, balance_residual,
                                     stack_layout)

GOLDEN = (1 + np.sqrt(5)) / 2


def test_poly_base_cases():
    assert poly_eval(0, 1, 7.0) == 2.0
    assert poly_eval(1, 1, 7.0) == 1.0
    assert poly_eval(0, 2, 7.0) == 7.0
    assert poly_eval(1, 2, 7.0) == 6.0


def test_poly_named_values():
    # P3[0] = x^2 - 2, P4[0] = x^3 - 3x, P3[1](golden) = 0
    assert abs(poly_eval(0, 3, 2.0) - 2.0) < 1e-14
    assert abs(poly_eval(0, 4, 2.0) - 2.0) < 1e-14
    assert abs(poly_eval(1, 3, GOLDEN)) < 1e-14
    x = np.linspace(1.0, 2.0, 11)
    assert np.allclose(poly_eval(0, 3, x), x**2 - 2, atol=1e-13)
    assert np.allclose(poly_eval(0, 4, x), x**3 - 3 * x, atol=1e-13)
    assert np.allclose(poly_eval(1, 4, x), x**3 - x**2 - 2 * x + 1, atol=1e-13)


def test_gamma_roots():
    assert abs(gamma_root(0, 3) - np.sqrt(2)) < 1e-12
    assert abs(gamma_root(1, 3) - GOLDEN) < 1e-12
    assert abs(gamma_root(0, 4) - np.sqrt(3)) < 1e-12


@pytest.mark.parametrize("parity", [0, 1])
def test_root_claims(parity):
    # for each index: the largest root lies in (1,2); the previous polynomial
    # is positive past it; the next polynomial is negative at it; and the
    # roots strictly increase with the index.
    prev_gamma = 1.0
    for n in range(3, 13):
        g = gamma_root(parity, n)
        assert 1.0 < g < 2.0
        assert g > prev_gamma
        xs = np.linspace(g, 2.5, 200)
        assert np.all(poly_eval(parity, n - 1, xs) > 0)
        assert poly_eval(parity, n + 1, g) < 0
        assert abs(poly_eval(parity, n, g)) < 1e-10
        prev_gamma = g


def test_limit_ratios_golden_values():
    assert limit_ratios(2).size == 0
    assert np.allclose(limit_ratios(3), [1.0])
    assert abs(limit_ratios(4)[0] - np.sqrt(2)) < 1e-12
    assert abs(limit_ratios(5)[0] - GOLDEN) < 1e-12
    d6 = limit_ratios(6)
    assert np.allclose(d6, [np.sqrt(3), 2.0], atol=1e-12)


def test_limit_ratios_cross_check_linear_system():
    # solve the tridiagonal limit system directly and compare
    for N in (6, 8, 9, 11):
        n = N // 2
        d = limit_ratios(N)
        beta = d[0]
        A = np.zeros((n - 1, n - 1))
        for r in range(n - 1):
            A[r, r] = beta
            if r + 1 < n - 1:
                A[r, r + 1] = -1.0
            if r - 1 >= 0:
                A[r, r - 1] = -1.0
        if N % 2 == 0:
            A[n - 2, n - 3] = -2.0
        else:
            A[n - 2, n - 2] = beta - 1.0
        rhs = np.zeros(n - 1)
        rhs[0] = 1.0
        sol = np.linalg.solve(A, rhs)
        assert np.max(np.abs(sol - d)) < 1e-10


def test_limit_ratios_monotone_up_to_24():
    for N in range(4, 25):
        d = limit_ratios(N)
        assert 1.0 < d[0] < 2.0
        assert np.all(np.diff(d) > 0)


def test_solve_balance_small_N():
    c, t1 = solve_balance(2, 1, 1, 6)
    assert np.allclose(c, [1.0])
    assert abs(t1 - np.exp(-36 / (4 * np.pi)) / 60) < 1e-18
    c, _ = solve_balance(3, 1, 1, 6)
    assert np.allclose(c, [1.0, 1.0])


def test_solve_balance_converges_to_limit():
    c16, _ = solve_balance(4, 1, 1, 16)
    c64, _ = solve_balance(4, 1, 1, 64)
    assert abs(c64[1] - np.sqrt(2)) < abs(c16[1] - np.sqrt(2))
    assert abs(c64[1] - np.sqrt(2)) < 0.01


def test_solve_balance_residual_small():
    for (N, m) in [(4, 8), (5, 8), (6, 10), (9, 12)]:
        c, _ = solve_balance(N, 1, 1, m)
        assert balance_residual(c, N, 1, 1, m) < 1e-12
        assert np.allclose(c, c[::-1])  # mirror symmetry


def test_stack_layout_zeta_zero():
    cfg = StackConfig(N=4, k=1, l=1, m=8)
    lay = stack_layout(cfg)
    assert np.allclose(lay.tau, lay.tau_bar)
    assert np.allclose(lay.a, np.arccosh(1 / (10 * 8 * lay.tau)))


def test_stack_layout_n2_heights():
    cfg = StackConfig(N=2, k=1, l=1, m=6)
    lay = stack_layout(cfg)
    assert abs(lay.z_cat[0]) < 1e-18
    expected = lay.tau[0] * np.log(1 / (10 * 6 * lay.tau[0]))
    assert abs(lay.z_tori[1] - expected) < 1e-18
    assert abs(lay.z_tori[0] + lay.z_tori[1]) < 1e-18


def test_stack_layout_even_mirror():
    cfg = StackConfig(N=6, k=1, l=1, m=10)
    lay = stack_layout(cfg)
    assert np.max(np.abs(lay.z_tori + lay.z_tori[::-1])) < 1e-15


def test_stack_layout_zeta_scaling():
    zeta = np.array([0.2, -0.1, 0.05])
    cfg = StackConfig(N=4, k=1, l=1, m=8, zeta=zeta)
    lay = stack_layout(cfg)
    assert abs(lay.tau[0] - np.exp(0.2) * lay.tau_bar[0]) < 1e-18
    assert abs(lay.tau[1] - np.exp(0.2 - 0.1 / 64) * lay.tau_bar[1]) < 1e-18


def test_config_validation():
    with pytest.raises(ValueError):
        StackConfig(N=1, k=1, l=1, m=4)
    with pytest.raises(ValueError):
        StackConfig(N=3, k=2, l=1, m=4)
    with pytest.raises(ValueError):
        StackConfig(N=3, k=1, l=1, m=4, zeta=np.array([3.0, 0.0]))
