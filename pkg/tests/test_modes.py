import numpy as np
import pytest

from cliffordstack.modes import (kernel_u0, kernel_u0_prime, kernel_un,
                                 kernel_u1, green_gn, green_g0_plus,
                                 mode_solve, catenoid_solve, cylinder_modes,
                                 apply_cylinder_operator)


def fd4_second(f, t0, h=1e-3):
    v = np.array([f(t0 + k * h) for k in (-2, -1, 0, 1, 2)])
    return (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)


def fd4_onesided(f, t0, h, side):
    v = np.array([f(t0 + k * h * side) for k in range(5)])
    return side * (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) \
        / (12 * h)


def test_kernel_identities():
    t = np.linspace(-4, 4, 401)
    h = 1e-4

    def check(fun, shift):
        for t0 in np.linspace(-3, 3, 25):
            val = fd4_second(fun, t0, h) \
                + (2.0 / np.cosh(t0) ** 2 - shift) * fun(t0)
            scale = max(1.0, (shift + 1.0) * abs(fun(t0)))
            assert abs(val) < 1e-6 * scale

    check(kernel_u0, 0.0)
    check(kernel_u0_prime, 0.0)
    check(kernel_u1, 1.0)
    for n in (2, 4):
        for sign in (1, -1):
            check(lambda s, n=n, sign=sign: kernel_un(n, s, sign), n * n)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_green_symmetry(n, rng):
    t = rng.uniform(-4, 4, 200)
    s = rng.uniform(-4, 4, 200)
    assert np.max(np.abs(green_gn(n, t, s) - green_gn(n, s, t))) < 1e-15


@pytest.mark.parametrize("n", [2, 4, 8])
def test_green_annihilation_off_diagonal(n):
    s0 = 0.37
    for t0 in np.linspace(-3, 3, 31):
        if abs(t0 - s0) < 0.2:
            continue
        res = fd4_second(lambda x: green_gn(n, x, s0), t0) \
            + (2.0 / np.cosh(t0) ** 2 - n * n) * green_gn(n, t0, s0)
        assert abs(res) < 1e-6


@pytest.mark.parametrize("n", [2, 4, 8])
def test_green_derivative_jump(n):
    for s0 in (-1.1, 0.0, 0.8):
        jump = fd4_onesided(lambda x: green_gn(n, x, s0), s0, 1e-4, +1) \
            - fd4_onesided(lambda x: green_gn(n, x, s0), s0, 1e-4, -1)
        assert abs(jump - 1.0) < 1e-8


def test_green_g0_structure():
    # the causal kernel is spanned by the two kernel elements in t
    t = np.linspace(-3, 3, 301)
    for s0 in (-0.8, 0.3):
        expected = kernel_u0_prime(s0) * kernel_u0(t) \
            - kernel_u0(s0) * kernel_u0_prime(t)
        assert np.max(np.abs(green_g0_plus(t, s0) - expected)) < 1e-14


def test_mode0_manufactured():
    # v = t sech^2 t gives f = -4 sech^2 tanh (1 - t tanh); with vanishing
    # data at 0 the solution is v - tanh
    a, M = 4.0, 512
    t = np.linspace(-a, a, M + 1)
    s2 = 1.0 / np.cosh(t) ** 2
    f = -4.0 * s2 * np.tanh(t) * (1.0 - t * np.tanh(t))
    u = mode_solve(0, t, f)
    expected = t * s2 - np.tanh(t)
    assert np.max(np.abs(u - expected)) < 1e-7
    mid = M // 2
    assert u[mid] == 0.0
    # vanishing slope at 0: neighbors carry only the curvature term ~ dt^2
    dt = t[1] - t[0]
    assert abs(u[mid + 1] + u[mid - 1] - 2 * u[mid]) < 2 * dt ** 2
    assert abs(u[mid + 1] - u[mid - 1]) < dt ** 2


def test_mode0_zero_source():
    t = np.linspace(-5, 5, 513)
    assert np.max(np.abs(mode_solve(0, t, np.zeros_like(t)))) == 0.0


@pytest.mark.parametrize("n", [2, 8, 16, 32])
def test_moden_manufactured_gaussian(n):
    a, M = 5.0, 512
    t = np.linspace(-a, a, M + 1)
    v = np.exp(-t * t)
    f = (4 * t * t - 2) * v + (2.0 / np.cosh(t) ** 2 - n * n) * v
    u = mode_solve(n, t, f)
    assert np.max(np.abs(u - v)) < 2e-7


def test_mode_decay_with_n():
    # unit-norm sources produce mode amplitudes falling like 1/n^2
    a, M = 5.0, 512
    t = np.linspace(-a, a, M + 1)
    f = np.exp(-(t - 0.4) ** 2) + np.exp(-(t + 1.1) ** 2 / 2)
    f /= np.max(np.abs(f))
    gamma = 0.5
    bound = None
    prev = None
    for n in (2, 4, 8, 16):
        u = mode_solve(n, t, f)
        val = np.max(np.exp(-gamma * np.abs(t)) * np.abs(u))
        if bound is None:
            bound = 1.5 * val * n * n
        assert val * n * n <= bound
        if prev is not None:
            assert val < prev
        prev = val


def test_cylinder_modes_symmetry_guard():
    t = np.linspace(-3, 3, 65)
    th = 2 * np.pi * np.arange(32) / 32
    bad = np.sin(th)[None, :] * np.exp(-t * t)[:, None]
    with pytest.raises(ValueError):
        cylinder_modes(bad, 8, sym_tol=1e-8)
    ok = np.cos(2 * th)[None, :] * np.exp(-t * t)[:, None]
    modes = cylinder_modes(ok, 8, sym_tol=1e-8)
    assert set(modes) == {0, 2, 4, 6, 8}


def test_catenoid_solve_residual(rng):
    # acceptance-scale check: residual of the discrete operator applied to
    # the solution, measured away from the one-sided end stencils
    a, M, nth = 5.78, 512, 256
    t = np.linspace(-a, a, M + 1)
    th = 2 * np.pi * np.arange(nth) / nth
    f = np.zeros((M + 1, nth))
    for n in range(0, 33, 2):
        c = rng.normal(size=3)
        prof = (c[0] * np.exp(-t * t) + c[1] * np.exp(-(t - 1.3) ** 2 / 2)
                + c[2] / np.cosh(t))
        f += prof[:, None] * np.cos(n * th)[None, :] / (1 + n)
    f /= np.max(np.abs(f))
    u = catenoid_solve(t, th, f, n_max=32)
    res = apply_cylinder_operator(t, u) - f
    assert np.max(np.abs(res[3:-3])) < 1e-5


def test_catenoid_solve_inherits_symmetries(rng):
    a, M, nth = 4.0, 256, 128
    t = np.linspace(-a, a, M + 1)
    th = 2 * np.pi * np.arange(nth) / nth
    f = (np.exp(-t * t)[:, None]
         * (1.0 + 0.5 * np.cos(2 * th) - 0.2 * np.cos(4 * th))[None, :])
    u = catenoid_solve(t, th, f, n_max=16)
    refl = u[:, (-np.arange(nth)) % nth]          # theta -> -theta
    half = u[:, (nth // 2 - np.arange(nth)) % nth]  # theta -> pi - theta
    assert np.max(np.abs(u - refl)) < 1e-12
    assert np.max(np.abs(u - half)) < 1e-12


def test_catenoid_weighted_bound_stable():
    # ||u||_{0,gamma} <= C ||f||_{0,gamma} with C stable across half-lengths
    gamma = 0.5
    consts = []
    for a in (3.0, 5.0, 8.0):
        M = 512
        t = np.linspace(-a, a, M + 1)
        th = 2 * np.pi * np.arange(64) / 64
        f = np.exp(-t * t)[:, None] * (1 + 0.3 * np.cos(2 * th))[None, :]
        u = catenoid_solve(t, th, f, n_max=8)
        wf = np.max(np.exp(-gamma * np.abs(t))[:, None] * np.abs(f))
        wu = np.max(np.exp(-gamma * np.abs(t))[:, None] * np.abs(u))
        consts.append(wu / wf)
    assert max(consts) / min(consts) < 3.0
