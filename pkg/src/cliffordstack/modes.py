"""Separated solves on the model cylinder.

In the uniformized metric every neck limits to the flat cylinder with
potential 2 sech^2 t, so the linearized operator splits over angular modes
cos(2n theta) into the ordinary operators

    L - 4 n^2,    L = d^2/dt^2 + 2 sech^2 t.

L factors as (d/dt - tanh t)(d/dt + tanh t) + 1, which hands over the kernel
in closed form: tanh t and 1 - t tanh t for L itself, (+-n - tanh t) e^{+-nt}
for L - n^2, sech t for L - 1.  For n >= 2 the bounded Green's function is

    G_n(t,s) = e^{-n|t-s|} (n + tanh(min)) (n - tanh(max)) / (2n(1-n^2)),

and the rotationally invariant mode is integrated from t = 0 with vanishing
value and slope there, via

    G_0^+(t,s) = tanh t - tanh s + (t - s) tanh t tanh s.

Mode sources are integrated against these kernels with an exponentially
weighted cumulative rule that treats the stiff factor exactly, so the grids
never see overflow even for n a = O(100).
"""

import numpy as np
from scipy.integrate import cumulative_simpson

__all__ = [
    "kernel_u0",
    "kernel_u0_prime",
    "kernel_un",
    "kernel_u1",
    "green_gn",
    "green_g0_plus",
    "mode_solve",
    "catenoid_solve",
    "apply_cylinder_operator",
    "cylinder_modes",
]


def kernel_u0(t):
    return np.tanh(t)


def kernel_u0_prime(t):
    return 1.0 - t * np.tanh(t)


def kernel_un(n, t, sign=1):
    """(+-n - tanh t) e^{+-n t}, annihilated by L - n^2."""
    s = 1.0 if sign >= 0 else -1.0
    return (s * n - np.tanh(t)) * np.exp(s * n * t)


def kernel_u1(t):
    return 1.0 / np.cosh(t)


def green_gn(n, t, s):
    """Bounded Green's function of L - n^2 on the line, n >= 2."""
    if n < 2:
        raise ValueError("the bounded kernel exists for n >= 2")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    lo = np.minimum(t, s)
    hi = np.maximum(t, s)
    return np.exp(-n * (hi - lo)) * (n - np.tanh(lo)) * (n + np.tanh(hi)) \
        / (2.0 * n * (1.0 - n * n))


def green_g0_plus(t, s):
    """Causal kernel for the rotationally invariant mode, trivial data at 0."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.tanh(t) - np.tanh(s) + (t - s) * np.tanh(t) * np.tanh(s)


def _hermite_coeffs(phi, dt):
    """Per-segment cubic coefficients of phi with centered slopes."""
    m = np.gradient(phi, dt, axis=0)
    p0, p1 = phi[:-1], phi[1:]
    m0, m1 = m[:-1], m[1:]
    a0 = p0
    a1 = m0
    a2 = (3.0 * (p1 - p0) / dt - 2.0 * m0 - m1) / dt
    a3 = (2.0 * (p0 - p1) / dt + m0 + m1) / dt**2
    return a0, a1, a2, a3


def _exp_moments(n, dt):
    """M_k = integral_0^dt e^{-n (dt - x)} x^k dx for k = 0..3."""
    e = np.exp(-n * dt)
    if n * dt > 1e-3:
        M0 = (1.0 - e) / n
        M1 = dt / n - M0 / n
        M2 = dt**2 / n - 2.0 * M1 / n
        M3 = dt**3 / n - 3.0 * M2 / n
    else:
        # series in n*dt to dodge cancellation
        x = n * dt
        M0 = dt * (1 - x / 2 + x**2 / 6 - x**3 / 24)
        M1 = dt**2 * (1 / 2 - x / 3 + x**2 / 8 - x**3 / 30)
        M2 = dt**3 * (1 / 3 - x / 4 + x**2 / 10 - x**3 / 36)
        M3 = dt**4 * (1 / 4 - x / 5 + x**2 / 12 - x**3 / 42)
    return M0, M1, M2, M3


def _expcum_forward(phi, dt, n):
    """B_i = integral_{t_0}^{t_i} e^{-n (t_i - s)} phi(s) ds on a uniform grid."""
    a0, a1, a2, a3 = _hermite_coeffs(phi, dt)
    M0, M1, M2, M3 = _exp_moments(n, dt)
    seg = a0 * M0 + a1 * M1 + a2 * M2 + a3 * M3
    decay = np.exp(-n * dt)
    out = np.zeros_like(phi)
    for i in range(1, len(phi)):
        out[i] = decay * out[i - 1] + seg[i - 1]
    return out


def mode_solve(n, t, f):
    """Solve (L - n^2) u = f for one angular mode on a symmetric grid.

    n = 0 integrates from the center with vanishing value and slope there
    (n must then index the grid center exactly: odd length, uniform);
    even n >= 2 convolves with the bounded kernel, the truncation to the
    grid being exact for sources supported there.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(t) % 2 != 1:
        raise ValueError("grid must have odd length with a center node")
    dt = t[1] - t[0]
    if n == 0:
        mid = len(t) // 2
        I1 = cumulative_simpson(kernel_u0_prime(t) * f, dx=dt, initial=0.0)
        I2 = cumulative_simpson(kernel_u0(t) * f, dx=dt, initial=0.0)
        I1 -= I1[mid]
        I2 -= I2[mid]
        return kernel_u0(t) * I1 - kernel_u0_prime(t) * I2
    if n < 2 or n % 2 != 0:
        raise ValueError("only the even modes n = 0, 2, 4, ... occur")
    tanh = np.tanh(t)
    bminus = _expcum_forward((n - tanh) * f, dt, n)
    bplus = _expcum_forward(((n + tanh) * f)[::-1], dt, n)[::-1]
    return ((n + tanh) * bminus + (n - tanh) * bplus) / (2.0 * n * (1.0 - n * n))


def cylinder_modes(f_grid, n_max, sym_tol=None):
    """Even cosine-mode profiles of a function sampled on (t, theta).

    Returns dict {n: f_n(t)}.  The symmetry of the stacked surfaces forces
    all sine modes and odd cosine modes to vanish identically; when
    ``sym_tol`` is given their sampled magnitude is checked against it.
    """
    f_grid = np.asarray(f_grid, dtype=float)
    nth = f_grid.shape[1]
    coeff = np.fft.rfft(f_grid, axis=1) / nth
    if sym_tol is not None:
        scale = max(np.max(np.abs(f_grid)), 1e-300)
        bad_sin = np.max(np.abs(coeff.imag)) / scale
        odd = coeff[:, 1::2]
        bad_odd = np.max(np.abs(odd.real)) / scale if odd.size else 0.0
        if max(bad_sin, bad_odd) > sym_tol:
            raise ValueError("source violates the cylinder symmetries "
                             f"(sine {bad_sin:.2e}, odd-cos {bad_odd:.2e})")
    out = {0: coeff[:, 0].real.copy()}
    for n in range(2, n_max + 1, 2):
        if n < coeff.shape[1]:
            out[n] = 2.0 * coeff[:, n].real
    return out


def catenoid_solve(t, theta, f_grid, n_max=32, sym_tol=1e-8):
    """Invert the cylinder-limit operator on a symmetric source.

    f_grid is sampled on the (t, theta) product grid; the solution carries
    trivial data at t = 0 in its rotationally invariant mode and decaying
    behavior in all higher even modes.
    """
    modes = cylinder_modes(f_grid, n_max, sym_tol)
    u = np.zeros_like(np.asarray(f_grid, dtype=float))
    for n, fn in modes.items():
        un = mode_solve(n, t, fn)
        u += un[:, None] * np.cos(n * np.asarray(theta))[None, :]
    return u


def _fd4_axis0(arr, dt):
    """Fourth-order first derivative along axis 0, one-sided at the ends."""
    d = np.empty_like(arr)
    d[2:-2] = (arr[:-4] - 8 * arr[1:-3] + 8 * arr[3:-1] - arr[4:]) / (12 * dt)
    for i in (0, 1):
        d[i] = (-25 * arr[i] + 48 * arr[i + 1] - 36 * arr[i + 2]
                + 16 * arr[i + 3] - 3 * arr[i + 4]) / (12 * dt)
        d[-1 - i] = -(-25 * arr[-1 - i] + 48 * arr[-2 - i] - 36 * arr[-3 - i]
                      + 16 * arr[-4 - i] - 3 * arr[-5 - i]) / (12 * dt)
    return d


def _spectral_dtheta(arr, order=1):
    nth = arr.shape[1]
    k = np.fft.rfftfreq(nth, d=1.0 / nth) * 1j
    co = np.fft.rfft(arr, axis=1) * k[None, :] ** order
    return np.fft.irfft(co, n=nth, axis=1)


def apply_cylinder_operator(t, u_grid, potential=None):
    """Discrete cylinder-limit operator: d_tt + d_thth + 2 sech^2 t.

    Fourth-order finite differences in t, spectral in theta; an independent
    application used as the residual oracle for the mode solves.
    """
    t = np.asarray(t, dtype=float)
    dt = t[1] - t[0]
    utt = _fd4_axis0(_fd4_axis0(u_grid, dt), dt)
    uthth = _spectral_dtheta(u_grid, order=2)
    pot = 2.0 / np.cosh(t) ** 2 if potential is None else potential
    return utt + uthth + pot[:, None] * u_grid
