"""Waist-radius balancing for stacks of N tori joined by catenoidal necks.

The neck radii are fixed, up to the free parameters, by requiring the
vertical-Killing-field force through every region to vanish at leading
order.  With c_i the ratio of the i-th waist radius to the first, the
conditions reduce to a tridiagonal quadratic system whose large-m limit is
governed by a family of Chebyshev-like polynomials P_i: the limit ratios are

    d_i = P_{n-i+1}(beta) / P_n(beta),    beta the largest root of P_{n+1},

with n = floor(N/2), one polynomial family per parity of N.  For finite m a
logarithmic correction -(8 pi / k l m^2) c_i ln c_i enters each equation and
the system is solved by Newton from the limit ratios.

Index convention: 1-based quantities c_i, tau_i, a_i (i = 1..N-1) and the
torus heights z_i (i = 1..N) are stored in 0-based arrays shifted by one,
so ``c[0]`` is c_1 = 1.
"""

import numpy as np
from dataclasses import dataclass, field

__all__ = [
    "StackConfig",
    "BalancedLayout",
    "NonConvergenceError",
    "poly_eval",
    "poly_eval_with_derivative",
    "gamma_root",
    "limit_ratios",
    "balance_residual",
    "solve_balance",
    "stack_layout",
]


class NonConvergenceError(RuntimeError):
    """Newton failed; typically m is too small for the given (N, k, l)."""


@dataclass(frozen=True)
class StackConfig:
    """Discrete data of a stack plus the offset parameters.

    zeta scales the waist radii, xi offsets the neck center heights; both
    have length N-1 and are bounded by c_bound.
    """

    N: int
    k: int
    l: int
    m: int
    zeta: np.ndarray = None
    xi: np.ndarray = None
    c_bound: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not (1 <= self.k <= self.l):
            raise ValueError("need 1 <= k <= l")
        if self.m < 1:
            raise ValueError("m must be positive")
        z = np.zeros(self.N - 1) if self.zeta is None else np.asarray(self.zeta, float)
        x = np.zeros(self.N - 1) if self.xi is None else np.asarray(self.xi, float)
        if z.shape != (self.N - 1,) or x.shape != (self.N - 1,):
            raise ValueError("zeta and xi must have length N-1")
        if np.any(np.abs(z) > self.c_bound) or np.any(np.abs(x) > self.c_bound):
            raise ValueError("parameters exceed c_bound")
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "xi", x)

    @property
    def n_half(self):
        return self.N // 2

    @property
    def parity(self):
        return self.N % 2


def poly_eval(parity, index, lam):
    """P_index[parity](lam) by the three-term recursion.

    Base cases: P_1[0] = 2, P_1[1] = 1, P_2[0] = lam, P_2[1] = lam - 1;
    then P_{i+1} = lam P_i - P_{i-1}.
    """
    return poly_eval_with_derivative(parity, index, lam)[0]


def poly_eval_with_derivative(parity, index, lam):
    if index < 1:
        raise ValueError("index must be >= 1")
    lam = np.asarray(lam, dtype=float)
    if parity == 0:
        p_prev, p = np.full_like(lam, 2.0), lam.copy()
    elif parity == 1:
        p_prev, p = np.ones_like(lam), lam - 1.0
    else:
        raise ValueError("parity must be 0 or 1")
    dp_prev, dp = np.zeros_like(lam), np.ones_like(lam)
    if index == 1:
        return p_prev, dp_prev
    for _ in range(index - 2):
        p_prev, p = p, lam * p - p_prev
        dp_prev, dp = dp, p_prev + lam * dp - dp_prev
    return p, dp


def gamma_root(parity, index, tol=1e-12):
    """Largest root of P_index[parity] in (1, 2), bisection then Newton polish."""
    if index < 3:
        raise ValueError("roots in (1, 2) are tracked for index >= 3")
    lo_all = np.linspace(1.0 + 1e-9, 2.0 - 1e-9, 4097)
    vals = poly_eval(parity, index, lo_all)
    sign = np.sign(vals)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(flips) == 0:
        raise RuntimeError(
            f"no sign change of P_{index}[{parity}] in (1,2): recursion bug?")
    lo, hi = lo_all[flips[-1]], lo_all[flips[-1] + 1]
    flo = poly_eval(parity, index, lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fm = poly_eval(parity, index, mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < tol:
            break
    x = 0.5 * (lo + hi)
    for _ in range(3):
        f, df = poly_eval_with_derivative(parity, index, x)
        x -= f / df
    return float(x)


def limit_ratios(N):
    """Large-m limit (d_2, ..., d_n) of the waist ratios; [] for N=2, [1] for N=3."""
    if N == 2:
        return np.zeros(0)
    if N == 3:
        return np.ones(1)
    n = N // 2
    parity = N % 2
    beta = gamma_root(parity, n + 1)
    pn = poly_eval(parity, n, beta)
    return np.array([poly_eval(parity, n - i + 1, beta) / pn
                     for i in range(2, n + 1)])


def _balance_rows(c_free, N, k, l, m):
    """Residual and Jacobian of the log-corrected ratio system.

    ``c_free`` holds (c_2, ..., c_n); c_1 = 1 always and the upper half of
    the c vector is the mirror image of the lower half.
    """
    n = N // 2
    parity = N % 2
    eps = 8.0 * np.pi / (k * l * m * m)
    c = np.concatenate([[1.0], c_free])  # c[0] = c_1, ..., c[n-1] = c_n
    res = np.zeros(n - 1)
    jac = np.zeros((n - 1, n - 1))

    def cj(j):  # c_j with 1-based j, valid 1..n
        return c[j - 1]

    for row, i in enumerate(range(2, n + 1)):
        log_term = eps * cj(i) * np.log(cj(i))
        dlog = eps * (np.log(cj(i)) + 1.0)
        if i == n:
            two = 2.0 ** ((N + 1) % 2)
            res[row] = -two * cj(n - 1) + (cj(2) - parity) * cj(n) + log_term
            if n - 1 >= 2:
                jac[row, n - 3] += -two
            jac[row, 0] += cj(n)
            jac[row, n - 2] += (cj(2) - parity) + dlog
        elif i == 2:
            res[row] = cj(2) * cj(2) - cj(3) - 1.0 + log_term
            jac[row, 0] += 2.0 * cj(2) + dlog
            jac[row, 1] += -1.0
        else:
            res[row] = -cj(i - 1) + cj(2) * cj(i) - cj(i + 1) + log_term
            jac[row, i - 3] += -1.0
            jac[row, 0] += cj(i)
            jac[row, i - 2] += cj(2) + dlog
            jac[row, i - 1] += -1.0
    return res, jac


def balance_residual(c_full, N, k, l, m):
    """Max-norm residual of the solved ratio system (for verification)."""
    n = N // 2
    if n < 2:
        return 0.0
    res, _ = _balance_rows(np.asarray(c_full, float)[1:n], N, k, l, m)
    return float(np.max(np.abs(res))) if len(res) else 0.0


def _mirror_fill(c_low, N):
    """Full (c_1, ..., c_{N-1}) from (c_1, ..., c_n) via c_j = c_{N-j}."""
    n = N // 2
    c = np.zeros(N - 1)
    c[:n] = c_low
    for j in range(n + 1, N):
        c[j - 1] = c[N - j - 1]
    return c


def solve_balance(N, k, l, m, max_iter=50, tol=1e-13):
    """Solve the balancing system; returns (c vector of length N-1, tau_bar_1).

    Newton starts from the large-m limit ratios with step damping; the limit
    point lies in the basin once m is large enough, and failure to converge
    is reported as such.
    """
    n = N // 2
    if N == 2:
        c = np.array([1.0])
        c2 = 0.0
    elif N == 3:
        c = np.array([1.0, 1.0])
        c2 = 1.0
    else:
        x = limit_ratios(N).copy()
        res, jac = _balance_rows(x, N, k, l, m)
        for it in range(max_iter):
            if np.max(np.abs(res)) < tol:
                break
            step = np.linalg.solve(jac, -res)
            t = 1.0
            base = np.max(np.abs(res))
            while t > 1e-6:
                x_try = x + t * step
                if np.all(x_try > 0):
                    res_try, jac_try = _balance_rows(x_try, N, k, l, m)
                    if np.max(np.abs(res_try)) < base:
                        x, res, jac = x_try, res_try, jac_try
                        break
                t *= 0.5
            else:
                raise NonConvergenceError(
                    f"balancing stalled at N={N}, m={m}: m too small")
        else:
            raise NonConvergenceError(
                f"balancing did not converge in {max_iter} iterations "
                f"at N={N}, m={m}: m too small")
        c = _mirror_fill(np.concatenate([[1.0], x]), N)
        c2 = c[1]
    tau_bar1 = np.exp(-(k * l * m * m) / (4.0 * np.pi) * (1.0 - c2 / 2.0)) \
        / (10.0 * l * m)
    return c, float(tau_bar1)


@dataclass
class BalancedLayout:
    """Solved geometry of a stack: sizes, radii and heights.

    Arrays indexed as in the module docstring.  ``b`` is the neck/torus
    overlap bound per catenoid class, the nominal value ``b_underline``
    scaled like a_i/abar_i and capped at a_i/3 (the cap only binds at small
    m and is recorded in ``b_capped``).
    """

    N: int
    k: int
    l: int
    m: int
    c: np.ndarray
    d: np.ndarray
    tau_bar1: float
    tau_bar: np.ndarray
    tau: np.ndarray
    a_bar: np.ndarray
    a: np.ndarray
    b: np.ndarray
    b_underline: float
    b_capped: bool
    z_tori: np.ndarray
    z_cat: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray

    def to_dict(self):
        out = {"N": self.N, "k": self.k, "l": self.l, "m": self.m,
               "tau_bar1": self.tau_bar1, "b_underline": self.b_underline,
               "b_capped": bool(self.b_capped)}
        for name in ("c", "d", "tau_bar", "tau", "a_bar", "a", "b",
                     "z_tori", "z_cat", "zeta", "xi"):
            out[name] = [float(v) for v in getattr(self, name)]
        return out


def stack_layout(cfg: StackConfig, b_underline=5.0):
    """Full layout (radii, half-lengths, heights) for the given parameters."""
    N, k, l, m = cfg.N, cfg.k, cfg.l, cfg.m
    n, parity = cfg.n_half, cfg.parity
    c, tau_bar1 = solve_balance(N, k, l, m)
    tau_bar = c * tau_bar1
    tau = np.empty(N - 1)
    tau[0] = np.exp(cfg.zeta[0]) * tau_bar[0]
    for i in range(2, N):
        tau[i - 1] = np.exp(cfg.zeta[0] + cfg.zeta[i - 1] / (k * l * m * m)) \
            * tau_bar[i - 1]
    if np.any(10.0 * l * m * tau >= 1.0):
        raise NonConvergenceError("waist radii too large for the neck scale; "
                                  "m too small")
    a_bar = np.arccosh(1.0 / (10.0 * l * m * tau_bar))
    a = np.arccosh(1.0 / (10.0 * l * m * tau))
    b = np.minimum(a / a_bar * b_underline, a / 3.0)
    b_capped = bool(np.any(a / a_bar * b_underline > a / 3.0))

    lam = np.log(1.0 / (10.0 * l * m * tau))  # neck half-heights tau_i*lam_i
    tl = tau * lam
    two_pow = 2.0 ** parity
    head = two_pow * tl[n - 1]
    partial = np.concatenate([[0.0], np.cumsum(tl)])  # partial[j] = sum_{i<=j} tl
    low = partial[n - 1]  # sum_{j=1}^{n-1}

    z_tori = np.empty(N)
    tx = tau * cfg.xi
    z_tori[0] = tx[0] - head - 2.0 * low
    for i in range(2, N):
        z_tori[i - 1] = 0.5 * (tx[i - 2] + tx[i - 1]) - head \
            + 2.0 * (partial[i - 1] - low)
    z_tori[N - 1] = tx[N - 2] - head + 2.0 * (partial[N - 1] - partial[n - 1])

    z_cat = np.empty(N - 1)
    for i in range(1, N):
        z_cat[i - 1] = tx[i - 1] + tl[i - 1] + 2.0 * (partial[i - 1] - low) - head

    d_low = limit_ratios(N)
    d = _mirror_fill(np.concatenate([[1.0], d_low]), N) if N >= 4 else \
        np.ones(N - 1)
    return BalancedLayout(N=N, k=k, l=l, m=m, c=c, d=d, tau_bar1=tau_bar1,
                          tau_bar=tau_bar, tau=tau, a_bar=a_bar, a=a, b=b,
                          b_underline=b_underline, b_capped=b_capped,
                          z_tori=z_tori, z_cat=z_cat,
                          zeta=cfg.zeta.copy(), xi=cfg.xi.copy())
