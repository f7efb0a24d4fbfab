"""Smooth transition functions.

The basic profile ``smoothstep`` is the standard C-infinity step built from
exp(-1/s): writing sigma for the logistic function,

    S(s) = sigma(-1/u + 1/(1-u)),   u = (s+1)/2,

so S is 0 on (-inf, -1], 1 on [1, inf), nondecreasing, and S - 1/2 is odd.
``Cutoff(a, b)`` rescales the argument affinely so that a maps to -1 and b
to +1: the transition uses the full interval and the function is exactly 0
past a and exactly 1 past b, in either order of a, b.  (Any affine
normalization yields an admissible transition family; the full-width one is
used throughout because it keeps the glue's curvature, which scales with
the square of the reciprocal transition width, as small as the interval
allows.)
"""

import numpy as np
from dataclasses import dataclass

__all__ = ["smoothstep", "smoothstep_table", "Cutoff", "cutoff_eval"]

_U_EPS = 1e-12


def _phi_terms(u):
    """phi = -1/u + 1/(1-u) and its first three derivatives on (0,1)."""
    a = 1.0 / u
    b = 1.0 / (1.0 - u)
    phi = -a + b
    p1 = a * a + b * b
    p2 = -2.0 * a**3 + 2.0 * b**3
    p3 = 6.0 * a**4 + 6.0 * b**4
    return phi, p1, p2, p3


def smoothstep_table(s):
    """Value and first three derivatives of the smooth step at ``s``."""
    s = np.asarray(s, dtype=float)
    u = np.clip((s + 1.0) * 0.5, _U_EPS, 1.0 - _U_EPS)
    inside = (s > -1.0) & (s < 1.0)
    phi, p1, p2, p3 = _phi_terms(u)
    with np.errstate(over="ignore"):
        h = 1.0 / (1.0 + np.exp(-np.clip(phi, -700.0, 700.0)))
    sig = h * (1.0 - h)
    one2h = 1.0 - 2.0 * h
    h1 = sig * p1
    h2 = sig * (one2h * p1 * p1 + p2)
    h3 = sig * (one2h * one2h * p1**3 + 3.0 * one2h * p1 * p2
                - 2.0 * sig * p1**3 + p3)
    f0 = np.where(inside, h, (s >= 1.0).astype(float))
    # d/ds = (1/2) d/du etc.
    f1 = np.where(inside, 0.5 * h1, 0.0)
    f2 = np.where(inside, 0.25 * h2, 0.0)
    f3 = np.where(inside, 0.125 * h3, 0.0)
    return f0, f1, f2, f3


def smoothstep(s):
    return smoothstep_table(s)[0]


@dataclass(frozen=True)
class Cutoff:
    """Transition that is 0 past ``a`` and 1 past ``b`` (either order)."""

    a: float
    b: float

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("degenerate cutoff: a == b")

    def _lin(self, s):
        return (np.asarray(s, dtype=float) * 2.0 - (self.a + self.b)) \
            / (self.b - self.a)

    def __call__(self, s):
        return smoothstep(self._lin(s))

    def table(self, s):
        """Value and derivatives w.r.t. ``s`` (chain rule through the affine map)."""
        g = 2.0 / (self.b - self.a)
        f0, f1, f2, f3 = smoothstep_table(self._lin(s))
        return f0, f1 * g, f2 * g * g, f3 * g**3


def cutoff_eval(spec: Cutoff, s):
    """Evaluate the transition ``spec`` at ``s`` (scalar or array)."""
    return spec(s)
