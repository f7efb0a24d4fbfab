"""Batched 3-jets of scalar functions of two chart variables.

A Jet3 carries the value, gradient, Hessian and third derivatives of a
scalar function of two local coordinates, over an arbitrary batch of sample
points.  Sums, products and composition with univariate functions are enough
to push exact derivatives through chart maps, the covering map of the
3-sphere, and normal perturbations, with no symbolic machinery and no finite
differencing.  Finite differences appear in this package only as test
oracles.

Shapes: ``val`` is (...,), ``d1`` is (..., 2), ``d2`` is (..., 2, 2) and
``d3`` is (..., 2, 2, 2); the derivative tensors are symmetric.
"""

import numpy as np

__all__ = [
    "Jet3",
    "jet_variable",
    "jet_constant",
    "tab_sin",
    "tab_cos",
    "tab_sinh",
    "tab_cosh",
    "tab_exp",
    "tab_sqrt",
    "tab_arcosh",
    "tab_reciprocal",
]


def _outer12(a, b):
    # a: (...,2), b: (...,2) -> (...,2,2)
    return a[..., :, None] * b[..., None, :]


def _sym_d2_d1(d2, d1):
    """Symmetrized d2 x d1 contribution to a third derivative tensor."""
    t = d2[..., :, :, None] * d1[..., None, None, :]
    return t + np.swapaxes(t, -1, -2) + np.swapaxes(t, -1, -3)


class Jet3:
    __slots__ = ("val", "d1", "d2", "d3")

    def __init__(self, val, d1, d2, d3):
        self.val = np.asarray(val, dtype=float)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)
        self.d3 = np.asarray(d3, dtype=float)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet3):
            return Jet3(self.val + other.val, self.d1 + other.d1,
                        self.d2 + other.d2, self.d3 + other.d3)
        return Jet3(self.val + other, self.d1, self.d2, self.d3)

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.val, -self.d1, -self.d2, -self.d3)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet3) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            c = np.asarray(other, dtype=float)
            return Jet3(self.val * c, self.d1 * c[..., None],
                        self.d2 * c[..., None, None],
                        self.d3 * c[..., None, None, None])
        u, v = self, other
        val = u.val * v.val
        d1 = u.d1 * v.val[..., None] + v.d1 * u.val[..., None]
        d2 = (u.d2 * v.val[..., None, None] + v.d2 * u.val[..., None, None]
              + _outer12(u.d1, v.d1) + _outer12(v.d1, u.d1))
        d3 = (u.d3 * v.val[..., None, None, None]
              + v.d3 * u.val[..., None, None, None]
              + _sym_d2_d1(u.d2, v.d1) + _sym_d2_d1(v.d2, u.d1))
        return Jet3(val, d1, d2, d3)

    __rmul__ = __mul__

    def apply(self, table):
        """Compose with a univariate function given its derivative table.

        ``table(x)`` must return ``(f, f', f'', f''')`` evaluated at ``x``.
        """
        f0, f1, f2, f3 = table(self.val)
        u1, u2, u3 = self.d1, self.d2, self.d3
        d1 = f1[..., None] * u1
        uu = _outer12(u1, u1)
        d2 = f2[..., None, None] * uu + f1[..., None, None] * u2
        uuu = uu[..., :, :, None] * u1[..., None, None, :]
        d3 = (f3[..., None, None, None] * uuu
              + f2[..., None, None, None] * _sym_d2_d1(u2, u1)
              + f1[..., None, None, None] * u3)
        return Jet3(f0, d1, d2, d3)


def jet_variable(values, index, batch_shape=None):
    """Jet of the coordinate function  u -> u[index]  (index 0 or 1)."""
    values = np.asarray(values, dtype=float)
    shape = values.shape if batch_shape is None else batch_shape
    d1 = np.zeros(shape + (2,))
    d1[..., index] = 1.0
    return Jet3(values, d1, np.zeros(shape + (2, 2)), np.zeros(shape + (2, 2, 2)))


def jet_constant(values, batch_shape=None):
    values = np.asarray(values, dtype=float)
    shape = values.shape if batch_shape is None else batch_shape
    values = np.broadcast_to(values, shape).copy()
    return Jet3(values, np.zeros(shape + (2,)), np.zeros(shape + (2, 2)),
                np.zeros(shape + (2, 2, 2)))


# -- univariate derivative tables ----------------------------------------

def tab_sin(x):
    s, c = np.sin(x), np.cos(x)
    return s, c, -s, -c


def tab_cos(x):
    s, c = np.sin(x), np.cos(x)
    return c, -s, -c, s


def tab_sinh(x):
    s, c = np.sinh(x), np.cosh(x)
    return s, c, s, c


def tab_cosh(x):
    s, c = np.sinh(x), np.cosh(x)
    return c, s, c, s


def tab_exp(x):
    e = np.exp(x)
    return e, e, e, e


def tab_sqrt(x):
    r = np.sqrt(x)
    return r, 0.5 / r, -0.25 / r**3, 0.375 / r**5


def tab_arcosh(x):
    # valid for x > 1
    w = x * x - 1.0
    f1 = w**-0.5
    return np.arccosh(x), f1, -x * w**-1.5, (2.0 * x * x + 1.0) * w**-2.5


def tab_reciprocal(x):
    r = 1.0 / x
    return r, -r * r, 2.0 * r**3, -6.0 * r**4
