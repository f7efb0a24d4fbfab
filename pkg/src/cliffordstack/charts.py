"""Coordinate infrastructure on the 3-sphere.

The covering map sends (x, y, z) to

    (e^{i sqrt2 x} sin(z + pi/4), e^{i sqrt2 y} cos(z + pi/4))

viewed in R^4 as (q1 + i q2, q3 + i q4).  Horizontal planes map to
constant-mean-curvature tori coaxial with the square torus T = {z = 0},
whose axis circles are C1 = {q3 = q4 = 0} and C2 = {q1 = q2 = 0}.  x and y
are periodic with period sqrt2*pi, and the map degenerates onto the axis
circles at z = +-pi/4.

The pullback of the round metric is  g_E + sin(2z)(dx^2 - dy^2).

The distinguished Killing field is the rotation toward C2 along the great
circle fixed by both coordinate reflections; in ambient coordinates it is
the linear field (q3, q4, -q1, -q2), and in the chart it has components

    ( -cot(z+pi/4) sin(sqrt2 x) cos(sqrt2 y) / sqrt2,
       tan(z+pi/4) cos(sqrt2 x) sin(sqrt2 y) / sqrt2,
       cos(sqrt2 x) cos(sqrt2 y) ).
"""

import numpy as np
from dataclasses import dataclass, field

from .jets import Jet3, tab_sin, tab_cos

__all__ = [
    "SQRT2",
    "Z_GUARD",
    "phi_map",
    "phi_ambient_jets",
    "pullback_metric",
    "killing_field",
    "killing_field_ambient",
    "SymmetryElement",
    "group_enumerate",
]

SQRT2 = np.sqrt(2.0)
#: points this close to z = +-pi/4 are rejected where the chart degenerates
Z_GUARD = np.pi / 4 - 1e-6


def _check_z(z):
    if np.any(np.abs(z) >= Z_GUARD):
        raise ValueError("z too close to +-pi/4: chart degenerates on the axis circles")


def phi_map(p):
    """Covering map R^3 -> S^3, p = (..., 3) -> unit vectors (..., 4)."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    zq = z + np.pi / 4
    sz, cz = np.sin(zq), np.cos(zq)
    return np.stack([np.cos(SQRT2 * x) * sz, np.sin(SQRT2 * x) * sz,
                     np.cos(SQRT2 * y) * cz, np.sin(SQRT2 * y) * cz], axis=-1)


def phi_ambient_jets(xj: Jet3, yj: Jet3, zj: Jet3):
    """Push chart-variable jets through the covering map.

    Returns the four ambient components as Jet3 objects.
    """
    zq = zj + np.pi / 4
    sz = zq.apply(tab_sin)
    cz = zq.apply(tab_cos)
    ax = (SQRT2 * xj)
    ay = (SQRT2 * yj)
    return [
        ax.apply(tab_cos) * sz,
        ax.apply(tab_sin) * sz,
        ay.apply(tab_cos) * cz,
        ay.apply(tab_sin) * cz,
    ]


def pullback_metric(p):
    """Pullback of the round metric through the covering map, as (..., 3, 3)."""
    p = np.asarray(p, dtype=float)
    s2z = np.sin(2.0 * p[..., 2])
    g = np.zeros(p.shape[:-1] + (3, 3))
    g[..., 0, 0] = 1.0 + s2z
    g[..., 1, 1] = 1.0 - s2z
    g[..., 2, 2] = 1.0
    return g


def killing_field(p):
    """Chart components of the vertical-translation-like Killing field."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    _check_z(z)
    zq = z + np.pi / 4
    kx = -np.sin(SQRT2 * x) * np.cos(SQRT2 * y) / (SQRT2 * np.tan(zq))
    ky = np.tan(zq) * np.cos(SQRT2 * x) * np.sin(SQRT2 * y) / SQRT2
    kz = np.cos(SQRT2 * x) * np.cos(SQRT2 * y)
    return np.stack([kx, ky, kz], axis=-1)


def killing_field_ambient(q):
    """The same Killing field as a linear vector field on R^4.

    Rotation in the (q1, q3) plane: the generator of rotation along the
    great circle {q2 = q4 = 0}, which both coordinate reflections fix.
    The chart components above are its pullback through the covering map.
    """
    q = np.asarray(q, dtype=float)
    zero = np.zeros_like(q[..., 0])
    return np.stack([q[..., 2], zero, -q[..., 0], zero], axis=-1)


def _rot_block(theta, i, j):
    mat = np.eye(4)
    c, s = np.cos(theta), np.sin(theta)
    mat[i, i] = c
    mat[j, j] = c
    mat[i, j] = -s
    mat[j, i] = s
    return mat


@dataclass(frozen=True)
class SymmetryElement:
    """One element of the finite symmetry group.

    ``matrix`` acts on ambient points; the chart action is the affine map
    p -> chart_linear @ p + chart_shift, and the two actions commute with
    the covering map wherever both are defined.  All elements preserve the
    two sides of the surfaces built here, so the induced action on normal
    functions is plain composition.
    """

    word: str
    matrix: np.ndarray = field(repr=False)
    chart_linear: np.ndarray = field(repr=False)
    chart_shift: np.ndarray = field(repr=False)

    def act_ambient(self, q):
        return np.asarray(q, dtype=float) @ self.matrix.T

    def act_chart(self, p):
        return np.asarray(p, dtype=float) @ self.chart_linear.T + self.chart_shift


def group_enumerate(k, l, m):
    """The finite quotient of the symmetry group acting on the lattice.

    Generated by rotation by 2pi/(km) about C2, rotation by 2pi/(lm) about
    C1, and the two coordinate reflections; the quotient by full rotations
    has order 4*(km)*(lm).  Rotations act on the chart as translations by
    sqrt2*pi/(km) in x and sqrt2*pi/(lm) in y; the reflections flip x or y.
    """
    if m < 1 or k < 1 or l < 1:
        raise ValueError("k, l, m must be positive")
    km, lm = k * m, l * m
    out = []
    for i in range(km):
        rot_x = _rot_block(2 * np.pi * i / km, 0, 1)
        for j in range(lm):
            rot = rot_x @ _rot_block(2 * np.pi * j / lm, 2, 3)
            for fx in (1, -1):
                for fy in (1, -1):
                    mat = rot @ np.diag([1.0, float(fx), 1.0, float(fy)])
                    lin = np.diag([float(fx), float(fy), 1.0])
                    shift = np.array([SQRT2 * np.pi * i / km,
                                      SQRT2 * np.pi * j / lm, 0.0])
                    word = f"Rx^{i} Ry^{j}" + (" X" if fx < 0 else "") \
                        + (" Y" if fy < 0 else "")
                    out.append(SymmetryElement(word.strip(), mat, lin, shift))
    return out
