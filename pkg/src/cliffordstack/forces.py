"""Killing-field flux through region boundaries, and its parameter algebra.

The force of a region is the line integral of <K, eta> along its boundary,
with K the distinguished Killing field and eta the outward unit conormal.
Region i consists of torus i together with the adjoining half-necks down to
their waists, so its boundary is the waist circles plus the rectangle edges
of the fundamental cell.  On minimal pieces the force is conserved, which
fixes the balanced waist radii; at finite parameters the forces and the
dislocations respond linearly through the matrices Z and Xi, and those
responses drive the outer parameter updates.

Waist circles are integrated by the trapezoid rule (spectrally accurate for
smooth periodic integrands) and rectangle edges by composite Gauss-Legendre
panels, each with doubling until two refinements agree to tolerance.
"""

import numpy as np
from dataclasses import dataclass, field

from .charts import killing_field_ambient
from .extrinsic import jet_eval, _normal_with_jets, _dot

__all__ = [
    "CurveSpec",
    "RegionBoundary",
    "region_boundary",
    "flux",
    "region_fluxes",
    "dislocations",
    "build_matrices",
    "fd_residuals",
    "QuadratureError",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurveSpec:
    """One boundary curve in chart coordinates.

    ``chart(s)`` maps parameters in [0, 1] to (u, v) arrays; ``velocity(s)``
    gives (du/ds, dv/ds) (central differences as fallback); ``outward`` is
    the chart direction whose tangential projection gives the outward
    conormal; ``periodic`` selects trapezoid versus panel quadrature.
    """

    region: tuple
    chart: callable = field(repr=False)
    outward: tuple = (1.0, 0.0)
    periodic: bool = False
    velocity: callable = field(default=None, repr=False)


@dataclass
class RegionBoundary:
    index: int
    curves: list


def region_boundary(atlas, i):
    """Boundary curves of region i: waist circles plus rectangle edges."""
    N = atlas.cfg.N
    curves = []
    necks = []
    if i >= 2:
        necks.append((i - 1, -1.0))   # neck below, outward is decreasing t
    if i <= N - 1:
        necks.append((i, 1.0))        # neck above, outward is increasing t
    for j, sgn in necks:
        def circle(s, j=j):
            th = 2 * np.pi * np.asarray(s)
            return np.zeros_like(th), th
        curves.append(CurveSpec(region=("K", j), chart=circle,
                                outward=(sgn, 0.0), periodic=True,
                                velocity=lambda s: (0.0, 2 * np.pi)))
    X, Y = atlas.X, atlas.Y
    edges = [
        (lambda s: (np.full_like(np.asarray(s, float), X),
                    Y * (2 * np.asarray(s) - 1)), (0.0, 2 * Y), (1.0, 0.0)),
        (lambda s: (np.full_like(np.asarray(s, float), -X),
                    Y * (2 * np.asarray(s) - 1)), (0.0, 2 * Y), (-1.0, 0.0)),
        (lambda s: (X * (2 * np.asarray(s) - 1),
                    np.full_like(np.asarray(s, float), Y)), (2 * X, 0.0), (0.0, 1.0)),
        (lambda s: (X * (2 * np.asarray(s) - 1),
                    np.full_like(np.asarray(s, float), -Y)), (2 * X, 0.0), (0.0, -1.0)),
    ]
    for chart, vel, outward in edges:
        curves.append(CurveSpec(region=("T", i), chart=chart, outward=outward,
                                periodic=False,
                                velocity=lambda s, vel=vel: vel))
    return RegionBoundary(index=i, curves=curves)


def _curve_integrand(atlas, curve: CurveSpec, s, perturbation=None,
                     killing=None):
    """<K, eta> |c'(s)| at curve parameters s."""
    if killing is None:
        killing = killing_field_ambient
    u, v = curve.chart(s)
    if curve.velocity is not None:
        du_ds, dv_ds = curve.velocity(s)
        du_ds = np.broadcast_to(np.asarray(du_ds, float), np.shape(u))
        dv_ds = np.broadcast_to(np.asarray(dv_ds, float), np.shape(u))
    else:
        h = 1e-6
        u2, v2 = curve.chart(np.asarray(s) + h)
        u1, v1 = curve.chart(np.asarray(s) - h)
        du_ds = (np.asarray(u2) - np.asarray(u1)) / (2 * h)
        dv_ds = (np.asarray(v2) - np.asarray(v1)) / (2 * h)
    jet = jet_eval(atlas, curve.region, u, v)
    ref = atlas.orientation_ref(curve.region, u, v)
    if perturbation is None:
        pos = jet.pos
        d1 = jet.d1
    else:
        from .extrinsic import perturbed_position_jets
        uj, duj, _ = perturbation.jet2(curve.region, u, v)
        pos, d1 = perturbed_position_jets(jet, uj, duj, ref)
    tang = du_ds[..., None] * d1[..., 0, :] + dv_ds[..., None] * d1[..., 1, :]
    speed = np.sqrt(_dot(tang, tang))
    that = tang / speed[..., None]
    w = curve.outward[0] * d1[..., 0, :] + curve.outward[1] * d1[..., 1, :]
    eta = w - _dot(w, that)[..., None] * that
    eta = eta / np.sqrt(_dot(eta, eta))[..., None]
    K = killing(pos)
    return _dot(K, eta) * speed


def flux(atlas, boundary, perturbation=None, tol=1e-10, max_doublings=9,
         killing=None):
    """Total outward Killing flux through a boundary (or a single curve).

    Each curve is refined by doubling until two successive quadratures agree
    to ``tol`` (relative to max(1, |value|)); disagreement raises.  The
    default field is the distinguished ambient Killing field; ``killing``
    overrides it (e.g. a translation field for flat-space checks).
    """
    curves = boundary.curves if isinstance(boundary, RegionBoundary) \
        else [boundary]
    total = 0.0
    for curve in curves:
        if curve.periodic:
            n = 256
            prev = None
            for _ in range(max_doublings):
                s = np.arange(n) / n
                val = float(np.mean(_curve_integrand(atlas, curve, s,
                                                     perturbation, killing)))
                if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
                    break
                prev, n = val, 2 * n
            else:
                raise QuadratureError("circle quadrature did not settle")
            total += val
        else:
            panels = 8
            nodes, weights = np.polynomial.legendre.leggauss(16)
            prev = None
            for _ in range(max_doublings):
                edges_ = np.linspace(0.0, 1.0, panels + 1)
                mid = 0.5 * (edges_[:-1] + edges_[1:])
                half = 0.5 / panels
                s = (mid[:, None] + half * nodes[None, :]).ravel()
                w = np.broadcast_to(weights * half, (panels, 16)).ravel()
                vals = _curve_integrand(atlas, curve, s, perturbation,
                                        killing)
                val = float(np.sum(vals * w))
                if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
                    break
                prev, panels = val, 2 * panels
            else:
                raise QuadratureError("edge quadrature did not settle")
            total += val
    return total


def region_fluxes(atlas, perturbation=None, tol=1e-10):
    """Force vector (one entry per region)."""
    return np.array([flux(atlas, region_boundary(atlas, i), perturbation, tol)
                     for i in range(1, atlas.cfg.N + 1)])


def dislocations(cfg, layout):
    """Relative vertical offsets of the neck pairs at each intermediate torus."""
    N = cfg.N
    D = np.zeros(N)
    tx = layout.tau * cfg.xi
    for i in range(2, N):
        D[i - 1] = 0.5 * (tx[i - 1] - tx[i - 2])
    return D


def build_matrices(c):
    """Force-response matrix Z and dislocation-response matrix Xi.

    ``c`` is the solved ratio vector (c_1 = 1, ..., c_{N-1}); entries with
    index outside 1..N-1 are zero.  At N = 2 the first row of Xi carries its
    two coincident entries summed, giving the 1x1 matrix [2].
    """
    c = np.asarray(c, dtype=float)
    N = len(c) + 1
    n1 = N - 1

    def cj(j):
        return c[j - 1] if 1 <= j <= N - 1 else 0.0

    Z = np.zeros((n1, n1))
    for i in range(1, N):
        Z[i - 1, 0] += 8 * np.pi * cj(i)
        for jj, val in ((i - 1, -cj(i - 1)), (i, cj(i - 1) + cj(i + 1)),
                        (i + 1, -cj(i + 1))):
            if 2 <= jj <= N - 1:
                Z[i - 1, jj - 1] += val
    Xi = np.zeros((n1, n1))
    Xi[0, 0] += 1.0
    Xi[0, n1 - 1] += cj(N - 1)
    for i in range(2, N):
        Xi[i - 1, i - 2] += -cj(i - 1)
        Xi[i - 1, i - 1] += cj(i)
    return Z, Xi


def fd_residuals(cfg, layout, F, D):
    """Deviation of measured forces/dislocations from the linear response.

    Returns (difference-row residuals, end-sum residual): the first is
    (k l m^2 / 2 pi tau_1)(F_i - F_{i+1}) + (4 pi / tau_1)(D_i + D_{i+1})
    - (Z zeta)_i, the second (k l m^2 / 8 pi^2 tau_1)(F_1 + F_N) - xi_1
    - c_{N-1} xi_{N-1}.
    """
    k, l, m = cfg.k, cfg.l, cfg.m
    tau1 = layout.tau[0]
    Z, _ = build_matrices(layout.c)
    F = np.asarray(F, dtype=float)
    D = np.asarray(D, dtype=float)
    diff = (k * l * m * m / (2 * np.pi * tau1)) * (F[:-1] - F[1:]) \
        + (4 * np.pi / tau1) * (D[:-1] + D[1:]) - Z @ cfg.zeta
    end = (k * l * m * m / (8 * np.pi**2 * tau1)) * (F[0] + F[-1]) \
        - cfg.xi[0] - layout.c[-1] * cfg.xi[-1]
    return diff, float(end)
