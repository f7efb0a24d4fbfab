"""Assembly of the initial surface as a chart atlas.

A stack of N nearly flat tori is bridged by N-1 classes of catenoidal necks
centered on staggered rectangular lattices.  Each surface point is addressed
by a region tag, ("T", i) for a toral chart or ("K", i) for a catenoidal
one, plus two local coordinates:

* ("K", i): cylinder coordinates (t, theta) with |t| <= a_i; the chart is
  x0 + tau_i (cosh t cos theta, cosh t sin theta, t / cosh ... )  -- precisely
  center + tau_i*(cosh t cos theta, cosh t sin theta, t), pushed to the
  sphere by the covering map.
* ("T", i): rectangle coordinates (x, y) in [-X, X] x [-Y, Y] minus discs of
  radius tau_j cosh b_j around the drilled sites, with the graph height
  interpolating between the plateau z_i and the neck profile
  tau * arcosh(r / tau) across the annulus R < r < 2R.

Adjacent charts literally coincide on their overlaps (the graph region
below r = R *is* the bent half-catenoid), which the tests verify to 1e-10.

The conformal factor rho equals m far from the necks and 1/r near them
(r the horizontal chart distance to the neck axis), glued by a fixed cutoff;
on a catenoid chart rho = sech(t) / tau_i exactly.  chi = rho^2 g turns
necks into unit cylinders and toral regions into nearly flat rectangles of
size ~ k x l.
"""

import numpy as np
from dataclasses import dataclass

from .jets import (Jet3, jet_variable, jet_constant, tab_cos, tab_sin,
                   tab_cosh, tab_sqrt, tab_arcosh)
from .cutoffs import Cutoff
from .charts import SQRT2, phi_map, phi_ambient_jets, group_enumerate
from .balancing import StackConfig, BalancedLayout, stack_layout

__all__ = ["ChartPoint", "SurfaceAtlas", "height_profile", "reparam_lambda"]


@dataclass(frozen=True)
class ChartPoint:
    """A point on the surface: region tag plus local coordinates."""

    region: tuple
    u: float
    v: float


def height_profile(z_cat, z_tor, R, tau, r):
    """Graph height bridging a neck at z_cat to the plateau z_tor.

    Equals z_cat + sgn(z_tor - z_cat) * tau * arcosh(r/tau) near the neck,
    z_tor beyond r = 2R, with cutoffs splicing the two across [R, 2R].
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < tau):
        raise ValueError("radius below the waist radius")
    up = Cutoff(R, 2.0 * R)(r)
    down = Cutoff(2.0 * R, R)(r)
    sgn = 1.0 if z_tor >= z_cat else -1.0
    with np.errstate(invalid="ignore"):
        arc = np.where(r > tau, np.arccosh(np.maximum(r / tau, 1.0)), 0.0)
    return z_cat + (z_tor - z_cat) * up + sgn * tau * arc * down


def reparam_lambda(layout: BalancedLayout, i, t):
    """Neck reparametrization matching offset necks to their zeta=0 shape.

    Identity when zeta = 0; maps +-a_i to +-abar_i and is strictly monotone.
    """
    tau, a = layout.tau[i - 1], layout.a[i - 1]
    tau_b, a_b = layout.tau_bar[i - 1], layout.a_bar[i - 1]
    lm = layout.l * layout.m
    t = np.asarray(t, dtype=float)
    r = tau * np.cosh(t)
    inner = Cutoff(1.0 / (20.0 * lm), 1.0 / (30.0 * lm))(r)
    outer = Cutoff(1.0 / (30.0 * lm), 1.0 / (20.0 * lm))(r)
    r_tilde = tau_b * np.cosh(a_b / a * np.arccosh(r / tau)) * inner + r * outer
    return np.sign(t) * np.arccosh(np.maximum(r_tilde / tau_b, 1.0))


class SurfaceAtlas:
    """The atlas of one stacked surface, with all per-region geometry."""

    def __init__(self, cfg: StackConfig, layout: BalancedLayout = None,
                 b_underline=5.0):
        self.cfg = cfg
        self.layout = layout if layout is not None else \
            stack_layout(cfg, b_underline=b_underline)
        k, l, m = cfg.k, cfg.l, cfg.m
        self.R = 1.0 / (10.0 * l * m)
        self.X = np.pi / (SQRT2 * k * m)
        self.Y = np.pi / (SQRT2 * l * m)
        self._group = None
        lm = l * m
        self._rho_cut = Cutoff(1.0 / (5.0 * lm), 1.0 / (10.0 * lm))
        # z windows for the conformal-factor lattice sum
        zc = self.layout.z_cat
        self._zwin = [(zc[i - 2] if i >= 2 else -np.pi / 5.0,
                       zc[i] if i <= cfg.N - 2 else np.pi / 5.0)
                      for i in range(1, cfg.N)]

    # -- bookkeeping -------------------------------------------------------

    @property
    def group(self):
        if self._group is None:
            self._group = group_enumerate(self.cfg.k, self.cfg.l, self.cfg.m)
        return self._group

    def site(self, i):
        """Axis position of neck class i (1-based)."""
        return np.array([(i - 1) * self.X, (i - 1) * self.Y])

    def tor_offset(self, i):
        N = self.cfg.N
        if i == 1:
            return np.zeros(2)
        if i == N:
            return np.array([(N - 2) * self.X, (N - 2) * self.Y])
        return np.array([(2 * i - 3) * self.X / 2.0, (2 * i - 3) * self.Y / 2.0])

    def drills(self, i):
        """Drilled sites of torus i as (local center, neck class) pairs."""
        N = self.cfg.N
        if i == 1:
            return [(np.zeros(2), 1)]
        if i == N:
            return [(np.zeros(2), N - 1)]
        return [(np.array([-self.X / 2.0, -self.Y / 2.0]), i - 1),
                (np.array([self.X / 2.0, self.Y / 2.0]), i)]

    def orient_sign(self, region):
        """Plateau orientation sign: +1 on the top torus, alternating down."""
        kind, i = region
        layer = i + 1 if kind == "K" else i
        return float((-1) ** ((self.cfg.N - layer) % 2))

    def hole_radius(self, j):
        """Radius of the disc excised from a torus around neck class j."""
        return self.layout.tau[j - 1] * np.cosh(self.layout.b[j - 1])

    # -- chart jets --------------------------------------------------------

    def cat_chart_jets(self, i, t, th):
        t = np.broadcast_arrays(np.asarray(t, float), np.asarray(th, float))[0]
        th = np.broadcast_to(np.asarray(th, float), t.shape)
        tau = self.layout.tau[i - 1]
        x0, y0 = self.site(i)
        tj = jet_variable(t, 0)
        thj = jet_variable(th, 1)
        ch = tj.apply(tab_cosh)
        xj = (tau * ch * thj.apply(tab_cos)) + x0
        yj = (tau * ch * thj.apply(tab_sin)) + y0
        zj = tau * tj + self.layout.z_cat[i - 1]
        return xj, yj, zj

    def _bend_jet(self, rj: Jet3, tau, dz):
        """Jet of the graph-height bend; dz = z_cat - z_tor, support r < 2R."""
        R = self.R
        up = Cutoff(R, 2.0 * R)
        down = Cutoff(2.0 * R, R)
        sgn = -1.0 if dz >= 0 else 1.0  # sgn(z_tor - z_cat)
        arc = (rj * (1.0 / tau)).apply(tab_arcosh)
        return dz * (1.0 - rj.apply(up.table)) \
            + (sgn * tau) * arc * rj.apply(down.table)

    def tor_height_jets(self, i, x, y):
        """Jet of the graph height of torus i in its local coordinates."""
        x = np.asarray(x, float)
        y = np.broadcast_to(np.asarray(y, float), x.shape)
        x = np.broadcast_to(x, y.shape)
        xj = jet_variable(x, 0)
        yj = jet_variable(y, 1)
        hj = jet_constant(np.full(x.shape, self.layout.z_tori[i - 1]))
        for center, j in self.drills(i):
            dxj = xj - center[0]
            dyj = yj - center[1]
            r2 = dxj * dxj + dyj * dyj
            r = np.sqrt(r2.val)
            near = r < 2.0 * self.R
            if not np.any(near):
                continue
            tau = self.layout.tau[j - 1]
            if np.any(r[near] <= tau):
                raise ValueError("toral chart point inside the excised disc")
            rj = r2.apply(tab_sqrt)
            bend = self._bend_jet(rj, tau,
                                  self.layout.z_cat[j - 1] - self.layout.z_tori[i - 1])
            mask = near.astype(float)
            hj = hj + bend * mask
        return xj, yj, hj

    def chart_jets(self, region, u, v):
        """Chart-variable jets (x, y, z) for any region."""
        kind, i = region
        if kind == "K":
            return self.cat_chart_jets(i, u, v)
        xj, yj, hj = self.tor_height_jets(i, u, v)
        off = self.tor_offset(i)
        return xj + off[0], yj + off[1], hj

    def ambient_jets(self, region, u, v):
        """Ambient 4-component jets of the immersion over region coordinates."""
        xj, yj, zj = self.chart_jets(region, u, v)
        return phi_ambient_jets(xj, yj, zj)

    def coord_point(self, region, u, v):
        """Pre-covering-map coordinates (..., 3) of chart points."""
        xj, yj, zj = self.chart_jets(region, u, v)
        return np.stack([xj.val, yj.val, zj.val], axis=-1)

    def chart_eval(self, region, u, v):
        """(coordinate point, ambient point) for chart coordinates in region."""
        self.check_domain(region, u, v)
        p = self.coord_point(region, u, v)
        return p, phi_map(p)

    def check_domain(self, region, u, v):
        kind, i = region
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        if kind == "K":
            if i < 1 or i > self.cfg.N - 1:
                raise ValueError("no such catenoidal region")
            if np.any(np.abs(u) > self.layout.a[i - 1] + 1e-12):
                raise ValueError("catenoid parameter |t| exceeds a_i")
        else:
            if i < 1 or i > self.cfg.N:
                raise ValueError("no such toral region")
            if np.any(np.abs(u) > self.X + 1e-12) or np.any(np.abs(v) > self.Y + 1e-12):
                raise ValueError("toral coordinates outside the rectangle")
            for center, j in self.drills(i):
                r = np.hypot(u - center[0], v - center[1])
                if np.any(r < self.hole_radius(j) - 1e-12):
                    raise ValueError("toral coordinates inside an excised disc")

    # -- conformal factor --------------------------------------------------

    def rho_hat(self, pts):
        """Conformal factor at coordinate points (..., 3) by the lattice sum."""
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        out = np.full(x.shape, float(self.cfg.m))
        X2, Y2 = 2.0 * self.X, 2.0 * self.Y
        for i in range(1, self.cfg.N):
            par = (i + 1) % 2
            cx, cy = par * self.X, par * self.Y
            # nearest lattice translate of the class-i sites
            dx = x - cx - X2 * np.round((x - cx) / X2)
            dy = y - cy - Y2 * np.round((y - cy) / Y2)
            r = np.hypot(dx, dy)
            zlo, zhi = self._zwin[i - 1]
            mask = (z >= zlo) & (z <= zhi) & (r < 1.0 / (5.0 * self.cfg.l * self.cfg.m))
            if np.any(mask):
                rm = np.maximum(r, 1e-300)
                out = out + np.where(mask,
                                     (1.0 / rm - self.cfg.m) * self._rho_cut(rm),
                                     0.0)
        return out

    def rho(self, region, u, v):
        """Conformal factor on chart points; exact sech profile on necks."""
        kind, i = region
        if kind == "K":
            t = np.asarray(u, float)
            val = 1.0 / (self.layout.tau[i - 1] * np.cosh(t))
            return np.broadcast_to(val, np.broadcast(t, np.asarray(v)).shape).copy()
        return self.rho_hat(self.coord_point(region, u, v))

    def chi_metric(self, region, u, v):
        """Uniformizing metric chi = rho^2 g on chart coordinates, (..., 2, 2)."""
        from .extrinsic import jet_eval, first_fundamental
        jet = jet_eval(self, region, u, v)
        g = first_fundamental(jet)
        rho = self.rho(region, u, v)
        return g * (rho * rho)[..., None, None]

    # -- orientation and overlap ------------------------------------------

    def orientation_ref(self, region, u, v):
        """Approximate ambient normal used only to fix the sign of the exact one."""
        kind, i = region
        sign = self.orient_sign(region)
        xj, yj, zj = self.chart_jets(region, u, v)
        FJ = phi_ambient_jets(xj, yj, zj)
        d1 = np.stack([c.d1 for c in FJ], axis=-1)  # (..., 2, 4)
        if kind == "K":
            t = np.broadcast_to(np.asarray(u, float), xj.val.shape)
            th = np.broadcast_to(np.asarray(v, float), xj.val.shape)
            n_chart = np.stack([-np.cos(th) / np.cosh(t),
                                -np.sin(th) / np.cosh(t), np.tanh(t)], axis=-1)
        else:
            hx, hy = zj.d1[..., 0], zj.d1[..., 1]
            n_chart = np.stack([-hx, -hy, np.ones_like(hx)], axis=-1)
        # push the chart vector through the covering map differential
        p = np.stack([xj.val, yj.val, zj.val], axis=-1)
        dphi = _phi_differential(p)
        ref = np.einsum("...ij,...j->...i", dphi, n_chart)
        return sign * ref

    def overlap_to_torus(self, j, t, th, torus_i):
        """Map neck-chart points (t, theta) on class j into torus i's chart."""
        tau = self.layout.tau[j - 1]
        r = tau * np.cosh(np.asarray(t, float))
        site = self.site(j) - self.tor_offset(torus_i)
        x = site[0] + r * np.cos(th)
        y = site[1] + r * np.sin(th)
        return x, y

    def torus_to_overlap(self, torus_i, x, y, j):
        """Map torus-chart points near neck class j into its (t, theta) chart."""
        site = self.site(j) - self.tor_offset(torus_i)
        dx = np.asarray(x, float) - site[0]
        dy = np.asarray(y, float) - site[1]
        r = np.hypot(dx, dy)
        tau = self.layout.tau[j - 1]
        tmag = np.arccosh(np.maximum(r / tau, 1.0))
        sgn = 1.0 if torus_i == j + 1 else -1.0
        return sgn * tmag, np.arctan2(dy, dx)

    def locate(self, pts):
        """Fold coordinate points (..., 3) onto fundamental chart coordinates.

        Returns (region, u, v) for a single point; prefers the neck chart for
        points within the transition radius of an axis.
        """
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 1:
            raise ValueError("locate takes a single coordinate point")
        x, y, z = pts
        X2, Y2 = 2.0 * self.X, 2.0 * self.Y
        best = None
        for j in range(1, self.cfg.N):
            sx, sy = self.site(j)
            dx = x - sx - X2 * np.round((x - sx) / X2)
            dy = y - sy - Y2 * np.round((y - sy) / Y2)
            r = np.hypot(dx, dy)
            tau = self.layout.tau[j - 1]
            if r <= self.R and r > tau:
                t = np.arccosh(r / tau)
                zc = self.layout.z_cat[j - 1]
                for sgn in (1.0, -1.0):
                    if abs(zc + sgn * tau * t - z) < 1e-9 + tau * 1e-6:
                        return ("K", j), sgn * t, np.arctan2(dy, dx)
        i = int(np.argmin(np.abs(self.layout.z_tori - z))) + 1
        off = self.tor_offset(i)
        lx = x - off[0] - X2 * np.round((x - off[0]) / X2)
        ly = y - off[1] - Y2 * np.round((y - off[1]) / Y2)
        return ("T", i), lx, ly


def _phi_differential(p):
    """Differential of the covering map as (..., 4, 3) matrices."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    zq = z + np.pi / 4
    sz, cz = np.sin(zq), np.cos(zq)
    cx, sx = np.cos(SQRT2 * x), np.sin(SQRT2 * x)
    cy, sy = np.cos(SQRT2 * y), np.sin(SQRT2 * y)
    d = np.zeros(p.shape[:-1] + (4, 3))
    d[..., 0, 0] = -SQRT2 * sx * sz
    d[..., 1, 0] = SQRT2 * cx * sz
    d[..., 0, 2] = cx * cz
    d[..., 1, 2] = sx * cz
    d[..., 2, 1] = -SQRT2 * sy * cz
    d[..., 3, 1] = SQRT2 * cy * cz
    d[..., 2, 2] = -cy * sz
    d[..., 3, 2] = -sy * sz
    return d
