"""Fundamental forms, mean curvature, and normal perturbations.

All geometry is computed from analytic chart 3-jets: the extra derivative
order is exactly what is needed for the 2-jet of the unit normal, so the
mean curvature of a normal graph is exact to rounding.  The ambient space is
either the unit 3-sphere in R^4 (the normal exponential map is the great
circle cos(u) F + sin(u) nu, and the Ricci term contributes +2 to the
Jacobi operator) or flat R^3 (straight-line offsets, no ambient term),
which covers the model catenoid checks.

The unit normal is the normalized Hodge dual of (F, F_1, F_2) (sphere) or
the cross product F_1 x F_2 (flat); its chart derivatives come from the
trilinearity of the dual, and its sign is fixed against a reference that is
never orthogonal to the true normal.
"""

import numpy as np
from dataclasses import dataclass

__all__ = [
    "GeometryJet",
    "ExtrinsicData",
    "DecayNormSpec",
    "jet_eval",
    "flat_jet",
    "first_fundamental",
    "extrinsic",
    "perturbed_extrinsic",
    "jacobi_apply",
    "weighted_norm",
    "mc_deficit_field",
]


@dataclass
class GeometryJet:
    """Packed position and chart derivatives of an immersion.

    pos is (..., C), d1 (..., 2, C), d2 (..., 2, 2, C), d3 (..., 2, 2, 2, C)
    with C = 4 for the sphere, 3 for flat space.
    """

    pos: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    ambient: str = "sphere"  # or "flat"


def jet_eval(atlas, region, u, v):
    """Exact 3-jet of the immersion at chart coordinates of a region."""
    comps = atlas.ambient_jets(region, u, v)
    pos = np.stack([c.val for c in comps], axis=-1)
    d1 = np.stack([c.d1 for c in comps], axis=-1)
    d2 = np.stack([c.d2 for c in comps], axis=-1)
    d3 = np.stack([c.d3 for c in comps], axis=-1)
    return GeometryJet(pos, d1, d2, d3,
                       "sphere" if len(comps) == 4 else "flat")


def flat_jet(xj, yj, zj):
    """Pack chart jets of a surface in flat R^3."""
    pos = np.stack([xj.val, yj.val, zj.val], axis=-1)
    d1 = np.stack([xj.d1, yj.d1, zj.d1], axis=-1)
    d2 = np.stack([xj.d2, yj.d2, zj.d2], axis=-1)
    d3 = np.stack([xj.d3, yj.d3, zj.d3], axis=-1)
    return GeometryJet(pos, d1, d2, d3, "flat")


@dataclass
class ExtrinsicData:
    """First/second fundamental forms and derived scalars at sample points."""

    g: np.ndarray       # (..., 2, 2)
    nu: np.ndarray      # (..., C)
    A: np.ndarray       # (..., 2, 2), scalar form w.r.t. nu
    H: np.ndarray       # (...,)
    normA2: np.ndarray  # (...,)
    pos: np.ndarray     # (..., C)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _dual4(a, b, c):
    """Vector orthogonal to a, b, c in R^4 (generalized cross product)."""
    out = np.empty_like(a)
    idx = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    sgn = [1.0, -1.0, 1.0, -1.0]
    for i, ((p, q, r), s) in enumerate(zip(idx, sgn)):
        out[..., i] = s * (
            a[..., p] * (b[..., q] * c[..., r] - b[..., r] * c[..., q])
            - a[..., q] * (b[..., p] * c[..., r] - b[..., r] * c[..., p])
            + a[..., r] * (b[..., p] * c[..., q] - b[..., q] * c[..., p]))
    return out


def _cross3(a, b):
    return np.cross(a, b)


def first_fundamental(jet: GeometryJet):
    return np.einsum("...ak,...bk->...ab", jet.d1, jet.d1)


def _inv2(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1]
    inv[..., 1, 1] = g[..., 0, 0]
    inv[..., 0, 1] = -g[..., 0, 1]
    inv[..., 1, 0] = -g[..., 1, 0]
    return inv / det[..., None, None], det


def _normal_with_jets(jet: GeometryJet, ref):
    """Unit normal and its chart 1- and 2-jets, oriented along ``ref``.

    Uses the trilinearity of the dual for first derivatives and the exact
    Weingarten-type relations implicitly through plain differentiation of
    the (unnormalized) dual, so third position derivatives are consumed.
    """
    if jet.ambient == "sphere":
        a, b, c = jet.pos, jet.d1[..., 0, :], jet.d1[..., 1, :]
        da = jet.d1
        db = jet.d2[..., :, 0, :]
        dc = jet.d2[..., :, 1, :]
        dab = jet.d2
        dbb = jet.d3[..., :, :, 0, :]
        dcc = jet.d3[..., :, :, 1, :]

        w = _dual4(a, b, c)
        dw = np.empty(jet.d1.shape)
        for i in range(2):
            dw[..., i, :] = (_dual4(da[..., i, :], b, c)
                             + _dual4(a, db[..., i, :], c)
                             + _dual4(a, b, dc[..., i, :]))
        d2w = np.empty(jet.d2.shape)
        for i in range(2):
            for j in range(2):
                d2w[..., i, j, :] = (
                    _dual4(dab[..., i, j, :], b, c)
                    + _dual4(a, dbb[..., i, j, :], c)
                    + _dual4(a, b, dcc[..., i, j, :])
                    + _dual4(da[..., i, :], db[..., j, :], c)
                    + _dual4(da[..., i, :], b, dc[..., j, :])
                    + _dual4(da[..., j, :], db[..., i, :], c)
                    + _dual4(a, db[..., i, :], dc[..., j, :])
                    + _dual4(da[..., j, :], b, dc[..., i, :])
                    + _dual4(a, db[..., j, :], dc[..., i, :]))
    else:
        b, c = jet.d1[..., 0, :], jet.d1[..., 1, :]
        db = jet.d2[..., :, 0, :]
        dc = jet.d2[..., :, 1, :]
        dbb = jet.d3[..., :, :, 0, :]
        dcc = jet.d3[..., :, :, 1, :]
        w = _cross3(b, c)
        dw = np.empty(jet.d1.shape)
        for i in range(2):
            dw[..., i, :] = _cross3(db[..., i, :], c) + _cross3(b, dc[..., i, :])
        d2w = np.empty(jet.d2.shape)
        for i in range(2):
            for j in range(2):
                d2w[..., i, j, :] = (
                    _cross3(dbb[..., i, j, :], c) + _cross3(b, dcc[..., i, j, :])
                    + _cross3(db[..., i, :], dc[..., j, :])
                    + _cross3(db[..., j, :], dc[..., i, :]))

    # normalize: nu = w * s, s = (w.w)^(-1/2), with jets of s
    q = _dot(w, w)
    dq = 2.0 * np.einsum("...ik,...k->...i", dw, w)
    d2q = 2.0 * (np.einsum("...ijk,...k->...ij", d2w, w)
                 + np.einsum("...ik,...jk->...ij", dw, dw))
    s = q**-0.5
    ds = -0.5 * q[..., None]**-1.5 * dq
    d2s = (0.75 * q[..., None, None]**-2.5 * dq[..., :, None] * dq[..., None, :]
           - 0.5 * q[..., None, None]**-1.5 * d2q)
    nu = w * s[..., None]
    dnu = dw * s[..., None, None] + w[..., None, :] * ds[..., :, None]
    d2nu = (d2w * s[..., None, None, None]
            + dw[..., :, None, :] * ds[..., None, :, None]
            + dw[..., None, :, :] * ds[..., :, None, None]
            + w[..., None, None, :] * d2s[..., :, :, None])
    sign = np.sign(_dot(nu, ref))
    if np.any(sign == 0):
        raise RuntimeError("orientation reference orthogonal to the normal")
    return (nu * sign[..., None], dnu * sign[..., None, None],
            d2nu * sign[..., None, None, None])


def extrinsic(jet: GeometryJet, ref=None):
    """First and second fundamental forms, normal, mean curvature.

    ``ref`` fixes the orientation of the normal; by default the last ambient
    axis-ish dual orientation is used, so pass the atlas reference whenever
    the global convention matters.
    """
    g = first_fundamental(jet)
    ginv, det = _inv2(g)
    # relative nondegeneracy: neck charts have det g ~ tau^4, tiny but fine
    scale = (0.5 * (g[..., 0, 0] + g[..., 1, 1])) ** 2
    if np.any(det <= 1e-14 * np.maximum(scale, 1e-300)):
        raise ValueError("degenerate induced metric")
    if ref is None:
        if jet.ambient == "sphere":
            ref = _dual4(jet.pos, jet.d1[..., 0, :], jet.d1[..., 1, :])
        else:
            ref = _cross3(jet.d1[..., 0, :], jet.d1[..., 1, :])
    nu, _, _ = _normal_with_jets(jet, ref)
    A = np.einsum("...ijk,...k->...ij", jet.d2, nu)
    H = np.einsum("...ij,...ij->...", ginv, A)
    shape_op = np.einsum("...ik,...kj->...ij", ginv, A)
    normA2 = np.einsum("...ij,...ji->...", shape_op, shape_op)
    return ExtrinsicData(g=g, nu=nu, A=A, H=H, normA2=normA2, pos=jet.pos)


def perturbed_extrinsic(jet: GeometryJet, u, du, d2u, ref=None,
                        guard=True):
    """Extrinsic data of the normal graph of ``u`` over the immersion.

    (u, du, d2u) is the chart 2-jet of the graph function.  On the sphere
    the graph point is cos(u) F + sin(u) nu (the exact normal exponential);
    in flat space it is F + u nu.  The returned normal is the one with
    positive inner product with the transported normal, per the usual
    two-sided-graph convention.  ``guard`` enforces |u| below a focal
    distance proxy 0.2/(1 + |A|).
    """
    base = extrinsic(jet, ref)
    if ref is None:
        ref = base.nu
    nu, dnu, d2nu = _normal_with_jets(jet, ref)
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    d2u = np.asarray(d2u, dtype=float)
    if guard:
        normA = np.sqrt(np.maximum(base.normA2, 0.0))
        lim = 0.2 / (1.0 + normA)
        if np.any(np.abs(u) > lim):
            raise ValueError("perturbation exceeds the focal-distance guard")

    F, dF, d2F = jet.pos, jet.d1, jet.d2
    if jet.ambient == "sphere":
        cu, su = np.cos(u), np.sin(u)
        pos = cu[..., None] * F + su[..., None] * nu
        # d(pos) = cu dF + su dnu + du (-su F + cu nu)
        nt = -su[..., None] * F + cu[..., None] * nu  # transported normal
        dpos = (cu[..., None, None] * dF + su[..., None, None] * dnu
                + du[..., :, None] * nt[..., None, :])
        rot = -su[..., None, None] * dF + cu[..., None, None] * dnu
        d2pos = (cu[..., None, None, None] * d2F
                 + su[..., None, None, None] * d2nu
                 + du[..., :, None, None] * rot[..., None, :, :]
                 + du[..., None, :, None] * rot[..., :, None, :]
                 + d2u[..., :, :, None] * nt[..., None, None, :]
                 - (du[..., :, None, None] * du[..., None, :, None])
                 * pos[..., None, None, :])
        ref_u = nt
    else:
        pos = F + u[..., None] * nu
        dpos = dF + u[..., None, None] * dnu + du[..., :, None] * nu[..., None, :]
        d2pos = (d2F + u[..., None, None, None] * d2nu
                 + du[..., :, None, None] * dnu[..., None, :, :]
                 + du[..., None, :, None] * dnu[..., :, None, :]
                 + d2u[..., :, :, None] * nu[..., None, None, :])
        ref_u = nu

    pert = GeometryJet(pos, dpos, d2pos, None, jet.ambient)
    g = first_fundamental(pert)
    ginv, det = _inv2(g)
    scale = (0.5 * (g[..., 0, 0] + g[..., 1, 1])) ** 2
    if np.any(det <= 1e-14 * np.maximum(scale, 1e-300)):
        raise ValueError("perturbed immersion degenerate")
    if pert.ambient == "sphere":
        w = _dual4(pos, dpos[..., 0, :], dpos[..., 1, :])
    else:
        w = _cross3(dpos[..., 0, :], dpos[..., 1, :])
    w = w / np.sqrt(_dot(w, w))[..., None]
    sign = np.sign(_dot(w, ref_u))
    nu_u = w * sign[..., None]
    A = np.einsum("...ijk,...k->...ij", d2pos, nu_u)
    H = np.einsum("...ij,...ij->...", ginv, A)
    shape_op = np.einsum("...ik,...kj->...ij", ginv, A)
    normA2 = np.einsum("...ij,...ji->...", shape_op, shape_op)
    return ExtrinsicData(g=g, nu=nu_u, A=A, H=H, normA2=normA2, pos=pos)


def perturbed_position_jets(jet: GeometryJet, u, du, ref):
    """Position and first chart derivatives of the normal graph of ``u``.

    The 1-jet is all boundary-flux integrals need; much cheaper than the
    full curvature pipeline.
    """
    nu, dnu, _ = _normal_with_jets(jet, ref)
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    F, dF = jet.pos, jet.d1
    if jet.ambient == "sphere":
        cu, su = np.cos(u), np.sin(u)
        pos = cu[..., None] * F + su[..., None] * nu
        nt = -su[..., None] * F + cu[..., None] * nu
        dpos = (cu[..., None, None] * dF + su[..., None, None] * dnu
                + du[..., :, None] * nt[..., None, :])
    else:
        pos = F + u[..., None] * nu
        dpos = dF + u[..., None, None] * dnu + du[..., :, None] * nu[..., None, :]
    return pos, dpos


def _christoffel(jet: GeometryJet):
    g = first_fundamental(jet)
    ginv, _ = _inv2(g)
    # dg[..., a, b, c] = d_a g_{bc}
    dg = (np.einsum("...abk,...ck->...abc", jet.d2, jet.d1)
          + np.einsum("...ack,...bk->...abc", jet.d2, jet.d1))
    term = (np.einsum("...abd->...abd", dg) + np.einsum("...bad->...abd", dg)
            - np.einsum("...dab->...abd", dg))
    gamma = 0.5 * np.einsum("...cd,...abd->...cab", ginv, term)
    return g, ginv, gamma


def jacobi_apply(jet: GeometryJet, u, du, d2u, rho=None):
    """Apply the stability operator to a chart 2-jet of u.

    Returns Delta_g u + (|A|^2 + Ric(nu,nu)) u, with Ric(nu,nu) = 2 on the
    unit 3-sphere and 0 in flat space.  With ``rho`` given, also returns the
    conformally rescaled value rho^{-2} * (that).
    """
    g, ginv, gamma = _christoffel(jet)
    du = np.asarray(du, dtype=float)
    d2u = np.asarray(d2u, dtype=float)
    hess = d2u - np.einsum("...cab,...c->...ab", gamma, du)
    lap = np.einsum("...ab,...ab->...", ginv, hess)
    data = extrinsic(jet)
    amb = 2.0 if jet.ambient == "sphere" else 0.0
    lu = lap + (data.normA2 + amb) * np.asarray(u, dtype=float)
    if rho is None:
        return lu
    return lu, lu / np.asarray(rho, dtype=float) ** 2


@dataclass(frozen=True)
class DecayNormSpec:
    """Weighted sup-norm: sup of derivative magnitudes over (m/rho)^gamma."""

    order: int = 0
    gamma: float = 0.0


def weighted_norm(values, rho, m, spec: DecayNormSpec, chi_grads=None):
    """Sampled weighted norm sup_p sum_j |D^j u|_chi / (m/rho)^gamma.

    ``values`` are |u| samples; ``chi_grads`` optionally supplies already
    chi-measured first/second derivative magnitudes for order >= 1.
    """
    rho = np.asarray(rho, dtype=float)
    total = np.abs(np.asarray(values, dtype=float))
    if spec.order >= 1 and chi_grads is not None:
        for extra in chi_grads[:spec.order]:
            total = total + np.abs(extra)
    weight = (m / rho) ** spec.gamma
    return float(np.max(total / weight))


def mc_deficit_field(atlas, region, u, v, dislocations_w=None):
    """Pointwise rho^{-2} H minus the dislocation-generated kernel part.

    ``dislocations_w`` is the precomputed sum D_i * wbar_i at the same
    points (zero if omitted); the weighted sup of this field is the
    mean-curvature deficit the construction controls by C * tau_1.
    """
    jet = jet_eval(atlas, region, u, v)
    ref = atlas.orientation_ref(region, u, v)
    data = extrinsic(jet, ref)
    rho = atlas.rho(region, u, v)
    out = data.H / rho**2
    if dislocations_w is not None:
        out = out - dislocations_w
    return out, rho
