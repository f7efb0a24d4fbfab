import numpy as np
import pytest

from cliffordstack.jets import jet_variable, tab_cos, tab_sin, tab_cosh
from cliffordstack.balancing import StackConfig, stack_layout
from cliffordstack.surface import SurfaceAtlas
from cliffordstack.forces import (CurveSpec, region_boundary, flux,
                                  region_fluxes, dislocations, build_matrices,
                                  fd_residuals)


class FlatCatenoid:
    """Standard catenoid in flat R^3, adapter for the flux machinery."""

    def __init__(self, tau):
        self.tau = tau

    def ambient_jets(self, region, t, th):
        t = np.broadcast_arrays(np.asarray(t, float), np.asarray(th, float))[0]
        th = np.broadcast_to(np.asarray(th, float), t.shape)
        tj = jet_variable(t, 0)
        thj = jet_variable(th, 1)
        ch = tj.apply(tab_cosh)
        return [self.tau * ch * thj.apply(tab_cos),
                self.tau * ch * thj.apply(tab_sin), self.tau * tj]

    def orientation_ref(self, region, t, th):
        t = np.broadcast_arrays(np.asarray(t, float), np.asarray(th, float))[0]
        th = np.broadcast_to(np.asarray(th, float), t.shape)
        return np.stack([-np.cos(th) / np.cosh(t),
                         -np.sin(th) / np.cosh(t), np.tanh(t)], axis=-1)


def vertical_field(pos):
    K = np.zeros_like(pos)
    K[..., 2] = 1.0
    return K


def circle_at(t0):
    def chart(s):
        th = 2 * np.pi * np.asarray(s)
        return np.full_like(th, t0), th
    return chart


def test_flat_catenoid_waist_flux():
    tau = 0.37
    cat = FlatCatenoid(tau)
    curve = CurveSpec(region=None, chart=circle_at(0.0), outward=(1.0, 0.0),
                      periodic=True)
    val = flux(cat, curve, killing=vertical_field)
    assert abs(val - 2 * np.pi * tau) < 1e-10


def test_flat_catenoid_slice_independence():
    tau = 0.19
    cat = FlatCatenoid(tau)
    vals = [flux(cat, CurveSpec(region=None, chart=circle_at(t0),
                                outward=(1.0, 0.0), periodic=True),
                 killing=vertical_field) for t0 in (-1.5, -0.3, 0.0, 0.8, 2.0)]
    assert np.max(np.abs(np.array(vals) - 2 * np.pi * tau)) < 1e-10


def test_waist_orientation_antisymmetry(atlas_2116):
    atlas = atlas_2116
    up = CurveSpec(region=("K", 1), chart=circle_at(0.0), outward=(1.0, 0.0),
                   periodic=True)
    dn = CurveSpec(region=("K", 1), chart=circle_at(0.0), outward=(-1.0, 0.0),
                   periodic=True)
    assert abs(flux(atlas, up) + flux(atlas, dn)) < 1e-14


def test_cmc_band_first_variation(atlas_2116):
    # flux through the boundary of a band of the constant-mean-curvature
    # torus {z = z0} equals the area integral of H <K, nu>, by the first
    # variation of area; cross-checked with H = 2 tan 2 z0 and the exact
    # area density.
    import types
    from cliffordstack.jets import jet_constant
    from cliffordstack.charts import phi_ambient_jets, killing_field_ambient
    from cliffordstack.surface import _phi_differential

    z0 = 0.04

    class CMCTorus:
        def ambient_jets(self, region, x, y):
            x = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))[0]
            y = np.broadcast_to(np.asarray(y, float), x.shape)
            return phi_ambient_jets(jet_variable(x, 0), jet_variable(y, 1),
                                    jet_constant(np.full(x.shape, z0)))

        def orientation_ref(self, region, x, y):
            x = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))[0]
            y = np.broadcast_to(np.asarray(y, float), x.shape)
            p = np.stack([x, y, np.full(x.shape, z0)], axis=-1)
            return _phi_differential(p)[..., 2]

    torus = CMCTorus()
    x0, x1 = 0.2, 0.9
    ylen = np.sqrt(2) * np.pi  # full circumference: the circles must close

    def edge(x_at, outward):
        def chart(s):
            return np.full_like(np.asarray(s, float), x_at), ylen * np.asarray(s)
        return CurveSpec(region=None, chart=chart, outward=outward,
                         periodic=True, velocity=lambda s: (0.0, ylen))

    val = flux(torus, edge(x1, (1.0, 0.0))) + flux(torus, edge(x0, (-1.0, 0.0)))
    # area integral of H <K, nu> over the band, quadrature on a fine grid
    H = 2 * np.tan(2 * z0)
    xs = np.linspace(x0, x1, 400)
    ys = np.linspace(0, ylen, 400)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    nu = torus.orientation_ref(None, XX, YY)
    pos = np.stack([np.cos(np.sqrt(2) * XX) * np.sin(z0 + np.pi / 4),
                    np.sin(np.sqrt(2) * XX) * np.sin(z0 + np.pi / 4),
                    np.cos(np.sqrt(2) * YY) * np.cos(z0 + np.pi / 4),
                    np.sin(np.sqrt(2) * YY) * np.cos(z0 + np.pi / 4)], axis=-1)
    K = killing_field_ambient(pos)
    dens = np.sqrt((1 + np.sin(2 * z0)) * (1 - np.sin(2 * z0)))
    integrand = H * np.einsum("...i,...i->...", K, nu) * dens
    area_int = np.trapezoid(np.trapezoid(integrand, ys, axis=1), xs)
    assert abs(val - area_int) < 5e-7


def test_dislocations_examples():
    cfg0 = StackConfig(N=4, k=1, l=1, m=8)
    lay0 = stack_layout(cfg0)
    assert np.allclose(dislocations(cfg0, lay0), 0.0)
    # equal neighboring tau*xi products cancel the middle dislocation
    lay = stack_layout(StackConfig(N=4, k=1, l=1, m=8))
    xi = np.array([0.3, 0.3 * lay.tau[0] / lay.tau[1], -0.2])
    cfg = StackConfig(N=4, k=1, l=1, m=8, xi=xi)
    lay = stack_layout(cfg)
    D = dislocations(cfg, lay)
    assert D[0] == 0.0 and D[3] == 0.0
    assert abs(D[1]) < 1e-18
    assert abs(D[2]) > 1e-10


def test_matrices_small_N():
    Z, Xi = build_matrices(np.array([1.0]))
    assert np.allclose(Z, [[8 * np.pi]])
    assert np.allclose(np.linalg.inv(Z), [[1 / (8 * np.pi)]])
    assert np.allclose(Xi, [[2.0]])
    c2 = 1.23
    Z, Xi = build_matrices(np.array([1.0, c2]))
    assert np.allclose(Z, [[8 * np.pi, -c2], [8 * np.pi * c2, 1.0]])
    assert abs(np.linalg.det(Z) - 8 * np.pi * (1 + c2 * c2)) < 1e-12


@pytest.mark.parametrize("N", range(3, 13))
def test_matrix_determinants_positive(N):
    from cliffordstack.balancing import solve_balance
    c, _ = solve_balance(N, 1, 1, 12)
    Z, Xi = build_matrices(c)
    assert np.linalg.det(Z) > 0
    assert np.linalg.det(Xi) > 0
    assert np.linalg.norm(np.linalg.inv(Z)) < 10
    assert np.linalg.norm(np.linalg.inv(Xi)) < 10


def test_flux_group_invariance(atlas_2116):
    # conjugating a waist circle by a symmetry leaves its flux unchanged
    atlas = atlas_2116
    base = CurveSpec(region=("K", 1), chart=circle_at(0.4), outward=(1.0, 0.0),
                     periodic=True)
    val0 = flux(atlas, base)
    # the same circle around the lattice-translated neck: shift theta origin
    # and flip, the group action on the cylinder chart
    for th0, sgn in ((0.7, 1.0), (1.9, -1.0)):
        def chart(s, th0=th0, sgn=sgn):
            th = sgn * 2 * np.pi * np.asarray(s) + th0
            return np.full_like(th, 0.4), th
        val = flux(atlas, CurveSpec(region=("K", 1), chart=chart,
                                    outward=(1.0, 0.0), periodic=True))
        assert abs(val - val0) < 1e-10


@pytest.mark.parametrize("Nkl", [(2, 1, 1), (3, 1, 1)])
def test_balanced_forces_scaling(Nkl):
    N, k, l = Nkl
    ratios = []
    for m in (4, 6, 8):
        atlas = SurfaceAtlas(StackConfig(N=N, k=k, l=l, m=m))
        F = region_fluxes(atlas)
        tau1 = atlas.layout.tau[0]
        ratios.append(np.max(np.abs(F)) / (tau1 / m**2))
    assert max(ratios) / min(ratios) < 3.0


def test_force_differences_scaling():
    ratios = []
    for m in (4, 6, 8):
        atlas = SurfaceAtlas(StackConfig(N=3, k=1, l=1, m=m))
        F = region_fluxes(atlas)
        tau1 = atlas.layout.tau[0]
        ratios.append(np.max(np.abs(np.diff(F))) / (tau1 / m**2))
    assert max(ratios) / min(ratios) < 3.0


def test_fd_residuals_balanced(atlas_2116):
    atlas = atlas_2116
    F = region_fluxes(atlas)
    D = dislocations(atlas.cfg, atlas.layout)
    diff, end = fd_residuals(atlas.cfg, atlas.layout, F, D)
    # at zero parameters the residuals are the order-one lemma constants
    assert np.max(np.abs(diff)) < 50.0
    assert abs(end) < 50.0


def test_zeta_response_matches_Z_column():
    # finite differences in zeta_1 of the combination reproduce column 1 of Z
    N, k, l, m = 2, 1, 1, 8
    Z, _ = build_matrices(np.array([1.0]))
    delta = 0.1
    vals = []
    for sz in (+delta, -delta):
        cfg = StackConfig(N=N, k=k, l=l, m=m, zeta=np.array([sz]))
        atlas = SurfaceAtlas(cfg)
        F = region_fluxes(atlas)
        D = dislocations(cfg, atlas.layout)
        tau1 = atlas.layout.tau[0]
        comb = (k * l * m * m / (2 * np.pi * tau1)) * (F[0] - F[1]) \
            + (4 * np.pi / tau1) * (D[0] + D[1])
        vals.append(comb)
    slope = (vals[0] - vals[1]) / (2 * delta)
    assert abs(slope - Z[0, 0]) / Z[0, 0] < 0.15


def test_xi_response_end_sum():
    # the end-sum combination responds to xi_1 with unit slope (N=2 reads
    # xi_1 + c_1 xi_1 = 2 xi_1, matching the 1x1 response matrix)
    N, k, l, m = 2, 1, 1, 8
    delta = 0.1
    vals = []
    for sx in (+delta, -delta):
        cfg = StackConfig(N=N, k=k, l=l, m=m, xi=np.array([sx]))
        atlas = SurfaceAtlas(cfg)
        F = region_fluxes(atlas)
        tau1 = atlas.layout.tau[0]
        vals.append((k * l * m * m / (8 * np.pi**2 * tau1)) * (F[0] + F[1]))
    slope = (vals[0] - vals[1]) / (2 * delta)
    assert abs(slope - 2.0) / 2.0 < 0.15
