import numpy as np
import pytest

from cliffordstack.charts import (SQRT2, phi_map, pullback_metric,
                                  killing_field, killing_field_ambient,
                                  group_enumerate)
from cliffordstack.cutoffs import Cutoff, cutoff_eval, smoothstep


def fd_jacobian(f, p, h=1e-5):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(len(p)):
        e = np.zeros_like(p)
        e[i] = h
        cols.append((f(p + e) - f(p - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def test_phi_examples():
    assert np.allclose(phi_map([0, 0, 0]),
                       [1 / SQRT2, 0, 1 / SQRT2, 0], atol=1e-15)
    q = phi_map([0, 0, np.pi / 4])
    assert np.allclose(q, [1, 0, 0, 0], atol=1e-15)
    p = np.array([0.37, -1.2, 0.11])
    assert np.allclose(phi_map(p + [SQRT2 * np.pi, 0, 0]), phi_map(p), atol=1e-12)


def test_phi_unit_norm(rng):
    p = rng.uniform(-2, 2, size=(500, 3))
    p[:, 2] = rng.uniform(-0.7, 0.7, 500)
    q = phi_map(p)
    assert np.max(np.abs(np.sum(q * q, axis=-1) - 1)) < 1e-12


def test_pullback_metric_closed_form():
    g = pullback_metric([0.0, 0.0, 0.0])
    assert np.allclose(g, np.eye(3), atol=1e-15)
    g = pullback_metric([0.3, -0.4, np.pi / 8])
    assert np.allclose(np.diag(g), [1 + SQRT2 / 2, 1 - SQRT2 / 2, 1], atol=1e-14)


def test_pullback_matches_fd_jacobian(rng):
    # metric = J^T J for the covering map's Jacobian, here by central FD
    pts = rng.uniform(-1.5, 1.5, size=(100, 3))
    pts[:, 2] = rng.uniform(-0.6, 0.6, 100)
    for p in pts:
        J = fd_jacobian(phi_map, p)
        assert np.max(np.abs(J.T @ J - pullback_metric(p))) < 1e-9


def test_cutoff_examples():
    spec = Cutoff(1.0, 2.0)
    assert cutoff_eval(spec, 0.5) == 0.0
    assert abs(cutoff_eval(spec, 1.5) - 0.5) < 1e-15
    assert cutoff_eval(spec, 2.5) == 1.0
    rev = Cutoff(2.0, 1.0)
    assert cutoff_eval(rev, 0.5) == 1.0
    assert cutoff_eval(rev, 2.5) == 0.0


def test_cutoff_degenerate_rejected():
    with pytest.raises(ValueError):
        Cutoff(1.0, 1.0)


def test_cutoff_monotone_and_odd():
    s = np.linspace(-1.5, 1.5, 1000)
    v = smoothstep(s)
    assert np.all(np.diff(v) >= 0)
    # value - 1/2 odd about the midpoint
    assert np.max(np.abs(v + smoothstep(-s) - 1.0)) < 1e-15
    spec = Cutoff(0.0, 4.0)
    sv = spec(np.linspace(-1, 5, 1000))
    assert np.all(np.diff(sv) >= 0)


def test_cutoff_derivative_table_fd():
    spec = Cutoff(0.3, 1.9)
    s = np.linspace(0.31, 1.89, 57)
    f0, f1, f2, f3 = spec.table(s)
    h = 1e-5
    fd1 = (spec(s + h) - spec(s - h)) / (2 * h)
    fd2 = (spec(s + h) - 2 * spec(s) + spec(s - h)) / h**2
    assert np.max(np.abs(f1 - fd1)) < 1e-6
    assert np.max(np.abs(f2 - fd2)) < 1e-4


def test_killing_examples():
    assert np.allclose(killing_field([0.0, 0.0, 0.0]), [0, 0, 1], atol=1e-15)
    assert np.allclose(killing_field([np.pi / (2 * SQRT2), 0.0, 0.0]),
                       [-1 / SQRT2, 0, 0], atol=1e-14)
    with pytest.raises(ValueError):
        killing_field([0.0, 0.0, np.pi / 4])


def test_killing_chart_vs_ambient(rng):
    # the chart field pushed through the covering map is the linear field
    pts = rng.uniform(-1.5, 1.5, size=(200, 3))
    pts[:, 2] = rng.uniform(-0.6, 0.6, 200)
    h = 1e-6
    k = killing_field(pts)
    push = (phi_map(pts + h * k) - phi_map(pts - h * k)) / (2 * h)
    assert np.max(np.abs(push - killing_field_ambient(phi_map(pts)))) < 1e-8


def test_killing_equation_fd(rng):
    # Lie derivative of the pullback metric along the field vanishes
    pts = rng.uniform(-1.5, 1.5, size=(50, 3))
    pts[:, 2] = rng.uniform(-0.5, 0.5, 50)
    h = 1e-5
    for p in pts:
        dk = fd_jacobian(killing_field, p, h)
        k = killing_field(p)
        dg = np.stack([(pullback_metric(p + h * e) - pullback_metric(p - h * e))
                       / (2 * h) for e in np.eye(3)], axis=0)
        g = pullback_metric(p)
        lie = np.einsum("c,cij->ij", k, dg) \
            + np.einsum("cj,ci->ij", g, dk) + np.einsum("ic,cj->ij", g, dk)
        assert np.max(np.abs(lie)) < 1e-6


def test_group_order_and_identity():
    for (k, l, m) in [(1, 1, 2), (1, 2, 2)]:
        grp = group_enumerate(k, l, m)
        assert len(grp) == 4 * (k * m) * (l * m)
    grp = group_enumerate(1, 1, 2)
    ident = [g for g in grp if np.allclose(g.matrix, np.eye(4))]
    assert len(ident) == 1
    assert np.allclose(ident[0].chart_linear, np.eye(3))


def test_group_reflection_chart_action():
    grp = group_enumerate(1, 1, 2)
    refl = [g for g in grp if g.word == "Rx^0 Ry^0 X"][0]
    p = np.array([0.3, 0.4, 0.1])
    assert np.allclose(refl.act_chart(p), [-0.3, 0.4, 0.1])


def test_group_orthogonal_and_commutes_with_phi(rng):
    grp = group_enumerate(1, 2, 2)
    pts = rng.uniform(-1.5, 1.5, size=(100, 3))
    pts[:, 2] = rng.uniform(-0.6, 0.6, 100)
    for g in grp[:: max(1, len(grp) // 16)]:
        assert np.max(np.abs(g.matrix.T @ g.matrix - np.eye(4))) < 1e-12
        lhs = phi_map(g.act_chart(pts))
        rhs = g.act_ambient(phi_map(pts))
        assert np.max(np.abs(lhs - rhs)) < 1e-12
