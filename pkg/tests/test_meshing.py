import numpy as np
import pytest
from collections import Counter

from cliffordstack.balancing import StackConfig
from cliffordstack.surface import SurfaceAtlas
from cliffordstack.meshing import (build_mesh, export_mesh, import_mesh,
                                   stereographic, watertight_check, SurfaceMesh)


@pytest.fixture(scope="module")
def mesh_2112():
    atlas = SurfaceAtlas(StackConfig(N=2, k=1, l=1, m=2))
    return atlas, build_mesh(atlas, resolution=8)


@pytest.mark.parametrize("N,k,l,m,genus", [
    (2, 1, 1, 2, 5),
    (2, 1, 1, 3, 10),
    (3, 1, 1, 2, 9),
    (3, 1, 2, 2, 17),
    (4, 1, 2, 2, 25),
])
def test_genus(N, k, l, m, genus):
    atlas = SurfaceAtlas(StackConfig(N=N, k=k, l=l, m=m))
    mesh = build_mesh(atlas, resolution=8)
    assert mesh.genus() == genus


def test_watertight_and_oriented(mesh_2112):
    _, mesh = mesh_2112
    assert watertight_check(mesh) == {}
    e = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]],
                        mesh.faces[:, [2, 0]]])
    counts = Counter(map(tuple, e.tolist()))
    assert max(counts.values()) == 1  # consistent orientation


def test_vertices_on_sphere(mesh_2112):
    _, mesh = mesh_2112
    norms = np.linalg.norm(mesh.vertices4, axis=1)
    assert np.max(np.abs(norms - 1)) < 1e-12


def test_symmetry_maps_vertex_set(mesh_2112):
    from scipy.spatial import cKDTree
    atlas, mesh = mesh_2112
    tree = cKDTree(mesh.vertices4)
    for g in atlas.group[:: max(1, len(atlas.group) // 6)]:
        moved = mesh.vertices4 @ g.matrix.T
        d, _ = tree.query(moved, k=1)
        assert np.max(d) < 1e-9


def test_resolution_floor():
    atlas = SurfaceAtlas(StackConfig(N=2, k=1, l=1, m=2))
    with pytest.raises(ValueError):
        build_mesh(atlas, resolution=4)


def test_export_obj_roundtrip(tmp_path, mesh_2112):
    _, mesh = mesh_2112
    path = tmp_path / "s.obj"
    sidecar = export_mesh(mesh, path, fmt="obj")
    v, f = import_mesh(path)
    assert len(v) == mesh.n_vertices
    assert len(f) == mesh.n_faces
    assert np.array_equal(np.sort(f, axis=None), np.sort(mesh.faces, axis=None))
    import json
    with open(sidecar) as fh:
        side = json.load(fh)
    assert len(side["vertices4"]) == mesh.n_vertices
    assert len(side["rho"]) == mesh.n_vertices
    assert side["region"][0][0] in ("T", "K")


def test_export_ply_roundtrip(tmp_path, mesh_2112):
    _, mesh = mesh_2112
    path = tmp_path / "s.ply"
    export_mesh(mesh, path, fmt="ply")
    v, f = import_mesh(path)
    assert len(v) == mesh.n_vertices and len(f) == mesh.n_faces


def test_stereographic_pole_clearance(mesh_2112):
    _, mesh = mesh_2112
    pts3, pole = stereographic(mesh.vertices4)
    assert np.all(np.isfinite(pts3))
    axis, s = pole
    assert np.min(np.abs(1.0 + s * mesh.vertices4[:, axis])) > 1e-3
    # the spec'd default pole is admissible too
    pts3b, _ = stereographic(mesh.vertices4, pole=(3, -1.0))
    assert np.all(np.isfinite(pts3b))


def test_empty_mesh_export_error(tmp_path):
    empty = SurfaceMesh(vertices4=np.zeros((0, 4)), coords3=np.zeros((0, 3)),
                        faces=np.zeros((0, 3), dtype=np.int64), region=[],
                        chart_uv=np.zeros((0, 2)), rho=np.zeros(0))
    with pytest.raises(ValueError):
        export_mesh(empty, tmp_path / "e.obj")


def test_seam_vertices_shared_not_welded(mesh_2112):
    # boundary circles appear once: no duplicated positions anywhere
    _, mesh = mesh_2112
    key = np.round(mesh.vertices4, 9)
    uniq = np.unique(key, axis=0)
    assert len(uniq) == mesh.n_vertices
