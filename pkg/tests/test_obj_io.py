import numpy as np
import pytest

from implicit_forge.geometry import Mesh
from implicit_forge.marching import ScalarGrid, marching_cubes
from implicit_forge.obj_io import ObjError, export_obj, load_obj


def empty_mesh() -> Mesh:
    return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def test_empty_mesh_writes_header_only(tmp_path):
    path = tmp_path / "empty.obj"
    export_obj(empty_mesh(), path)
    assert path.read_text() == "# implicit-forge mesh\n"


def test_single_triangle_layout(tmp_path):
    mesh = Mesh(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                np.array([[0, 1, 2]]))
    path = tmp_path / "tri.obj"
    export_obj(mesh, path)
    lines = path.read_text().splitlines()
    assert len([l for l in lines if l.startswith("v ")]) == 3
    assert [l for l in lines if l.startswith("f ")] == ["f 1 2 3"]
    assert lines[1] == "v 0.000000 0.000000 0.000000"


def test_colored_vertex_line(tmp_path):
    mesh = Mesh(np.array([[0.5, -0.25, 0.125], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                np.array([[0, 1, 2]]),
                colors=np.array([[1.0, 0.5, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
    path = tmp_path / "tric.obj"
    export_obj(mesh, path)
    first = path.read_text().splitlines()[1]
    assert first == "v 0.500000 -0.250000 0.125000 1.000000 0.500000 0.000000"


def test_sphere_round_trip(tmp_path):
    ax = np.linspace(-1, 1, 16)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    vals = (np.sqrt(gx**2 + gy**2 + gz**2) <= 0.5).astype(float)
    mesh = marching_cubes(ScalarGrid(vals), color_fn=lambda v: (v + 1.0) / 2.0)
    path = tmp_path / "sphere.obj"
    export_obj(mesh, path)
    back = load_obj(path)
    assert len(back.vertices) == len(mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.abs(back.vertices - mesh.vertices).max() < 1e-6
    assert np.abs(back.colors - mesh.colors).max() < 1e-6


def test_repeat_export_byte_identical(tmp_path):
    mesh = Mesh(np.array([[0.1, 0.2, 0.3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                np.array([[0, 1, 2]]))
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    export_obj(mesh, p1)
    export_obj(mesh, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_failure_names_path(tmp_path):
    with pytest.raises(ObjError, match="no/such"):
        export_obj(empty_mesh(), tmp_path / "no" / "such" / "dir.obj")


def test_load_missing_file(tmp_path):
    with pytest.raises(ObjError):
        load_obj(tmp_path / "absent.obj")


def test_load_rejects_quad_faces(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(ObjError):
        load_obj(path)


def test_load_rejects_out_of_range_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(Exception):
        load_obj(path)


def test_load_tolerates_slash_references(tmp_path):
    path = tmp_path / "slash.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n")
    mesh = load_obj(path)
    assert np.array_equal(mesh.triangles, [[0, 1, 2]])
