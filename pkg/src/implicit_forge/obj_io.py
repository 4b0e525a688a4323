"""Wavefront OBJ export/import for triangle meshes.

Text format, LF line endings, '%.6f' numeric formatting so repeated
exports of the same mesh are byte-identical.
"""

import numpy as np

from .geometry import Mesh

_HEADER = "# implicit-forge mesh\n"


class ObjError(IOError):
    pass


def export_obj(mesh: Mesh, path) -> None:
    """Write a mesh as Wavefront OBJ.

    Vertex lines are `v x y z` or `v x y z r g b` when the mesh carries
    per-vertex colors; face lines are 1-indexed `f a b c`.  An empty mesh
    produces just the header comment.
    """
    mesh.validate()
    lines = [_HEADER]
    has_color = mesh.colors is not None
    for i in range(len(mesh.vertices)):
        x, y, z = mesh.vertices[i]
        if has_color:
            r, g, b = mesh.colors[i]
            lines.append("v %.6f %.6f %.6f %.6f %.6f %.6f\n" % (x, y, z, r, g, b))
        else:
            lines.append("v %.6f %.6f %.6f\n" % (x, y, z))
    for tri in mesh.triangles:
        lines.append("f %d %d %d\n" % (tri[0] + 1, tri[1] + 1, tri[2] + 1))
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("".join(lines))
    except OSError as exc:
        raise ObjError("cannot write OBJ to %r: %s" % (str(path), exc)) from exc


def load_obj(path) -> Mesh:
    """Parse the subset of OBJ written by export_obj (v/f lines only)."""
    verts, colors, tris = [], [], []
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ObjError("cannot read OBJ from %r: %s" % (str(path), exc)) from exc
    for raw in text.splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            nums = [float(p) for p in parts[1:]]
            if len(nums) not in (3, 6):
                raise ObjError("malformed vertex line: %r" % raw)
            verts.append(nums[:3])
            if len(nums) == 6:
                colors.append(nums[3:])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ObjError("only triangle faces supported: %r" % raw)
            # tolerate v/vt/vn references; only the vertex index is kept
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            tris.append(idx)
    if colors and len(colors) != len(verts):
        raise ObjError("color count does not match vertex count")
    mesh = Mesh(
        vertices=np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        triangles=np.asarray(tris, dtype=np.int64).reshape(-1, 3),
        colors=np.asarray(colors, dtype=np.float64).reshape(-1, 3) if colors else None,
    )
    mesh.validate()
    return mesh
