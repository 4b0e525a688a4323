"""Marching cubes over an occupancy lattice, plus the table generator.

The classic algorithm: every lattice cell gets an 8-bit configuration
from its corner inside/outside states (inside = value >= iso), a table
maps the configuration to triangles whose vertices lie on cut cell
edges, and each vertex is placed by linear interpolation to the iso
crossing. Vertices are deduplicated per global lattice edge, so the
surface is watertight away from the grid boundary.

The 256-entry table is generated once at import rather than embedded as
constants: for each configuration the cut edges are paired into segments
face by face (a face with four cut edges always separates the two inside
corners — one fixed polarity, applied identically from both sides of any
shared face, so neighboring cells can never disagree), the segments are
chained into closed polygons, and each polygon is fan-triangulated with
winding chosen so normals point toward lower occupancy.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractViolation
from .geometry import Mesh

# corner c sits at (x, y, z) = (c & 1, (c >> 1) & 1, (c >> 2) & 1)
CORNERS = [(c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8)]

# the 12 cell edges as sorted corner pairs, in a fixed enumeration
EDGES = []
for a in range(8):
    for axis_bit in (1, 2, 4):
        b = a | axis_bit
        if b != a and (a, b) not in EDGES:
            EDGES.append((a, b))
EDGES = sorted(EDGES)
assert len(EDGES) == 12
_EDGE_INDEX = {pair: i for i, pair in enumerate(EDGES)}

# six faces: (fixed axis bit, fixed value) -> the 4 corners on that face
FACES = []
for axis_bit in (1, 2, 4):
    for val in (0, 1):
        FACES.append([c for c in range(8) if ((c & axis_bit) != 0) == bool(val)])


def _face_segments(face_corners, inside):
    """Pair the face's cut edges into surface segments.

    Two cut edges -> one segment. Four (the ambiguous diagonal case) ->
    two segments, each looping around one inside corner, which keeps the
    two inside corners separated and is the same decision from either
    side of the face.
    """
    cut = []
    for i in range(4):
        for j in range(i + 1, 4):
            a, b = sorted((face_corners[i], face_corners[j]))
            if (a, b) in _EDGE_INDEX and inside[a] != inside[b]:
                cut.append((a, b))
    if not cut:
        return []
    if len(cut) == 2:
        return [(_EDGE_INDEX[cut[0]], _EDGE_INDEX[cut[1]])]
    # ambiguous: group the four cut edges by their inside corner
    segs = {}
    for a, b in cut:
        key = a if inside[a] else b
        segs.setdefault(key, []).append(_EDGE_INDEX[(a, b)])
    assert len(segs) == 2 and all(len(v) == 2 for v in segs.values())
    return [tuple(v) for v in segs.values()]


def _trace_polygons(config):
    inside = [(config >> c) & 1 for c in range(8)]
    links = {}
    for face in FACES:
        for e1, e2 in _face_segments(face, inside):
            links.setdefault(e1, []).append(e2)
            links.setdefault(e2, []).append(e1)
    for e, nb in links.items():
        assert len(nb) == 2, f"config {config}: edge {e} has {len(nb)} links"
    polygons = []
    seen = set()
    for start in sorted(links):
        if start in seen:
            continue
        poly = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = links[cur][0] if links[cur][0] != prev else links[cur][1]
            if nxt == start:
                break
            poly.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        polygons.append(poly)
    return polygons, inside


def _edge_midpoint(e):
    a, b = EDGES[e]
    pa, pb = CORNERS[a], CORNERS[b]
    return np.array([(pa[k] + pb[k]) / 2.0 for k in range(3)])


def _inward_dir(e, inside):
    """From the midpoint of cut edge e toward its inside endpoint."""
    a, b = EDGES[e]
    c = a if inside[a] else b
    return np.array(CORNERS[c], dtype=float) - _edge_midpoint(e)


def _oriented_fan(poly, inside):
    """Fan-triangulate one polygon, winding so normals face the outside.

    The flip decision comes from the fan triangle whose normal aligns
    most strongly with its vertices' inward directions: normals must
    point toward lower occupancy, i.e. away from the inside endpoints.
    """
    pts = [_edge_midpoint(e) for e in poly]
    inward = [_inward_dir(e, inside) for e in poly]
    vote = 0.0
    for i in range(1, len(poly) - 1):
        n = np.cross(pts[i] - pts[0], pts[i + 1] - pts[0])
        d = float(n @ (inward[0] + inward[i] + inward[i + 1]))
        if abs(d) > abs(vote):
            vote = d
    assert abs(vote) > 1e-9, "degenerate polygon orientation"
    if vote > 0:
        poly = poly[::-1]
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _build_tables():
    tri = []
    edge = []
    for config in range(256):
        polygons, inside = _trace_polygons(config)
        tris = []
        for poly in polygons:
            tris.extend(_oriented_fan(poly, inside))
        tri.append(tuple(tris))
        bits = 0
        for t in tris:
            for e in t:
                bits |= 1 << e
        edge.append(bits)
    return tuple(tri), tuple(edge)


TRI_TABLE, EDGE_TABLE = _build_tables()


@dataclass
class ScalarGrid:
    """Occupancy samples on a regular lattice over [-1, 1]^3."""

    values: np.ndarray          # (nx, ny, nz) floats in [0, 1]
    iso: float = 0.5

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ContractViolation("grid needs at least 2 samples per axis")
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation("grid values must be finite")

    def world(self, idx: np.ndarray) -> np.ndarray:
        """Fractional lattice index (..., 3) -> world coordinates in [-1,1]^3."""
        res = np.array(self.values.shape, dtype=np.float64)
        return -1.0 + 2.0 * np.asarray(idx, dtype=np.float64) / (res - 1.0)


def marching_cubes(grid: ScalarGrid, color_fn=None) -> Mesh:
    """Extract the iso-surface as a watertight triangle mesh.

    Inside is value >= iso. Vertices land on lattice edges at the linear
    interpolation of the crossing and are shared between all incident
    triangles. color_fn, if given, maps an (N, 3) array of vertex
    positions to (N, 3) RGB for per-vertex color.
    """
    v = grid.values
    iso = grid.iso
    nx, ny, nz = v.shape
    inside = v >= iso

    config = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint16)
    for c, (cx, cy, cz) in enumerate(CORNERS):
        config |= inside[cx:nx - 1 + cx, cy:ny - 1 + cy, cz:nz - 1 + cz].astype(np.uint16) << c
    active = np.argwhere((config != 0) & (config != 255))

    edge_dirs = []
    for a, b in EDGES:
        pa, pb = CORNERS[a], CORNERS[b]
        edge_dirs.append((pa, tuple(pb[k] - pa[k] for k in range(3))))

    vert_ids = {}
    verts = []
    tris = []

    def vertex_on(ix, iy, iz, e):
        (ox, oy, oz), (dx, dy, dz) = edge_dirs[e]
        base = (ix + ox, iy + oy, iz + oz)
        axis = 0 if dx else (1 if dy else 2)
        key = (base, axis)
        vid = vert_ids.get(key)
        if vid is not None:
            return vid
        v0 = v[base]
        v1 = v[base[0] + dx, base[1] + dy, base[2] + dz]
        t = 0.0 if v1 == v0 else (iso - v0) / (v1 - v0)
        t = min(max(t, 0.0), 1.0)
        idx = np.array(base, dtype=np.float64)
        idx[axis] += t
        vid = len(verts)
        verts.append(grid.world(idx))
        vert_ids[key] = vid
        return vid

    for ix, iy, iz in active:
        for e0, e1, e2 in TRI_TABLE[config[ix, iy, iz]]:
            tris.append((vertex_on(ix, iy, iz, e0),
                         vertex_on(ix, iy, iz, e1),
                         vertex_on(ix, iy, iz, e2)))

    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    colors = None
    if color_fn is not None and len(vertices):
        colors = np.clip(np.asarray(color_fn(vertices), dtype=np.float64), 0.0, 1.0)
    return Mesh(vertices=vertices, triangles=triangles, colors=colors)
