"""Procedural shapes: signed-distance primitives composed by union.

Each primitive carries its own RGB; a point on the union surface takes the
color of the nearest primitive.  Signed distance convention: negative
inside, zero on the surface, positive outside.  Occupancy counts the
boundary as inside (sdf <= 0).
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .autodiff import ContractViolation

BOUNDS = 0.9  # primitives must fit inside [-BOUNDS, BOUNDS]^3


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ContractViolation("points must be (3,) or (n, 3)")
    return pts, single


@dataclass(frozen=True)
class Sphere:
    center: Tuple[float, float, float]
    radius: float
    color: Tuple[float, float, float]

    def sdf(self, pts):
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius

    def area(self):
        return 4.0 * np.pi * self.radius**2

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def surface(self, n, rng):
        u = rng.normal(size=(n, 3))
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
        return np.asarray(self.center) + self.radius * u


@dataclass(frozen=True)
class Ellipsoid:
    center: Tuple[float, float, float]
    radii: Tuple[float, float, float]
    color: Tuple[float, float, float]

    def sdf(self, pts):
        r = np.asarray(self.radii)
        q = (pts - np.asarray(self.center)) / r
        k0 = np.linalg.norm(q, axis=1)
        k1 = np.linalg.norm(q / r, axis=1)
        # exact sign, approximate magnitude (good enough for nearest-color)
        return np.where(k1 > 1e-12, k0 * (k0 - 1.0) / np.maximum(k1, 1e-12), -np.min(r))

    def area(self):
        a, b, c = self.radii
        p = 1.6075
        return 4.0 * np.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)

    def bounds(self):
        c = np.asarray(self.center)
        r = np.asarray(self.radii)
        return c - r, c + r

    def surface(self, n, rng):
        # rejection-correct the scaled-sphere map so density is uniform in area
        a, b, c = self.radii
        fmax = max(b * c, a * c, a * b)
        out = np.empty((0, 3))
        while len(out) < n:
            u = rng.normal(size=(2 * (n - len(out)) + 8, 3))
            u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
            f = np.linalg.norm(u * [b * c, a * c, a * b], axis=1)
            keep = rng.uniform(size=len(u)) * fmax < f
            out = np.concatenate([out, u[keep]])
        return np.asarray(self.center) + out[:n] * self.radii


@dataclass(frozen=True)
class Capsule:
    a: Tuple[float, float, float]
    b: Tuple[float, float, float]
    radius: float
    color: Tuple[float, float, float]

    def _axis(self):
        ab = np.asarray(self.b, dtype=np.float64) - np.asarray(self.a)
        length = float(np.linalg.norm(ab))
        return ab, length

    def sdf(self, pts):
        a = np.asarray(self.a)
        ab, length = self._axis()
        if length < 1e-12:
            return np.linalg.norm(pts - a, axis=1) - self.radius
        h = np.clip((pts - a) @ ab / (length * length), 0.0, 1.0)
        return np.linalg.norm(pts - a - h[:, None] * ab, axis=1) - self.radius

    def area(self):
        _, length = self._axis()
        return 2.0 * np.pi * self.radius * length + 4.0 * np.pi * self.radius**2

    def bounds(self):
        a, b = np.asarray(self.a), np.asarray(self.b)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius

    def surface(self, n, rng):
        a = np.asarray(self.a, dtype=np.float64)
        ab, length = self._axis()
        if length < 1e-12:
            return Sphere(tuple(self.a), self.radius, self.color).surface(n, rng)
        axis = ab / length
        # orthonormal frame around the axis
        helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(axis, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        area_cyl = 2.0 * np.pi * self.radius * length
        p_cyl = area_cyl / self.area()
        on_cyl = rng.uniform(size=n) < p_cyl
        pts = np.empty((n, 3))
        m = int(on_cyl.sum())
        if m:
            t = rng.uniform(0.0, length, size=m)
            ang = rng.uniform(0.0, 2.0 * np.pi, size=m)
            ring = np.outer(np.cos(ang), e1) + np.outer(np.sin(ang), e2)
            pts[on_cyl] = a + np.outer(t, axis) + self.radius * ring
        k = n - m
        if k:
            u = rng.normal(size=(k, 3))
            u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
            side = u @ axis
            ends = np.where(side[:, None] >= 0, a + ab, a)
            pts[~on_cyl] = ends + self.radius * u
        return pts


Primitive = (Sphere, Ellipsoid, Capsule)


@dataclass(frozen=True)
class ProceduralShape:
    """Union of colored primitives; the basic synthetic training subject."""

    primitives: tuple
    name: str = "shape"

    def __post_init__(self):
        if len(self.primitives) < 1:
            raise ContractViolation("shape needs at least one primitive")
        for p in self.primitives:
            lo, hi = p.bounds()
            if np.any(lo < -BOUNDS) or np.any(hi > BOUNDS):
                raise ContractViolation(
                    "primitive of %r leaves [-%.1f, %.1f]^3" % (self.name, BOUNDS, BOUNDS)
                )

    def sdf(self, points):
        pts, single = _as_points(points)
        d = np.min(np.stack([p.sdf(pts) for p in self.primitives]), axis=0)
        return d[0] if single else d

    def color_at(self, points):
        """Color of the nearest primitive at each point."""
        pts, single = _as_points(points)
        d = np.stack([p.sdf(pts) for p in self.primitives])
        owner = np.argmin(d, axis=0)
        palette = np.asarray([p.color for p in self.primitives], dtype=np.float64)
        cols = palette[owner]
        return cols[0] if single else cols


def analytic_occupancy(shape: ProceduralShape, points):
    """1.0 inside the union (boundary included), 0.0 outside."""
    pts, single = _as_points(points)
    occ = (shape.sdf(pts) <= 0.0).astype(np.float64)
    return float(occ[0]) if single else occ


def surface_points(shape: ProceduralShape, n: int, rng) -> Tuple[np.ndarray, np.ndarray]:
    """n points on the union surface with their colors.

    Primitives are drawn with probability proportional to their area and
    sampled on their own surface; samples that land strictly inside another
    primitive lie in the union interior and are rejected.
    """
    if n <= 0:
        raise ContractViolation("need n > 0 surface points")
    prims = shape.primitives
    areas = np.asarray([p.area() for p in prims])
    probs = areas / areas.sum()
    pos = np.empty((0, 3))
    col = np.empty((0, 3))
    for _ in range(200):
        if len(pos) >= n:
            break
        want = n - len(pos)
        counts = rng.multinomial(want, probs)
        for i, p in enumerate(prims):
            if counts[i] == 0:
                continue
            cand = p.surface(int(counts[i]), rng)
            if len(prims) > 1:
                others = np.min(
                    np.stack([q.sdf(cand) for j, q in enumerate(prims) if j != i]), axis=0
                )
                cand = cand[others > 0.0]
            pos = np.concatenate([pos, cand])
            col = np.concatenate([col, np.tile(np.asarray(p.color, dtype=np.float64), (len(cand), 1))])
    if len(pos) < n:
        raise ContractViolation("surface sampling starved; primitive fully occluded?")
    return pos[:n], col[:n]


def sample_queries(
    shape: ProceduralShape, n_uniform: int, n_surface: int, noise_sd: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Occupancy query set: uniform box samples plus noisy surface samples.

    Returns (points (n,3), labels (n,)) with labels from analytic_occupancy;
    deterministic per seed.
    """
    if n_uniform <= 0 or n_surface <= 0:
        raise ContractViolation("query counts must be positive")
    rng = np.random.default_rng(seed)
    uni = rng.uniform(-1.0, 1.0, size=(n_uniform, 3))
    surf, _ = surface_points(shape, n_surface, rng)
    surf = surf + rng.normal(0.0, noise_sd, size=surf.shape)
    pts = np.concatenate([uni, surf])
    return pts, analytic_occupancy(shape, pts)


def _fit(prims: List, margin: float = 0.88) -> tuple:
    """Uniformly shrink a primitive list toward the origin until it fits."""
    lo = np.min([p.bounds()[0] for p in prims], axis=0)
    hi = np.max([p.bounds()[1] for p in prims], axis=0)
    extent = float(max(np.abs(lo).max(), np.abs(hi).max()))
    if extent <= margin:
        return tuple(prims)
    s = margin / extent
    out = []
    for p in prims:
        if isinstance(p, Sphere):
            out.append(Sphere(tuple(np.asarray(p.center) * s), p.radius * s, p.color))
        elif isinstance(p, Ellipsoid):
            out.append(Ellipsoid(tuple(np.asarray(p.center) * s), tuple(np.asarray(p.radii) * s), p.color))
        else:
            out.append(Capsule(tuple(np.asarray(p.a) * s), tuple(np.asarray(p.b) * s), p.radius * s, p.color))
    return tuple(out)


def _hue_rgb(h: float) -> Tuple[float, float, float]:
    """Saturated hue wheel color, h in [0,1)."""
    x = h * 6.0
    r = np.clip(abs(x - 3.0) - 1.0, 0.0, 1.0)
    g = np.clip(2.0 - abs(x - 2.0), 0.0, 1.0)
    b = np.clip(2.0 - abs(x - 4.0), 0.0, 1.0)
    return (float(r), float(g), float(b))


def catalog() -> List[ProceduralShape]:
    """The fixed 20-shape training catalog: plump two-to-five primitive birds.

    Built from a hard-coded seed so every call returns identical shapes.
    The first three are simple round bodies (kept easy on purpose; they are
    the default desk-scale training subset).
    """
    rng = np.random.default_rng(20230917)
    shapes = []
    for i in range(20):
        hue = i / 20.0
        body_col = _hue_rgb(hue)
        head_col = _hue_rgb((hue + 0.23) % 1.0)
        accent = _hue_rgb((hue + 0.55) % 1.0)
        plump = i < 3
        body_r = rng.uniform(0.42, 0.58) if plump else rng.uniform(0.34, 0.52)
        squash = rng.uniform(0.72, 0.95, size=2)
        body = Ellipsoid((0.0, 0.0, 0.0), (body_r, body_r * squash[0], body_r * squash[1]), body_col)
        head_r = body_r * rng.uniform(0.42, 0.55)
        hx = body_r * rng.uniform(0.75, 0.95)
        hy = body_r * squash[0] * rng.uniform(0.45, 0.75)
        head = Sphere((hx, hy, 0.0), head_r, head_col)
        prims = [body, head]
        if not plump:
            n_extra = int(rng.integers(0, 4))  # up to 5 primitives total
            for k in range(n_extra):
                kind = int(rng.integers(0, 3))
                if kind == 0:  # tail capsule off the back
                    t0 = (-body_r * 0.9, 0.05, 0.0)
                    t1 = (t0[0] + rng.uniform(-0.3, -0.15), t0[1] + rng.uniform(0.0, 0.2), 0.0)
                    prims.append(Capsule(t0, t1, rng.uniform(0.06, 0.1), accent))
                elif kind == 1:  # wing blob
                    side = 1.0 if k % 2 == 0 else -1.0
                    prims.append(
                        Sphere(
                            (rng.uniform(-0.15, 0.1), rng.uniform(0.0, 0.2), side * body_r * squash[1] * 0.8),
                            body_r * rng.uniform(0.25, 0.38),
                            accent,
                        )
                    )
                else:  # beak capsule off the head
                    b0 = np.array([hx + head_r * 0.6, hy, 0.0])
                    b1 = b0 + [rng.uniform(0.12, 0.22), rng.uniform(-0.05, 0.05), 0.0]
                    prims.append(Capsule(tuple(b0), tuple(b1), rng.uniform(0.05, 0.08), accent))
        shapes.append(ProceduralShape(_fit(prims), name="bird%02d" % i))
    return shapes
