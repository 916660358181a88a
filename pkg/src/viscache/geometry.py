"""Ray, triangle, and BVH primitives plus the binary visibility oracle.

The BVH is a median-split tree over triangle centroids (longest axis,
leaf size <= 4) stored as flat arrays so the numba kernels can traverse
it.  All coordinates are float64 scene meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

LEAF_SIZE = 4
# Shadow rays are shortened at both ends by this fraction of the scene
# diagonal to avoid self-hits on the emitting and receiving surfaces.
SHADOW_EPS_FRACTION = 1e-4


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"ray direction must be unit length, got |d|={n:.8f}")
        if not (0.0 <= self.t_min < self.t_max):
            raise ValueError(f"invalid ray interval [{self.t_min}, {self.t_max}]")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        self.v0 = np.asarray(self.v0, dtype=np.float64)
        self.v1 = np.asarray(self.v1, dtype=np.float64)
        self.v2 = np.asarray(self.v2, dtype=np.float64)

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.v1 - self.v0, self.v2 - self.v0)))

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        return n / np.linalg.norm(n)


@dataclass
class Bvh:
    """Flat-array BVH over a fixed triangle soup.

    Triangles are permuted into leaf order; ``perm[i]`` maps a traversal
    index back to the caller's original triangle index.
    """

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    perm: np.ndarray
    scene_min: np.ndarray = field(init=False)
    scene_max: np.ndarray = field(init=False)

    def __post_init__(self):
        self.scene_min = self.node_min[0].copy()
        self.scene_max = self.node_max[0].copy()

    @property
    def n_triangles(self) -> int:
        return self.v0.shape[0]

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.scene_max - self.scene_min))


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> Bvh:
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    v1 = np.ascontiguousarray(v1, dtype=np.float64)
    v2 = np.ascontiguousarray(v2, dtype=np.float64)
    n = v0.shape[0]
    if n == 0:
        # Single empty leaf with an inverted box that no ray can hit.
        return Bvh(node_min=np.full((1, 3), np.inf),
                   node_max=np.full((1, 3), -np.inf),
                   node_left=np.array([-1], np.int32),
                   node_right=np.array([-1], np.int32),
                   node_start=np.array([0], np.int32),
                   node_count=np.array([0], np.int32),
                   v0=v0, v1=v1, v2=v2, perm=np.empty(0, np.int64))

    centroids = (v0 + v1 + v2) / 3.0
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)

    nodes_min, nodes_max = [], []
    lefts, rights, starts, counts = [], [], [], []
    order: list[int] = []

    def new_node() -> int:
        nodes_min.append(np.zeros(3))
        nodes_max.append(np.zeros(3))
        lefts.append(-1)
        rights.append(-1)
        starts.append(0)
        counts.append(0)
        return len(lefts) - 1

    def build(idx: np.ndarray) -> int:
        me = new_node()
        nodes_min[me] = tri_min[idx].min(axis=0)
        nodes_max[me] = tri_max[idx].max(axis=0)
        if idx.size <= LEAF_SIZE:
            starts[me] = len(order)
            counts[me] = idx.size
            order.extend(idx.tolist())
            return me
        c = centroids[idx]
        extent = c.max(axis=0) - c.min(axis=0)
        axis = int(np.argmax(extent))
        split = np.argsort(c[:, axis], kind="stable")
        mid = idx.size // 2
        lefts[me] = build(idx[split[:mid]])
        rights[me] = build(idx[split[mid:]])
        return me

    build(np.arange(n))
    perm = np.asarray(order, dtype=np.int64)
    return Bvh(node_min=np.ascontiguousarray(nodes_min, dtype=np.float64),
               node_max=np.ascontiguousarray(nodes_max, dtype=np.float64),
               node_left=np.asarray(lefts, np.int32),
               node_right=np.asarray(rights, np.int32),
               node_start=np.asarray(starts, np.int32),
               node_count=np.asarray(counts, np.int32),
               v0=np.ascontiguousarray(v0[perm]),
               v1=np.ascontiguousarray(v1[perm]),
               v2=np.ascontiguousarray(v2[perm]),
               perm=perm)


def ray_triangle_intersect(ray: Ray, tri: Triangle):
    """Nearest parametric hit of one ray against one triangle.

    Returns (t, u, v) barycentric-style (u toward v1, v toward v2) or
    None on miss.
    """
    t, u, v = kernels.ray_tri(ray.origin[0], ray.origin[1], ray.origin[2],
                              ray.direction[0], ray.direction[1], ray.direction[2],
                              tri.v0[0], tri.v0[1], tri.v0[2],
                              tri.v1[0], tri.v1[1], tri.v1[2],
                              tri.v2[0], tri.v2[1], tri.v2[2],
                              ray.t_min, ray.t_max)
    if t < 0.0:
        return None
    return t, u, v


def intersect_scene(ray: Ray, bvh: Bvh):
    """Nearest hit over the whole BVH: (t, original tri index, u, v) or None."""
    t, tri, u, v = kernels.closest_hit(
        ray.origin[0], ray.origin[1], ray.origin[2],
        ray.direction[0], ray.direction[1], ray.direction[2],
        ray.t_min, ray.t_max,
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.node_start, bvh.node_count, bvh.v0, bvh.v1, bvh.v2)
    if tri < 0:
        return None
    return t, int(bvh.perm[tri]), u, v


def intersect_scene_batch(bvh: Bvh, origins: np.ndarray, directions: np.ndarray,
                          t_min: np.ndarray, t_max: np.ndarray):
    """Batched nearest hits. Returns (t, tri_index, u, v); tri -1 where missed."""
    n = origins.shape[0]
    out_t = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    out_u = np.empty(n)
    out_v = np.empty(n)
    kernels.closest_hit_batch(np.ascontiguousarray(origins), np.ascontiguousarray(directions),
                              np.ascontiguousarray(t_min, dtype=np.float64),
                              np.ascontiguousarray(t_max, dtype=np.float64),
                              bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
                              bvh.node_start, bvh.node_count, bvh.v0, bvh.v1, bvh.v2,
                              out_t, out_tri, out_u, out_v)
    hit = out_tri >= 0
    out_tri[hit] = bvh.perm[out_tri[hit]]
    return out_t, out_tri, out_u, out_v


def occluded_batch(bvh: Bvh, origins: np.ndarray, directions: np.ndarray,
                   t_min: np.ndarray, t_max: np.ndarray) -> np.ndarray:
    out = np.empty(origins.shape[0], dtype=np.bool_)
    kernels.any_hit_batch(np.ascontiguousarray(origins), np.ascontiguousarray(directions),
                          np.ascontiguousarray(t_min, dtype=np.float64),
                          np.ascontiguousarray(t_max, dtype=np.float64),
                          bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
                          bvh.node_start, bvh.node_count, bvh.v0, bvh.v1, bvh.v2, out)
    return out


def shadow_epsilon(bvh: Bvh) -> float:
    d = bvh.diagonal
    return SHADOW_EPS_FRACTION * (d if np.isfinite(d) and d > 0.0 else 1.0)


def visibility(x: np.ndarray, y: np.ndarray, bvh: Bvh) -> float:
    """1.0 if the open segment between x and y is unobstructed, else 0.0."""
    v = visibility_batch(bvh, np.asarray(x, dtype=np.float64)[None, :],
                         np.asarray(y, dtype=np.float64)[None, :])
    return float(v[0])


def visibility_batch(bvh: Bvh, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Binary visibility for each row pair, with endpoint epsilon offsets."""
    eps = shadow_epsilon(bvh)
    d = y - x
    dist = np.linalg.norm(d, axis=1)
    safe = np.maximum(dist, 1e-300)
    dirs = d / safe[:, None]
    t_min = np.full(x.shape[0], eps)
    t_max = dist - eps
    degenerate = t_max <= t_min  # endpoints closer than the epsilons
    t_max = np.maximum(t_max, t_min + 1e-12)
    hit = occluded_batch(bvh, x, dirs, t_min, t_max)
    vis = (~hit).astype(np.float64)
    vis[degenerate] = 1.0
    return vis


def sample_triangle_uniform(tri: Triangle, u1: float, u2: float):
    """Uniform area sample via the sqrt warp. Returns (point, pdf_area)."""
    if not (0.0 <= u1 < 1.0 and 0.0 <= u2 < 1.0):
        raise ValueError("u1, u2 must lie in [0, 1)")
    su = np.sqrt(u1)
    b0 = 1.0 - su
    b1 = su * (1.0 - u2)
    b2 = su * u2
    p = b0 * tri.v0 + b1 * tri.v1 + b2 * tri.v2
    return p, 1.0 / tri.area
