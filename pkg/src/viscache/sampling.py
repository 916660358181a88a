"""Light sampling: weighted reservoir selection driven by cached visibility,
analytic unshadowed light weights, k-means light clustering, two-step
clustered sampling, and the RIS / screen-space ReSTIR baselines.

Scalar functions mirror the batched ones (which the renderer uses) by
wrapping single-element arrays, so there is exactly one implementation of
each piece of sampling math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scene import LUMA, Scene

CLAMP_FLOOR = 0.001
RESTIR_CANDIDATES = 8
RESTIR_RADIUS = 32
RESTIR_NEIGHBORS = 4
RESTIR_TEMPORAL_CLAMP = 20.0
DEFAULT_CLUSTERS = 32


def clamp_visibility(v, floor: float = CLAMP_FLOOR):
    """Floor predicted visibility so every light keeps nonzero selection
    probability; disabling the floor (floor=0) reproduces the biased mode."""
    return np.maximum(v, floor)


@dataclass
class ShadingPoint:
    position: np.ndarray
    normal: np.ndarray
    albedo: np.ndarray
    omega_o: np.ndarray | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)


@dataclass
class Reservoir:
    """Streamed weighted-sample state.

    Invariant (when nonempty): W == w_sum / (M * w_y).
    """

    y: int = -1
    point: np.ndarray | None = None
    w_y: float = 0.0
    w_sum: float = 0.0
    M: float = 0.0
    W: float = 0.0

    @property
    def empty(self) -> bool:
        return self.y < 0 or self.W <= 0.0


# ---------------------------------------------------------------------------
# Weighted reservoir selection.
#
# The streaming rule (item i replaces the survivor with probability
# w_i / sum_{j<=i} w_j) is vectorized per row: selection equals the last
# index whose replacement draw succeeded, and Pr[y = i] = w_i / w_sum.
# ---------------------------------------------------------------------------


def wrs_select_batch(weights: np.ndarray, rng: np.random.Generator):
    """Row-wise streaming WRS. Returns (index, w_selected, w_sum); index -1
    for all-zero rows."""
    w = np.asarray(weights, dtype=np.float64)
    s = np.cumsum(w, axis=1)
    u = rng.random(w.shape)
    replaced = u * s < w
    any_sel = replaced.any(axis=1)
    last = w.shape[1] - 1 - np.argmax(replaced[:, ::-1], axis=1)
    idx = np.where(any_sel, last, -1)
    w_sel = np.where(any_sel, np.take_along_axis(w, np.maximum(idx, 0)[:, None], 1)[:, 0], 0.0)
    return idx, w_sel, s[:, -1]


def wrs_select(weights, rng: np.random.Generator) -> Reservoir:
    """Single-pass WRS over a weight stream; empty reservoir if all zero."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weight stream must be a nonempty 1-d sequence")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    idx, w_sel, w_sum = wrs_select_batch(w[None, :], rng)
    m = w.size
    if idx[0] < 0:
        return Reservoir(M=m)
    big_w = w_sum[0] / (m * w_sel[0])
    return Reservoir(y=int(idx[0]), w_y=float(w_sel[0]), w_sum=float(w_sum[0]),
                     M=m, W=float(big_w))


# ---------------------------------------------------------------------------
# Unshadowed weights (diffuse analytic integral x radiance luminance).
# ---------------------------------------------------------------------------


class PixelCtx:
    """Per-pixel shading data plus lazily built per-light weight tables."""

    def __init__(self, scene: Scene, positions, normals, albedos, factors=None):
        self.scene = scene
        self.positions = np.ascontiguousarray(np.atleast_2d(positions), dtype=np.float64)
        self.normals = np.ascontiguousarray(np.atleast_2d(normals), dtype=np.float64)
        self.albedos = np.ascontiguousarray(np.atleast_2d(albedos), dtype=np.float64)
        self._factors = factors
        self._lum = None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def factor_matrix(self) -> np.ndarray:
        """(P, K) unshadowed geometry factors for every light."""
        if self._factors is None:
            out = np.empty((self.n, self.scene.n_lights))
            kernels.light_factors_all(self.positions, self.normals,
                                      self.scene.lt_kind, self.scene.lt_verts,
                                      self.scene.lt_normal, out)
            self._factors = out
        return self._factors

    def lum_matrix(self) -> np.ndarray:
        """(P, K) luminance of the unshadowed reflected radiance per light."""
        if self._lum is None:
            scale = self.albedos @ (LUMA[:, None] * self.scene.lt_radiance.T) / np.pi
            self._lum = self.factor_matrix() * scale
        return self._lum

    def phat_ids(self, ids: np.ndarray) -> np.ndarray:
        """Luminance target weight of one light per pixel (id < 0 -> 0)."""
        ids = np.asarray(ids)
        if self._factors is not None:
            f = np.where(ids >= 0,
                         np.take_along_axis(self._factors,
                                            np.maximum(ids, 0)[:, None], 1)[:, 0], 0.0)
        else:
            f = np.empty(self.n)
            kernels.light_factors_ids(self.positions, self.normals,
                                      ids.astype(np.int64), self.scene.lt_kind,
                                      self.scene.lt_verts, self.scene.lt_normal, f)
        rad = self.scene.lt_radiance[np.maximum(ids, 0)]
        scale = np.einsum("pc,pc->p", self.albedos, LUMA * rad) / np.pi
        return np.where(ids >= 0, f * scale, 0.0)

    def unshadowed_rgb(self, vis: np.ndarray) -> np.ndarray:
        """(P, 3) sum over lights of vis * albedo/pi * radiance * factor."""
        weighted = vis * self.factor_matrix()
        return (weighted @ self.scene.lt_radiance) * self.albedos / np.pi


def _ctx_for(sp: ShadingPoint, scene: Scene) -> PixelCtx:
    return PixelCtx(scene, sp.position[None, :], sp.normal[None, :], sp.albedo[None, :])


def unshadowed_weight(sp: ShadingPoint, light_id: int, scene: Scene) -> float:
    """Luminance of the analytic unshadowed reflected radiance of one light."""
    ctx = _ctx_for(sp, scene)
    return float(ctx.phat_ids(np.array([light_id]))[0])


def unshadowed_rgb_one(sp: ShadingPoint, light_id: int, scene: Scene) -> np.ndarray:
    ctx = _ctx_for(sp, scene)
    f = ctx.factor_matrix()[0, light_id]
    return sp.albedo / np.pi * scene.lt_radiance[light_id] * f


# ---------------------------------------------------------------------------
# Neural light sampling (one output neuron per light).
# ---------------------------------------------------------------------------


def nls_weights_batch(ctx: PixelCtx, cache, clamp_floor: float | None = CLAMP_FLOOR):
    """WRS weights: clamped predicted visibility x unshadowed luminance."""
    vis = np.asarray(cache.infer(ctx.positions), dtype=np.float64)
    if clamp_floor and clamp_floor > 0.0:
        vis = clamp_visibility(vis, clamp_floor)
    else:
        vis = np.maximum(vis, 0.0)  # biased mode keeps zeros at zero
    return vis * ctx.lum_matrix()


def nls_sample_batch(ctx: PixelCtx, cache, rng: np.random.Generator,
                     clamp_floor: float | None = CLAMP_FLOOR):
    """Exhaustive-stream WRS over all lights.

    Selection probability is exactly w_i / w_sum, so the estimator weight
    is W = w_sum / w_i.  Returns (light ids, emitter points, W).
    """
    w = nls_weights_batch(ctx, cache, clamp_floor)
    idx, w_sel, w_sum = wrs_select_batch(w, rng)
    big_w = np.where(idx >= 0, w_sum / np.where(w_sel > 0, w_sel, 1.0), 0.0)
    pts = ctx.scene.light_points(idx, rng.random((ctx.n, 2)))
    return idx, pts, big_w


def nls_sample(sp: ShadingPoint, cache, scene: Scene, rng: np.random.Generator,
               clamp_floor: float | None = CLAMP_FLOOR):
    """Sample one light for a shading point. Returns (light id, point, W)."""
    ids, pts, ws = nls_sample_batch(_ctx_for(sp, scene), cache, rng, clamp_floor)
    return int(ids[0]), pts[0], float(ws[0])


def neural_di_batch(ctx: PixelCtx, cache) -> np.ndarray:
    """Biased shading: raw predicted visibility times analytic radiance."""
    vis = np.asarray(cache.infer(ctx.positions), dtype=np.float64)
    return ctx.unshadowed_rgb(vis)


def neural_di_shade(sp: ShadingPoint, cache, scene: Scene) -> np.ndarray:
    return neural_di_batch(_ctx_for(sp, scene), cache)[0]


# ---------------------------------------------------------------------------
# k-means light clustering.
# ---------------------------------------------------------------------------


@dataclass
class ClusterSet:
    centroids: np.ndarray
    members: list[np.ndarray]
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        counts = np.array([len(m) for m in self.members])
        if np.any(counts == 0):
            raise ValueError("empty cluster after repair")
        self.assignment = np.empty(int(counts.sum()), dtype=np.int64)
        for j, mem in enumerate(self.members):
            self.assignment[mem] = j

    @property
    def m(self) -> int:
        return len(self.members)

    def member_count(self, j: int) -> int:
        return len(self.members[j])


def kmeans_cluster(lights, k: int, rng: np.random.Generator,
                   max_iters: int = 100) -> ClusterSet:
    """Lloyd iterations over light centroids until the assignment fixes.

    Empty clusters keep their previous centroid during iteration (which
    preserves the non-increasing inertia property) and are repaired at the
    end by stealing the farthest member of the largest cluster.  With
    k >= n every light gets its own cluster.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = np.stack([lt.centroid() for lt in lights])
    n = pts.shape[0]
    if k >= n:
        return ClusterSet(centroids=pts.copy(),
                          members=[np.array([i]) for i in range(n)])

    centroids = pts[rng.choice(n, size=k, replace=False)].copy()
    assign = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        d2 = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            sel = assign == j
            if np.any(sel):
                centroids[j] = pts[sel].mean(axis=0)

    members = [np.flatnonzero(assign == j) for j in range(k)]
    while any(len(m) == 0 for m in members):
        j_empty = next(j for j, m in enumerate(members) if len(m) == 0)
        j_big = int(np.argmax([len(m) for m in members]))
        big = members[j_big]
        far = big[np.argmax(np.sum((pts[big] - centroids[j_big]) ** 2, axis=1))]
        members[j_big] = big[big != far]
        members[j_empty] = np.array([far])
        centroids[j_empty] = pts[far]
    return ClusterSet(centroids=centroids, members=members,
                      inertia_history=history)


# ---------------------------------------------------------------------------
# Clustered two-step sampling.
# ---------------------------------------------------------------------------


def clustered_sample_batch(ctx: PixelCtx, cache, clusters: ClusterSet,
                           rng: np.random.Generator,
                           clamp_floor: float | None = CLAMP_FLOOR):
    """Cluster WRS on predicted cluster visibility, then streaming RIS over
    the chosen cluster's member lights.

    Step-2 candidate weights use the source pdf
    p(x) = m * (w(y)/w_sum) * (1/m_y); because every one of the m clusters
    is enumerated in step 1, the unbiased total weight carries the extra
    factor m: W_total = m * w_sum2 / (m_y * phat(x)).

    Returns (light ids, emitter points, W_total).
    """
    m = clusters.m
    vis = np.asarray(cache.infer(ctx.positions), dtype=np.float64)[:, :m]
    if clamp_floor and clamp_floor > 0.0:
        cw = clamp_visibility(vis, clamp_floor)
    else:
        cw = np.maximum(vis, 0.0)
    c_idx, c_w, c_sum = wrs_select_batch(cw, rng)

    p = ctx.n
    out_ids = np.full(p, -1, dtype=np.int64)
    out_w = np.zeros(p)
    factors = ctx._factors  # may be None; per-group kernels otherwise
    for j in range(m):
        rows = np.flatnonzero(c_idx == j)
        if rows.size == 0:
            continue
        mem = clusters.members[j]
        my = mem.size
        if factors is not None:
            f = factors[np.ix_(rows, mem)]
        else:
            f = np.empty((rows.size, my))
            rep_ids = np.broadcast_to(mem, (rows.size, my))
            flat = np.empty(rows.size * my)
            kernels.light_factors_ids(
                np.repeat(ctx.positions[rows], my, axis=0),
                np.repeat(ctx.normals[rows], my, axis=0),
                np.ascontiguousarray(rep_ids.reshape(-1), dtype=np.int64),
                ctx.scene.lt_kind, ctx.scene.lt_verts, ctx.scene.lt_normal, flat)
            f = flat.reshape(rows.size, my)
        rad = ctx.scene.lt_radiance[mem]
        scale = (ctx.albedos[rows] @ (LUMA[:, None] * rad.T)) / np.pi
        phat = f * scale  # (rows, my)

        p_src = m * (c_w[rows] / c_sum[rows]) / my
        w2 = phat / p_src[:, None]
        sel, w2_sel, w2_sum = wrs_select_batch(w2, rng)
        ok = sel >= 0
        rr = rows[ok]
        out_ids[rr] = mem[sel[ok]]
        phat_sel = phat[ok, sel[ok]]
        out_w[rr] = m * w2_sum[ok] / (my * phat_sel)

    pts = ctx.scene.light_points(out_ids, rng.random((p, 2)))
    return out_ids, pts, out_w


def clustered_sample(sp: ShadingPoint, cache, clusters: ClusterSet, scene: Scene,
                     rng: np.random.Generator,
                     clamp_floor: float | None = CLAMP_FLOOR):
    ids, pts, ws = clustered_sample_batch(_ctx_for(sp, scene), cache, clusters,
                                          rng, clamp_floor)
    return int(ids[0]), pts[0], float(ws[0])


# ---------------------------------------------------------------------------
# Reservoir grids and the RIS / ReSTIR baseline.
# ---------------------------------------------------------------------------


class ReservoirGrid:
    """Struct-of-arrays reservoirs, one per pixel."""

    def __init__(self, n: int):
        self.y = np.full(n, -1, dtype=np.int64)
        self.point = np.zeros((n, 3))
        self.w_y = np.zeros(n)
        self.w_sum = np.zeros(n)
        self.M = np.zeros(n)
        self.W = np.zeros(n)
        self.valid = np.zeros(n, dtype=bool)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def invalidate(self) -> None:
        self.valid[:] = False

    def row(self, i: int) -> Reservoir:
        return Reservoir(y=int(self.y[i]), point=self.point[i].copy(),
                         w_y=float(self.w_y[i]), w_sum=float(self.w_sum[i]),
                         M=float(self.M[i]), W=float(self.W[i]))

    def set_row(self, i: int, r: Reservoir, valid: bool = True) -> None:
        self.y[i] = r.y
        if r.point is not None:
            self.point[i] = r.point
        self.w_y[i] = r.w_y
        self.w_sum[i] = r.w_sum
        self.M[i] = r.M
        self.W[i] = r.W
        self.valid[i] = valid


def ris_initial_batch(ctx: PixelCtx, rng: np.random.Generator,
                      m_candidates: int = RESTIR_CANDIDATES) -> ReservoirGrid:
    """Streaming RIS over uniformly drawn light candidates.

    Candidates are drawn from the uniform light pmf 1/N, weighted by
    phat * N, so the reservoir satisfies W = w_sum / (M * phat(y)).
    """
    p = ctx.n
    k = ctx.scene.n_lights
    ids = rng.integers(0, k, size=(p, m_candidates))
    if ctx._factors is not None:
        phat = np.take_along_axis(ctx.lum_matrix(), ids, axis=1)
    else:
        lum = ctx.lum_matrix()
        phat = np.take_along_axis(lum, ids, axis=1)
    w = phat * k
    sel, w_sel, w_sum = wrs_select_batch(w, rng)
    grid = ReservoirGrid(p)
    ok = sel >= 0
    rows = np.flatnonzero(ok)
    grid.y[rows] = np.take_along_axis(ids, sel[:, None], 1)[rows, 0]
    grid.w_y[rows] = np.take_along_axis(phat, np.maximum(sel, 0)[:, None], 1)[rows, 0]
    grid.w_sum = w_sum
    grid.M[:] = m_candidates
    grid.W[rows] = w_sum[rows] / (m_candidates * grid.w_y[rows])
    grid.point = ctx.scene.light_points(grid.y, rng.random((p, 2)))
    grid.valid[:] = True
    return grid


def ris_initial_candidates(sp: ShadingPoint, scene: Scene, rng: np.random.Generator,
                           m_candidates: int = RESTIR_CANDIDATES) -> Reservoir:
    if m_candidates < 1:
        raise ValueError("need at least one candidate")
    grid = ris_initial_batch(_ctx_for(sp, scene), rng, m_candidates)
    return grid.row(0)


def cnvc_initial_batch(ctx: PixelCtx, cache, clusters: ClusterSet,
                       rng: np.random.Generator,
                       clamp_floor: float | None = CLAMP_FLOOR) -> ReservoirGrid:
    """Package clustered samples as ReSTIR-compatible reservoirs (M = 1).

    No validation shadow ray is cast; predicted visibility already shaped
    the sample distribution.
    """
    ids, pts, w_total = clustered_sample_batch(ctx, cache, clusters, rng, clamp_floor)
    grid = ReservoirGrid(ctx.n)
    grid.y = ids
    grid.point = pts
    grid.w_y = ctx.phat_ids(ids)
    grid.M[:] = 1.0
    grid.W = np.where(grid.w_y > 0, w_total, 0.0)
    grid.w_sum = grid.w_y * grid.W  # keeps W == w_sum / (M * w_y)
    grid.valid[:] = True
    return grid


def cnvc_initial_candidates(sp: ShadingPoint, cache, clusters: ClusterSet,
                            scene: Scene, rng: np.random.Generator,
                            clamp_floor: float | None = CLAMP_FLOOR) -> Reservoir:
    grid = cnvc_initial_batch(_ctx_for(sp, scene), cache, clusters, rng, clamp_floor)
    return grid.row(0)


def _merge_select(w_a, w_b, u):
    """Bernoulli pick between two reservoir insertion weights."""
    w_sum = w_a + w_b
    take_b = (u * w_sum < w_b) & (w_b > 0)
    return w_sum, take_b


def restir_temporal_batch(cur: ReservoirGrid, prev: ReservoirGrid, ctx: PixelCtx,
                          rng: np.random.Generator,
                          clamp: float = RESTIR_TEMPORAL_CLAMP,
                          clamp_mode: str = "m") -> ReservoirGrid:
    """Merge each pixel's previous reservoir into the current one.

    The previous reservoir's history is limited to ``clamp`` times the
    current count (clamp_mode "m"); mode "contribution" instead limits its
    insertion weight.  Target weights are re-evaluated at the current pixel.
    """
    p = cur.n
    out = ReservoirGrid(p)
    phat_cur = ctx.phat_ids(cur.y)
    phat_prev = ctx.phat_ids(np.where(prev.valid, prev.y, -1))

    if clamp_mode == "m":
        m_prev = np.where(prev.valid, np.minimum(prev.M, clamp * cur.M), 0.0)
        w_prev = phat_prev * prev.W * m_prev
    elif clamp_mode == "contribution":
        m_prev = np.where(prev.valid, prev.M, 0.0)
        w_prev = phat_prev * prev.W * m_prev
        w_prev = np.minimum(w_prev, clamp * phat_cur * cur.W * cur.M)
    else:
        raise ValueError(f"unknown clamp mode {clamp_mode!r}")
    w_cur = phat_cur * cur.W * cur.M

    w_sum, take_prev = _merge_select(w_cur, w_prev, rng.random(p))
    out.y = np.where(take_prev, prev.y, cur.y)
    out.point = np.where(take_prev[:, None], prev.point, cur.point)
    out.w_sum = w_sum
    out.M = cur.M + m_prev
    out.w_y = np.where(take_prev, phat_prev, phat_cur)
    ok = (w_sum > 0) & (out.w_y > 0) & (out.M > 0)
    out.W = np.where(ok, w_sum / np.where(ok, out.M * out.w_y, 1.0), 0.0)
    out.y = np.where(ok, out.y, -1)
    out.valid[:] = True
    return out


def restir_temporal(current: Reservoir, previous: Reservoir | None,
                    sp: ShadingPoint, scene: Scene, rng: np.random.Generator,
                    clamp: float = RESTIR_TEMPORAL_CLAMP,
                    clamp_mode: str = "m") -> Reservoir:
    """Scalar temporal merge; previous=None means first frame / disocclusion."""
    cur = ReservoirGrid(1)
    cur.set_row(0, current)
    prev = ReservoirGrid(1)
    if previous is not None:
        prev.set_row(0, previous)
    else:
        return current
    out = restir_temporal_batch(cur, prev, _ctx_for(sp, scene), rng, clamp, clamp_mode)
    return out.row(0)


def restir_spatial_batch(grid: ReservoirGrid, ctx: PixelCtx, shape: tuple[int, int],
                         hit: np.ndarray, depth: np.ndarray, normals: np.ndarray,
                         rng: np.random.Generator, radius: int = RESTIR_RADIUS,
                         neighbors: int = RESTIR_NEIGHBORS) -> ReservoirGrid:
    """Merge a few random in-radius neighbor reservoirs per pixel.

    Neighbors are rejected when either pixel missed, normals disagree
    (dot < 0.9), or depths differ by more than 10%.
    """
    h, w = shape
    p = grid.n
    ys, xs = np.divmod(np.arange(p), w)

    acc_y = grid.y.copy()
    acc_pt = grid.point.copy()
    acc_wsum = ctx.phat_ids(grid.y) * grid.W * grid.M
    acc_m = grid.M.copy()

    for _ in range(neighbors):
        ang = rng.random(p) * 2.0 * np.pi
        rad = radius * np.sqrt(rng.random(p))
        dx = np.rint(rad * np.cos(ang)).astype(np.int64)
        dy = np.rint(rad * np.sin(ang)).astype(np.int64)
        nx = xs + dx
        ny = ys + dy
        inb = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h) & ((dx != 0) | (dy != 0))
        nidx = np.where(inb, ny * w + nx, 0)
        ok = inb & grid.valid[nidx] & hit & hit[nidx]
        ndot = np.einsum("pc,pc->p", normals, normals[nidx])
        ratio = depth[nidx] / np.maximum(depth, 1e-12)
        ok &= (ndot >= 0.9) & (ratio >= 0.9) & (ratio <= 1.1)

        n_y = np.where(ok, grid.y[nidx], -1)
        w_n = ctx.phat_ids(n_y) * grid.W[nidx] * grid.M[nidx]
        w_n = np.where(ok, w_n, 0.0)
        w_sum, take_n = _merge_select(acc_wsum, w_n, rng.random(p))
        acc_wsum = w_sum
        acc_y = np.where(take_n, n_y, acc_y)
        acc_pt = np.where(take_n[:, None], grid.point[nidx], acc_pt)
        acc_m = acc_m + np.where(ok, grid.M[nidx], 0.0)

    out = ReservoirGrid(p)
    out.y = acc_y
    out.point = acc_pt
    out.w_sum = acc_wsum
    out.M = acc_m
    out.w_y = ctx.phat_ids(acc_y)
    ok = (acc_wsum > 0) & (out.w_y > 0) & (acc_m > 0)
    out.W = np.where(ok, acc_wsum / np.where(ok, acc_m * out.w_y, 1.0), 0.0)
    out.y = np.where(ok, out.y, -1)
    out.valid[:] = True
    return out


def restir_spatial(pixel: tuple[int, int], grid: ReservoirGrid, gbuffer,
                   scene: Scene, rng: np.random.Generator,
                   radius: int = RESTIR_RADIUS,
                   neighbors: int = RESTIR_NEIGHBORS) -> Reservoir:
    """Scalar spatial reuse for one (x, y) pixel against a full grid."""
    px, py = pixel
    h, w = gbuffer.shape
    i = py * w + px
    ctx = PixelCtx(scene, gbuffer.position.reshape(-1, 3)[i][None],
                   gbuffer.normal.reshape(-1, 3)[i][None],
                   gbuffer.albedo.reshape(-1, 3)[i][None])

    hit = gbuffer.hit.reshape(-1)
    depth = gbuffer.depth.reshape(-1)
    normals = gbuffer.normal.reshape(-1, 3)
    acc = grid.row(i)
    acc_wsum = ctx.phat_ids(np.array([acc.y]))[0] * acc.W * acc.M
    acc_m = acc.M
    for _ in range(neighbors):
        ang = rng.random() * 2.0 * np.pi
        rad = radius * np.sqrt(rng.random())
        dx = int(np.rint(rad * np.cos(ang)))
        dy = int(np.rint(rad * np.sin(ang)))
        nx, ny = px + dx, py + dy
        u = rng.random()
        if (dx == 0 and dy == 0) or not (0 <= nx < w and 0 <= ny < h):
            continue
        j = ny * w + nx
        if not (grid.valid[j] and hit[i] and hit[j]):
            continue
        if normals[i] @ normals[j] < 0.9:
            continue
        ratio = depth[j] / max(depth[i], 1e-12)
        if not (0.9 <= ratio <= 1.1):
            continue
        w_n = ctx.phat_ids(grid.y[j][None])[0] * grid.W[j] * grid.M[j]
        w_sum = acc_wsum + w_n
        if w_n > 0 and u * w_sum < w_n:
            acc.y = int(grid.y[j])
            acc.point = grid.point[j].copy()
        acc_wsum = w_sum
        acc_m += grid.M[j]
    phat = ctx.phat_ids(np.array([acc.y]))[0]
    if acc_wsum > 0 and phat > 0 and acc_m > 0:
        return Reservoir(y=acc.y, point=acc.point, w_y=phat, w_sum=acc_wsum,
                         M=acc_m, W=acc_wsum / (acc_m * phat))
    return Reservoir(M=acc_m, w_sum=acc_wsum)
