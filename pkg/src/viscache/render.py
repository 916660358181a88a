"""Frame loop: G-buffer, per-mode light sampling, shading, accumulation,
and the brute-force reference renderer used as the error oracle.

Primary-ray jitter is keyed by pixel only, so a static scene yields the
same G-buffer every frame and for every run seed; all per-frame randomness
lives in the sampling and training streams.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .cache import MODE_CLUSTERS, MODE_LIGHTS, MODE_RADIANCE, VisibilityCache, make_cache
from .geometry import intersect_scene_batch, visibility_batch
from .sampling import (CLAMP_FLOOR, DEFAULT_CLUSTERS, RESTIR_CANDIDATES,
                       RESTIR_NEIGHBORS, RESTIR_RADIUS, RESTIR_TEMPORAL_CLAMP,
                       ClusterSet, PixelCtx, ReservoirGrid, clustered_sample_batch,
                       cnvc_initial_batch, kmeans_cluster, neural_di_batch,
                       nls_sample_batch, ris_initial_batch, restir_spatial_batch,
                       restir_temporal_batch, wrs_select_batch)
from .scene import Camera, Scene, camera_rays_batch
from .training import TrainFrameConfig, train_frame

MODE_UNIFORM = "uniform"
MODE_RIS = "ris"
MODE_RESTIR = "restir"
MODE_NLS = "nls"
MODE_NEURAL_DI = "neural-di"
MODE_CNVC = "cnvc"
MODE_CNVC_RESTIR = "cnvc-restir"
MODE_NRC_DI = "nrc-di"
MODE_REFERENCE = "reference"

ALL_MODES = (MODE_UNIFORM, MODE_RIS, MODE_RESTIR, MODE_NLS, MODE_NEURAL_DI,
             MODE_CNVC, MODE_CNVC_RESTIR, MODE_NRC_DI, MODE_REFERENCE)
NEURAL_MODES = (MODE_NLS, MODE_NEURAL_DI, MODE_CNVC, MODE_CNVC_RESTIR, MODE_NRC_DI)
CLUSTER_MODES = (MODE_CNVC, MODE_CNVC_RESTIR)
RESTIR_MODES = (MODE_RESTIR, MODE_CNVC_RESTIR)

# Above this many (pixel, light) pairs the per-pixel factor matrix is not
# cached and weights are evaluated on demand.
FACTOR_CACHE_LIMIT = 64_000_000


def trace_rays(scene: Scene, origins: np.ndarray, directions: np.ndarray) -> dict:
    """Closest-hit shading attributes for a ray batch."""
    n = origins.shape[0]
    t_min = np.zeros(n)
    t_max = np.full(n, np.inf)
    t, tri, _, _ = intersect_scene_batch(scene.bvh, origins, directions, t_min, t_max)
    hit = tri >= 0
    safe = np.maximum(tri, 0)
    pos = origins + t[:, None] * directions
    e1 = scene.triangles_v1[safe] - scene.triangles_v0[safe]
    e2 = scene.triangles_v2[safe] - scene.triangles_v0[safe]
    nrm = np.cross(e1, e2)
    nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-300)
    facing = np.einsum("pc,pc->p", nrm, directions) > 0
    front = ~facing  # geometric normal pointed back at the ray origin
    nrm[facing] *= -1.0
    mat = scene.tri_material[safe]
    alb = np.where((mat >= 0)[:, None], scene.mat_albedo[np.maximum(mat, 0)], 0.0)
    light_id = np.where(hit, scene.tri_light[safe], -1)
    emissive = np.zeros((n, 3))
    lit = (light_id >= 0) & front
    emissive[lit] = scene.lt_radiance[light_id[lit]]
    return {"hit": hit, "position": np.where(hit[:, None], pos, 0.0),
            "normal": np.where(hit[:, None], nrm, 0.0),
            "albedo": np.where(hit[:, None], alb, 0.0),
            "depth": np.where(hit, t, np.inf),
            "light_id": light_id, "emissive": emissive}


@dataclass
class GBuffer:
    width: int
    height: int
    hit: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    albedo: np.ndarray
    depth: np.ndarray
    light_id: np.ndarray
    emissive: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def flat(self, name: str) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape(self.n_pixels, *a.shape[2:])


def make_gbuffer(scene: Scene, camera: Camera | None = None) -> GBuffer:
    camera = camera or scene.camera
    w, h = camera.width, camera.height
    jit = rngmod.stream(rngmod.PRIMARY).random((h * w, 2))
    ys, xs = np.divmod(np.arange(h * w), w)
    o, d = camera_rays_batch(camera, xs + jit[:, 0], ys + jit[:, 1])
    tr = trace_rays(scene, o, d)
    return GBuffer(width=w, height=h,
                   hit=tr["hit"].reshape(h, w),
                   position=tr["position"].reshape(h, w, 3),
                   normal=tr["normal"].reshape(h, w, 3),
                   albedo=tr["albedo"].reshape(h, w, 3),
                   depth=tr["depth"].reshape(h, w),
                   light_id=tr["light_id"].reshape(h, w),
                   emissive=tr["emissive"].reshape(h, w, 3))


def _memo(scene: Scene) -> dict:
    memo = getattr(scene, "_render_memo", None)
    if memo is None:
        memo = {}
        scene._render_memo = memo
    return memo


def gbuffer_and_ctx(scene: Scene, camera: Camera | None = None):
    """G-buffer plus a PixelCtx over all pixels, memoized on the scene."""
    camera = camera or scene.camera
    key = ("gbuf", camera.width, camera.height, tuple(camera.position),
           tuple(camera.look_at), camera.fov_deg)
    memo = _memo(scene)
    if key not in memo:
        gb = make_gbuffer(scene, camera)
        ctx = PixelCtx(scene, gb.flat("position"), gb.flat("normal"),
                       gb.flat("albedo"))
        if gb.n_pixels * scene.n_lights <= FACTOR_CACHE_LIMIT:
            ctx.factor_matrix()
            ctx.lum_matrix()
        memo[key] = (gb, ctx)
    return memo[key]


@dataclass
class RenderConfig:
    mode: str = MODE_UNIFORM
    seed: int = 0
    frames: int = 1
    clamp_floor: float | None = CLAMP_FLOOR
    clusters: int = DEFAULT_CLUSTERS
    train: TrainFrameConfig | None = None
    restir_candidates: int = RESTIR_CANDIDATES
    restir_radius: int = RESTIR_RADIUS
    restir_neighbors: int = RESTIR_NEIGHBORS
    restir_temporal_clamp: float = RESTIR_TEMPORAL_CLAMP
    restir_clamp_mode: str = "m"
    restir_order: str = "temporal-first"
    spp_per_light: int = 16
    invalidate_at: int | None = None

    def __post_init__(self):
        if self.mode not in ALL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.restir_order not in ("temporal-first", "spatial-first"):
            raise ValueError(f"unknown restir order {self.restir_order!r}")
        if self.train is None:
            if self.mode in CLUSTER_MODES:
                self.train = TrainFrameConfig.clustered(seed=self.seed)
            else:
                self.train = TrainFrameConfig(seed=self.seed)


class FrameState:
    """Running accumulation, reservoir history, and cache handle for a run."""

    def __init__(self, scene: Scene, config: RenderConfig,
                 camera: Camera | None = None):
        self.scene = scene
        self.config = config
        self.camera = camera or scene.camera
        n = self.camera.width * self.camera.height
        self.frame = 0
        self.accum_sum = np.zeros((n, 3))
        self.count = 0
        self.prev: ReservoirGrid | None = None
        self.cache: VisibilityCache | None = None
        self.clusters: ClusterSet | None = None
        self.last_estimate: np.ndarray | None = None
        self.last_loss: float | None = None
        self.metrics: list[dict] = []

    @property
    def accum_mean(self) -> np.ndarray:
        h, w = self.camera.height, self.camera.width
        if self.count == 0:
            return np.zeros((h, w, 3))
        return (self.accum_sum / self.count).reshape(h, w, 3)

    def estimate_image(self) -> np.ndarray:
        h, w = self.camera.height, self.camera.width
        return self.last_estimate.reshape(h, w, 3)

    def ensure_neural(self) -> None:
        cfg = self.config
        if cfg.mode in CLUSTER_MODES and self.clusters is None:
            self.clusters = kmeans_cluster(
                self.scene.lights, cfg.clusters,
                rngmod.stream(cfg.seed, rngmod.CLUSTERING))
        if self.cache is None:
            if cfg.mode in CLUSTER_MODES:
                self.cache = make_cache(self.scene, MODE_CLUSTERS, seed=cfg.seed,
                                        clusters=self.clusters.m)
            elif cfg.mode == MODE_NRC_DI:
                self.cache = make_cache(self.scene, MODE_RADIANCE, seed=cfg.seed)
            else:
                self.cache = make_cache(self.scene, MODE_LIGHTS, seed=cfg.seed)


def shade_batch(scene: Scene, positions, normals, albedos, ids, points, big_w):
    """One-shadow-ray area-measure estimate per row:
    albedo/pi * L_e * G * V * area * W (point lights drop the area term)."""
    n = positions.shape[0]
    out = np.zeros((n, 3))
    ids = np.asarray(ids)
    live = (ids >= 0) & (big_w > 0)
    if not np.any(live):
        return out
    safe = np.maximum(ids, 0)
    w = points - positions
    d2 = np.maximum(np.einsum("pc,pc->p", w, w), 1e-24)
    w = w / np.sqrt(d2)[:, None]
    cos_x = np.maximum(0.0, np.einsum("pc,pc->p", normals, w))
    is_rect = scene.is_rect[safe]
    cos_y = np.maximum(0.0, -np.einsum("pc,pc->p", w, scene.lt_normal[safe]))
    geom = np.where(is_rect,
                    cos_x * cos_y / d2 * scene.lt_area[safe],
                    cos_x / d2)
    live &= geom > 0
    if not np.any(live):
        return out
    vis = np.zeros(n)
    vis[live] = visibility_batch(scene.bvh, positions[live], points[live])
    amp = geom * big_w * vis
    out[live] = (albedos[live] / np.pi) * scene.lt_radiance[safe[live]] * amp[live, None]
    return out


def shade_pixel(sp, light_sample, scene: Scene) -> np.ndarray:
    """Scalar shading of one (light id, point, W) sample."""
    lid, point, big_w = light_sample
    if big_w < 0:
        raise ValueError("contribution weight must be nonnegative")
    return shade_batch(scene, sp.position[None], sp.normal[None], sp.albedo[None],
                       np.array([lid]), np.atleast_2d(point), np.array([big_w]))[0]


def nrc_di_shade(sp, cache) -> np.ndarray:
    """Radiance-cache baseline lookup, clamped to be nonnegative."""
    return np.maximum(np.asarray(cache.infer(sp.position[None])[0], dtype=np.float64), 0.0)


def _uniform_samples(scene, ctx, rng):
    ids = rng.integers(0, scene.n_lights, size=ctx.n)
    pts = scene.light_points(ids, rng.random((ctx.n, 2)))
    return ids, pts, np.full(ctx.n, float(scene.n_lights))


def _reference_estimate(scene, ctx, gb, rng):
    """Full shadowed sum with one fresh area sample per light."""
    flat_pos = ctx.positions
    flat_nrm = ctx.normals
    flat_alb = ctx.albedos
    est = np.zeros((ctx.n, 3))
    for j in range(scene.n_lights):
        ids = np.full(ctx.n, j)
        pts = scene.light_points(ids, rng.random((ctx.n, 2)))
        est += shade_batch(scene, flat_pos, flat_nrm, flat_alb, ids, pts,
                           np.ones(ctx.n))
    return est


def render_frame(scene: Scene, state: FrameState, config: RenderConfig | None = None) -> FrameState:
    """Run the five-pass frame loop once and accumulate the estimate.

    Passes: (1) G-buffer, (2) training data, (3) training, (4) inference and
    light sampling, (5) shading.  Passes 2-4 collapse per mode (reference
    skips 2-4; analytic neural modes skip the shadow ray in 5).
    """
    config = config or state.config
    t0 = time.perf_counter()
    gb, ctx = gbuffer_and_ctx(scene, state.camera)
    frame = state.frame
    seed = config.seed
    mode = config.mode

    if mode in NEURAL_MODES:
        state.ensure_neural()
        state.last_loss = train_frame(scene, state.camera, state.cache,
                                      config.train, frame=frame,
                                      clusters=state.clusters)

    hit = gb.flat("hit")
    est = gb.flat("emissive").copy()

    if mode == MODE_REFERENCE:
        est += _reference_estimate(scene, ctx, gb,
                                   rngmod.stream(seed, frame, rngmod.LIGHT_POINT))
    elif mode == MODE_UNIFORM:
        ids, pts, ws = _uniform_samples(scene, ctx,
                                        rngmod.stream(seed, frame, rngmod.LIGHT_SELECT))
        est += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos, ids, pts, ws)
    elif mode == MODE_RIS:
        grid = ris_initial_batch(ctx, rngmod.stream(seed, frame, rngmod.RESTIR_INITIAL),
                                 config.restir_candidates)
        est += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos,
                           grid.y, grid.point, grid.W)
    elif mode == MODE_NLS:
        ids, pts, ws = nls_sample_batch(ctx, state.cache,
                                        rngmod.stream(seed, frame, rngmod.LIGHT_SELECT),
                                        config.clamp_floor)
        est += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos, ids, pts, ws)
    elif mode == MODE_NEURAL_DI:
        est += neural_di_batch(ctx, state.cache)
    elif mode == MODE_NRC_DI:
        pred = np.maximum(np.asarray(state.cache.infer(ctx.positions), dtype=np.float64), 0.0)
        shadable = hit & (gb.flat("light_id") < 0)
        est[shadable] += pred[shadable]
    elif mode == MODE_CNVC:
        ids, pts, ws = clustered_sample_batch(
            ctx, state.cache, state.clusters,
            rngmod.stream(seed, frame, rngmod.LIGHT_SELECT), config.clamp_floor)
        est += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos, ids, pts, ws)
    elif mode in RESTIR_MODES:
        if mode == MODE_RESTIR:
            grid = ris_initial_batch(ctx,
                                     rngmod.stream(seed, frame, rngmod.RESTIR_INITIAL),
                                     config.restir_candidates)
        else:
            grid = cnvc_initial_batch(ctx, state.cache, state.clusters,
                                      rngmod.stream(seed, frame, rngmod.RESTIR_INITIAL),
                                      config.clamp_floor)
        prev = state.prev
        if config.invalidate_at is not None and frame == config.invalidate_at and prev is not None:
            prev = None
        if prev is None:
            prev = ReservoirGrid(ctx.n)  # everything invalid

        def temporal(g):
            return restir_temporal_batch(
                g, prev, ctx, rngmod.stream(seed, frame, rngmod.RESTIR_TEMPORAL),
                config.restir_temporal_clamp, config.restir_clamp_mode)

        def spatial(g):
            return restir_spatial_batch(
                g, ctx, gb.shape, hit, gb.flat("depth"), ctx.normals,
                rngmod.stream(seed, frame, rngmod.RESTIR_SPATIAL),
                config.restir_radius, config.restir_neighbors)

        if config.restir_order == "temporal-first":
            grid = spatial(temporal(grid))
        else:
            grid = temporal(spatial(grid))
        state.prev = grid
        est += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos,
                           grid.y, grid.point, grid.W)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    state.last_estimate = est
    state.accum_sum += est
    state.count += 1
    state.metrics.append({"frame": frame, "seconds": time.perf_counter() - t0})
    state.frame += 1
    return state


def render(scene: Scene, config: RenderConfig, camera: Camera | None = None,
           checkpoints: dict[int, np.ndarray] | None = None) -> FrameState:
    """Run config.frames frames; optionally snapshot accumulations at the
    1-based frame counts listed in ``checkpoints`` (filled in place)."""
    state = FrameState(scene, config, camera)
    for _ in range(config.frames):
        render_frame(scene, state, config)
        if checkpoints is not None and state.count in checkpoints:
            checkpoints[state.count] = state.accum_mean
    return state


def reference_render(scene: Scene, camera: Camera | None = None,
                     spp_per_light: int = 16, seed: int = 0) -> np.ndarray:
    """Exhaustive shadowed estimator: every light, spp area samples each.

    This is the oracle image all error metrics compare against.
    """
    if spp_per_light < 1:
        raise ValueError("spp_per_light must be >= 1")
    camera = camera or scene.camera
    gb, ctx = gbuffer_and_ctx(scene, camera)
    est = gb.flat("emissive").copy()
    for j in range(scene.n_lights):
        g = rngmod.stream(seed, "reference", j)
        ids = np.full(ctx.n, j)
        acc = np.zeros((ctx.n, 3))
        reps = 1 if scene.lights[j].kind == "point" else spp_per_light
        for _ in range(reps):
            pts = scene.light_points(ids, g.random((ctx.n, 2)))
            acc += shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos,
                               ids, pts, np.ones(ctx.n))
        est += acc / reps
    return est.reshape(camera.height, camera.width, 3)


def unshadowed_sum_image(scene: Scene, camera: Camera | None = None) -> np.ndarray:
    """Per-pixel analytic sum with V forced to 1 (upper bound for any mode)."""
    camera = camera or scene.camera
    gb, ctx = gbuffer_and_ctx(scene, camera)
    est = gb.flat("emissive") + ctx.unshadowed_rgb(np.ones((ctx.n, scene.n_lights)))
    return est.reshape(camera.height, camera.width, 3)
