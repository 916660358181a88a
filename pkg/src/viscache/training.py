"""Per-frame training example generation and the fused train step.

Each frame draws a batch of world-space and screen-space positions, casts
one shadow ray per (position, light) or (position, cluster) pair to build
binary visibility targets, and feeds the batch straight into one optimizer
step (no intermediate storage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .cache import MODE_CLUSTERS, MODE_LIGHTS, MODE_RADIANCE
from .geometry import visibility_batch
from .sampling import ClusterSet
from .scene import Camera, Scene, camera_rays_batch

SCREEN_RETRY_ROUNDS = 8


@dataclass
class TrainFrameConfig:
    n_world: int = 4096
    n_screen: int = 4096
    steps: int = 1
    surface_samples: bool = False  # draw on-geometry points instead of world-space
    seed: int = 0

    @property
    def batch_size(self) -> int:
        return self.n_world + self.n_screen

    @classmethod
    def clustered(cls, **kw) -> "TrainFrameConfig":
        """Many-lights preset: 49,152 examples per frame."""
        kw.setdefault("n_world", 24576)
        kw.setdefault("n_screen", 24576)
        return cls(**kw)


def gen_world_samples(scene: Scene, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the scene bounding box."""
    if n == 0:
        return np.zeros((0, 3))
    return rng.uniform(scene.aabb_min, scene.aabb_max, size=(n, 3))


def gen_surface_samples(scene: Scene, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points on scene geometry, area-weighted over triangles."""
    if n == 0 or scene.n_triangles == 0:
        return np.zeros((0, 3))
    e1 = scene.triangles_v1 - scene.triangles_v0
    e2 = scene.triangles_v2 - scene.triangles_v0
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    pick = rng.choice(scene.n_triangles, size=n, p=areas / areas.sum())
    u = rng.random((n, 2))
    su = np.sqrt(u[:, 0:1])
    b1 = su * (1.0 - u[:, 1:2])
    b2 = su * u[:, 1:2]
    return (scene.triangles_v0[pick] * (1.0 - su)
            + scene.triangles_v1[pick] * b1 + scene.triangles_v2[pick] * b2)


def gen_screen_hits(scene: Scene, camera: Camera, n: int, rng: np.random.Generator):
    """Primary-ray hit points through uniformly random subpixel positions.

    Rays that miss are redrawn up to SCREEN_RETRY_ROUNDS times, then
    dropped, so the batch may come back short.  Returns (positions,
    normals, albedos, is_light).
    """
    from .render import trace_rays  # local import; render builds on training too

    pos = np.zeros((0, 3))
    nrm = np.zeros((0, 3))
    alb = np.zeros((0, 3))
    is_light = np.zeros(0, dtype=bool)
    want = n
    for _ in range(SCREEN_RETRY_ROUNDS + 1):
        if want == 0:
            break
        sx = rng.random(want) * camera.width
        sy = rng.random(want) * camera.height
        o, d = camera_rays_batch(camera, sx, sy)
        hit = trace_rays(scene, o, d)
        got = hit["hit"]
        pos = np.concatenate([pos, hit["position"][got]])
        nrm = np.concatenate([nrm, hit["normal"][got]])
        alb = np.concatenate([alb, hit["albedo"][got]])
        is_light = np.concatenate([is_light, hit["light_id"][got] >= 0])
        want -= int(got.sum())
    return pos, nrm, alb, is_light


def gen_screen_samples(scene: Scene, camera: Camera, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    pos, _, _, _ = gen_screen_hits(scene, camera, n, rng)
    return pos


def compute_visibility_targets(positions: np.ndarray, scene: Scene,
                               rng: np.random.Generator,
                               clusters: ClusterSet | None = None) -> np.ndarray:
    """Binary shadow-ray targets, one column per light (or per cluster).

    Light mode casts toward one fresh uniform point on every light; cluster
    mode picks a uniform member light per cluster first.  Fresh randomness
    per example is what lets the network regress the mean (penumbra or
    cluster average).
    """
    b = positions.shape[0]
    if clusters is None:
        k = scene.n_lights
        targets = np.empty((b, k), dtype=np.float32)
        for j in range(k):
            ids = np.full(b, j)
            pts = scene.light_points(ids, rng.random((b, 2)))
            targets[:, j] = visibility_batch(scene.bvh, positions, pts)
    else:
        k = clusters.m
        targets = np.empty((b, k), dtype=np.float32)
        for j in range(k):
            mem = clusters.members[j]
            ids = mem[rng.integers(0, mem.size, size=b)]
            pts = scene.light_points(ids, rng.random((b, 2)))
            targets[:, j] = visibility_batch(scene.bvh, positions, pts)
    return targets


def radiance_targets(positions, normals, albedos, scene: Scene,
                     rng: np.random.Generator) -> np.ndarray:
    """Single-sample shadowed direct light per position (RGB), for the
    radiance-caching baseline."""
    b = positions.shape[0]
    out = np.zeros((b, 3), dtype=np.float32)
    for j in range(scene.n_lights):
        ids = np.full(b, j)
        pts = scene.light_points(ids, rng.random((b, 2)))
        w = pts - positions
        d2 = np.maximum(np.einsum("bc,bc->b", w, w), 1e-24)
        w /= np.sqrt(d2)[:, None]
        cos_x = np.maximum(0.0, np.einsum("bc,bc->b", normals, w))
        if scene.is_rect[j]:
            cos_y = np.maximum(0.0, -w @ scene.lt_normal[j])
            geom = cos_x * cos_y / d2 * scene.lt_area[j]
        else:
            geom = cos_x / d2
        live = geom > 0
        if not np.any(live):
            continue
        vis = np.zeros(b)
        vis[live] = visibility_batch(scene.bvh, positions[live], pts[live])
        out += ((albedos / np.pi) * scene.lt_radiance[j]
                * (geom * vis)[:, None]).astype(np.float32)
    return out


def _world_positions(scene, cfg, rng):
    if cfg.surface_samples:
        return gen_surface_samples(scene, cfg.n_world, rng)
    return gen_world_samples(scene, cfg.n_world, rng)


def train_frame(scene: Scene, camera: Camera, cache, cfg: TrainFrameConfig,
                frame: int = 0, clusters: ClusterSet | None = None) -> float:
    """Generate a fresh batch and run the configured optimizer steps.

    Returns the last step's batch loss.
    """
    if cache.mode == MODE_CLUSTERS and clusters is None:
        raise ValueError("cluster-mode cache needs a ClusterSet")
    loss = 0.0
    for step in range(cfg.steps):
        key = (cfg.seed, frame, step)
        if cache.mode == MODE_RADIANCE:
            # Radiance targets need surface shading data, so all examples
            # come from the screen-space generator.
            pos, nrm, alb, is_light = gen_screen_hits(
                scene, camera, cfg.batch_size,
                rngmod.stream(*key, rngmod.SCREEN_SAMPLES))
            keep = ~is_light
            pos, nrm, alb = pos[keep], nrm[keep], alb[keep]
            targets = radiance_targets(pos, nrm, alb, scene,
                                       rngmod.stream(*key, rngmod.TARGETS))
        else:
            world = _world_positions(scene, cfg,
                                     rngmod.stream(*key, rngmod.WORLD_SAMPLES))
            screen = gen_screen_samples(scene, camera, cfg.n_screen,
                                        rngmod.stream(*key, rngmod.SCREEN_SAMPLES))
            pos = np.concatenate([world, screen])
            targets = compute_visibility_targets(
                pos, scene, rngmod.stream(*key, rngmod.TARGETS),
                clusters=clusters if cache.mode == MODE_CLUSTERS else None)
        if pos.shape[0] == 0:
            continue
        loss = cache.train_step(pos, targets)
    return loss
