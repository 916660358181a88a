"""Scene description: geometry, lights, materials, camera, JSON loading.

Light ids are dense 0..N-1 in file order; the visibility cache's output
neurons are bound to that ordering, so it must never be permuted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Bvh, Ray, build_bvh


class SceneError(ValueError):
    """Scene file failed to parse or validate."""


LUMA = np.array([0.2126, 0.7152, 0.0722])


def luminance(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb) @ LUMA


@dataclass
class Material:
    albedo: np.ndarray

    def __post_init__(self):
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if self.albedo.shape != (3,) or np.any(self.albedo < 0) or np.any(self.albedo > 1):
            raise SceneError(f"albedo must be RGB in [0,1]^3, got {self.albedo}")


@dataclass
class Light:
    kind: str  # "rect" | "point"
    radiance: np.ndarray  # emitted radiance (rect) or intensity (point)
    corner: np.ndarray | None = None
    edge_u: np.ndarray | None = None
    edge_v: np.ndarray | None = None
    position: np.ndarray | None = None
    normal: np.ndarray = field(init=False)
    area: float = field(init=False)

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance, dtype=np.float64)
        if self.radiance.shape != (3,) or np.any(self.radiance < 0):
            raise SceneError(f"light radiance must be nonnegative RGB, got {self.radiance}")
        if self.kind == "rect":
            self.corner = np.asarray(self.corner, dtype=np.float64)
            self.edge_u = np.asarray(self.edge_u, dtype=np.float64)
            self.edge_v = np.asarray(self.edge_v, dtype=np.float64)
            n = np.cross(self.edge_u, self.edge_v)
            a = float(np.linalg.norm(n))
            if a <= 0.0:
                raise SceneError("degenerate rect light (zero area)")
            self.normal = n / a
            self.area = a
        elif self.kind == "point":
            self.position = np.asarray(self.position, dtype=np.float64)
            self.normal = np.zeros(3)
            self.area = 0.0
        else:
            raise SceneError(f"unknown light type {self.kind!r}")

    @property
    def vertices(self) -> np.ndarray:
        """Quad corners in loop order (point lights: position repeated)."""
        if self.kind == "point":
            return np.tile(self.position, (4, 1))
        c, u, v = self.corner, self.edge_u, self.edge_v
        return np.stack([c, c + u, c + u + v, c + v])

    def centroid(self) -> np.ndarray:
        if self.kind == "point":
            return self.position
        return self.corner + 0.5 * self.edge_u + 0.5 * self.edge_v

    def sample_point(self, u1: float, u2: float):
        """Uniform point on the emitter and its area pdf (1.0 for point lights)."""
        if self.kind == "point":
            return self.position.copy(), 1.0
        return self.corner + u1 * self.edge_u + u2 * self.edge_v, 1.0 / self.area


@dataclass
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov_deg: float
    width: int
    height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if not (0.0 < self.fov_deg < 180.0):
            raise SceneError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.width < 1 or self.height < 1:
            raise SceneError("image dimensions must be >= 1")

    def basis(self):
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise SceneError("camera up vector parallel to view direction")
        right /= rn
        true_up = np.cross(right, fwd)
        return fwd, right, true_up


def camera_primary_ray(camera: Camera, px: int, py: int, u1: float, u2: float) -> Ray:
    """Pinhole ray through sub-pixel position (px+u1, py+u2); py 0 = top row."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px},{py}) outside {camera.width}x{camera.height}")
    o, d = camera_rays_batch(camera, np.array([px + u1]), np.array([py + u2]))
    return Ray(o[0], d[0])


def camera_rays_batch(camera: Camera, sx: np.ndarray, sy: np.ndarray):
    """Rays through continuous image coords sx in [0,W], sy in [0,H]."""
    fwd, right, true_up = camera.basis()
    tan_half = np.tan(np.radians(camera.fov_deg) * 0.5)
    aspect = camera.width / camera.height
    ndc_x = (2.0 * sx / camera.width - 1.0) * tan_half * aspect
    ndc_y = (1.0 - 2.0 * sy / camera.height) * tan_half
    d = fwd[None, :] + ndc_x[:, None] * right[None, :] + ndc_y[:, None] * true_up[None, :]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(camera.position, d.shape).copy()
    return o, d


def geometry_term(x, n_x, y, n_y=None) -> float:
    """Clamped-cosine / squared-distance term; pass n_y=None for point lights."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = y - x
    d2 = float(d @ d)
    if d2 <= 0.0:
        raise ValueError("geometry_term requires x != y")
    w = d / np.sqrt(d2)
    cos_x = max(0.0, float(np.dot(n_x, w)))
    if n_y is None:
        return cos_x / d2
    cos_y = max(0.0, float(np.dot(n_y, -w)))
    return cos_x * cos_y / d2


@dataclass
class Scene:
    triangles_v0: np.ndarray
    triangles_v1: np.ndarray
    triangles_v2: np.ndarray
    tri_material: np.ndarray  # index into materials, -1 for emitter triangles
    tri_light: np.ndarray     # light id, -1 for non-emitter triangles
    materials: list[Material]
    lights: list[Light]
    camera: Camera
    bvh: Bvh = field(init=False)
    aabb_min: np.ndarray = field(init=False)
    aabb_max: np.ndarray = field(init=False)

    def __post_init__(self):
        if len(self.lights) < 1:
            raise SceneError("scene must contain at least one light")
        self.bvh = build_bvh(self.triangles_v0, self.triangles_v1, self.triangles_v2)
        pts = [self.triangles_v0, self.triangles_v1, self.triangles_v2]
        pts += [lt.vertices for lt in self.lights]
        allp = np.concatenate([p.reshape(-1, 3) for p in pts if p.size], axis=0)
        self.aabb_min = allp.min(axis=0)
        self.aabb_max = allp.max(axis=0)
        # Packed tables consumed by the numba light kernels.
        k = len(self.lights)
        self.lt_kind = np.array([kernels.RECT if lt.kind == "rect" else kernels.POINT
                                 for lt in self.lights], dtype=np.uint8)
        self.lt_verts = np.ascontiguousarray(
            np.stack([lt.vertices for lt in self.lights]), dtype=np.float64)
        self.lt_normal = np.ascontiguousarray(
            np.stack([lt.normal for lt in self.lights]), dtype=np.float64)
        self.lt_area = np.array([lt.area for lt in self.lights])
        self.lt_radiance = np.ascontiguousarray(
            np.stack([lt.radiance for lt in self.lights]), dtype=np.float64)
        self.mat_albedo = (np.stack([m.albedo for m in self.materials])
                           if self.materials else np.zeros((0, 3)))
        self.is_rect = self.lt_kind == kernels.RECT

    @property
    def n_lights(self) -> int:
        return len(self.lights)

    @property
    def n_triangles(self) -> int:
        return self.triangles_v0.shape[0]

    def light_points(self, ids: np.ndarray, u: np.ndarray):
        """Uniform emitter points for per-row light ids; u is (n,2) uniforms."""
        ids = np.asarray(ids)
        safe = np.maximum(ids, 0)
        verts = self.lt_verts[safe]
        corner = verts[:, 0]
        eu = verts[:, 1] - verts[:, 0]
        ev = verts[:, 3] - verts[:, 0]
        pts = corner + u[:, :1] * eu + u[:, 1:2] * ev
        is_pt = self.lt_kind[safe] == kernels.POINT
        pts[is_pt] = verts[is_pt, 0]
        return pts


def _vec3(obj, ctx: str) -> np.ndarray:
    try:
        a = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise SceneError(f"{ctx}: not a number triple ({e})") from None
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise SceneError(f"{ctx}: expected 3 finite numbers, got {obj!r}")
    return a


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise SceneError("scene root must be a JSON object")
    for key in ("camera", "materials", "meshes", "lights"):
        if key not in data:
            raise SceneError(f"missing top-level key {key!r}")

    cam = data["camera"]
    try:
        camera = Camera(position=_vec3(cam["position"], "camera.position"),
                        look_at=_vec3(cam["look_at"], "camera.look_at"),
                        up=_vec3(cam["up"], "camera.up"),
                        fov_deg=float(cam["fov_deg"]),
                        width=int(cam["width"]), height=int(cam["height"]))
    except KeyError as e:
        raise SceneError(f"camera: missing field {e.args[0]!r}") from None

    materials = []
    for i, m in enumerate(data["materials"]):
        if "albedo" not in m:
            raise SceneError(f"materials[{i}]: missing 'albedo'")
        materials.append(Material(albedo=_vec3(m["albedo"], f"materials[{i}].albedo")))

    lights = []
    for i, l in enumerate(data["lights"]):
        ctx = f"lights[{i}]"
        kind = l.get("type")
        if kind == "rect":
            lights.append(Light(kind="rect",
                                corner=_vec3(l["corner"], f"{ctx}.corner"),
                                edge_u=_vec3(l["edge_u"], f"{ctx}.edge_u"),
                                edge_v=_vec3(l["edge_v"], f"{ctx}.edge_v"),
                                radiance=_vec3(l["radiance"], f"{ctx}.radiance")))
        elif kind == "point":
            lights.append(Light(kind="point",
                                position=_vec3(l["position"], f"{ctx}.position"),
                                radiance=_vec3(l["intensity"], f"{ctx}.intensity")))
        else:
            raise SceneError(f"{ctx}: unknown light type {kind!r}")
    if not lights:
        raise SceneError("scene must declare at least one light")

    v0s, v1s, v2s, mats, lids = [], [], [], [], []
    for mi, mesh in enumerate(data["meshes"]):
        mat = mesh.get("material")
        if not isinstance(mat, int) or not (0 <= mat < len(materials)):
            raise SceneError(f"meshes[{mi}]: material index {mat!r} out of range")
        for ti, tri in enumerate(mesh.get("triangles", [])):
            ctx = f"meshes[{mi}].triangles[{ti}]"
            if len(tri) != 3:
                raise SceneError(f"{ctx}: expected 3 vertices")
            a = _vec3(tri[0], ctx)
            b = _vec3(tri[1], ctx)
            c = _vec3(tri[2], ctx)
            if np.linalg.norm(np.cross(b - a, c - a)) <= 0.0:
                raise SceneError(f"{ctx}: degenerate triangle")
            v0s.append(a)
            v1s.append(b)
            v2s.append(c)
            mats.append(mat)
            lids.append(-1)

    # Rect emitters are part of the intersectable geometry (two triangles
    # each, winding chosen so the geometric normal equals the light normal).
    for li, lt in enumerate(lights):
        if lt.kind != "rect":
            continue
        q = lt.vertices
        for a, b, c in ((q[0], q[1], q[2]), (q[0], q[2], q[3])):
            v0s.append(a)
            v1s.append(b)
            v2s.append(c)
            mats.append(-1)
            lids.append(li)

    if v0s:
        v0 = np.stack(v0s)
        v1 = np.stack(v1s)
        v2 = np.stack(v2s)
    else:
        v0 = v1 = v2 = np.zeros((0, 3))
    return Scene(triangles_v0=v0, triangles_v1=v1, triangles_v2=v2,
                 tri_material=np.asarray(mats, dtype=np.int32),
                 tri_light=np.asarray(lids, dtype=np.int32),
                 materials=materials, lights=lights, camera=camera)


def load_scene(path) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise SceneError(f"{path}: invalid JSON at line {e.lineno}, col {e.colno}: {e.msg}") from None
    try:
        return scene_from_dict(data)
    except SceneError as e:
        raise SceneError(f"{path}: {e}") from None
