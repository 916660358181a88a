import numpy as np
import pytest

from viscache.scene import Camera, Scene, scene_from_dict
from viscache.scenes import boxes_scene, rooms_scene


def quad_mesh(a, b, c, d):
    return [[list(a), list(b), list(c)], [list(a), list(c), list(d)]]


def make_scene(lights, meshes=None, materials=None, camera=None) -> Scene:
    return scene_from_dict({
        "camera": camera or {"position": [0, 1.5, 3], "look_at": [0, 0, 0],
                             "up": [0, 1, 0], "fov_deg": 50.0,
                             "width": 64, "height": 48},
        "materials": materials or [{"albedo": [0.7, 0.7, 0.7]}],
        "meshes": meshes or [],
        "lights": lights,
    })


def down_light(cx, cz, y, size, radiance=(10.0, 10.0, 10.0)):
    h = size / 2.0
    return {"type": "rect", "corner": [cx - h, y, cz - h],
            "edge_u": [size, 0, 0], "edge_v": [0, 0, size],
            "radiance": list(radiance)}


FLOOR = quad_mesh((-4, 0, -4), (4, 0, -4), (4, 0, 4), (-4, 0, 4))


@pytest.fixture(scope="session")
def single_light_scene():
    """One 1x1 light 2m above an 8x8 floor; nothing occludes."""
    return make_scene([down_light(0.0, 0.0, 2.0, 1.0)],
                      meshes=[{"material": 0, "triangles": FLOOR}])


@pytest.fixture(scope="session")
def penumbra_scene_dict():
    """One light, one plate: the floor has clean umbra/penumbra bands."""
    plate = quad_mesh((-0.5, 1, -0.5), (0.5, 1, -0.5), (0.5, 1, 0.5), (-0.5, 1, 0.5))
    return {
        "camera": {"position": [0, 1.6, 3.2], "look_at": [0, 0, 0],
                   "up": [0, 1, 0], "fov_deg": 55.0, "width": 96, "height": 54},
        "materials": [{"albedo": [0.7, 0.7, 0.7]}, {"albedo": [0.5, 0.3, 0.3]}],
        "meshes": [{"material": 0, "triangles": FLOOR},
                   {"material": 1, "triangles": plate}],
        "lights": [down_light(0.0, 0.0, 2.0, 0.8)],
    }


@pytest.fixture(scope="session")
def penumbra_scene(penumbra_scene_dict):
    return scene_from_dict(penumbra_scene_dict)


@pytest.fixture(scope="session")
def boxes8_dict():
    return boxes_scene(8)


@pytest.fixture(scope="session")
def boxes8(boxes8_dict):
    return scene_from_dict(boxes8_dict)


@pytest.fixture(scope="session")
def boxes32_dict():
    return boxes_scene(32)


@pytest.fixture(scope="session")
def boxes32(boxes32_dict):
    return scene_from_dict(boxes32_dict)


@pytest.fixture(scope="session")
def rooms1k():
    return scene_from_dict(rooms_scene(1024))


def small_camera(scene, width=160, height=90) -> Camera:
    c = scene.camera
    return Camera(position=c.position, look_at=c.look_at, up=c.up,
                  fov_deg=c.fov_deg, width=width, height=height)


@pytest.fixture(scope="session")
def two_cluster_scene():
    """6 lights in two spatially separated triples over a floor, with one
    plate shadowing part of it (used by the clustered-sampling tests)."""
    plate = quad_mesh((-1.4, 1, -0.6), (-0.2, 1, -0.6), (-0.2, 1, 0.6), (-1.4, 1, 0.6))
    lights = [down_light(-2.2 + 0.5 * i, 0.0, 2.0, 0.3, (9.0, 8.0, 7.0)) for i in range(3)]
    lights += [down_light(1.7 + 0.5 * i, 0.0, 2.0, 0.3, (6.0, 8.0, 10.0)) for i in range(3)]
    return make_scene(lights,
                      meshes=[{"material": 0, "triangles": FLOOR},
                              {"material": 0, "triangles": plate}])
