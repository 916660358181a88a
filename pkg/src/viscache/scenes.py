"""Bundled desk-scale scenes.

All three scenes share the same construction: a floor, thin horizontal
occluder plates, and a grid of downward-facing rectangular lights.  Keeping
plates and lights in planes parallel to the floor is what makes the
penumbra fraction analytically computable (central projection of a plate
onto the light plane stays an axis-aligned rectangle), which the tests
rely on.

Run ``python -m viscache.scenes <dir>`` to write the JSON files.
"""

from __future__ import annotations

import json
import os
import sys

_FLOOR_ALBEDO = [0.73, 0.73, 0.73]
_PLATE_ALBEDO = [0.62, 0.32, 0.26]
_WALL_ALBEDO = [0.65, 0.6, 0.55]
_CEIL_ALBEDO = [0.8, 0.8, 0.8]

_TINTS = [
    [1.0, 0.9, 0.78],
    [0.82, 1.0, 0.86],
    [0.8, 0.88, 1.0],
    [1.0, 0.8, 0.92],
]


def _quad(a, b, c, d):
    """Two triangles covering the quad a-b-c-d (loop order)."""
    return [[list(a), list(b), list(c)], [list(a), list(c), list(d)]]


def _plate(cx, cz, y, sx, sz):
    hx, hz = sx / 2.0, sz / 2.0
    return _quad((cx - hx, y, cz - hz), (cx + hx, y, cz - hz),
                 (cx + hx, y, cz + hz), (cx - hx, y, cz + hz))


def _down_light(cx, cz, y, size, radiance):
    h = size / 2.0
    return {"type": "rect",
            "corner": [cx - h, y, cz - h],
            "edge_u": [size, 0.0, 0.0],
            "edge_v": [0.0, 0.0, size],
            "radiance": list(radiance)}


def _grid_centers(n, lo, hi):
    if n == 1:
        return [(lo + hi) / 2.0]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _fin_x(x, z0, z1, h):
    """Vertical divider in the x = const plane."""
    return _quad((x, 0, z0), (x, 0, z1), (x, h, z1), (x, h, z0))


def _fin_z(z, x0, x1, h):
    return _quad((x0, 0, z), (x1, 0, z), (x1, h, z), (x0, h, z))


def boxes_scene(n_lights: int) -> dict:
    """A grid of n_lights rect lights (8 or 32) over an open-top cubicle
    grid inside a closed low-ceiling box.

    Each cell is lit by its own light plus a little spill from neighbors
    over the divider tops, so per-light visibility is near binary: a few
    lights fully visible, the rest hard-occluded (with penumbra bands near
    the dividers).  That is the regime where visibility-aware sampling
    pays off.  All occluders are axis-aligned rectangles, which keeps the
    floor-to-light visible fraction analytically computable.
    """
    if n_lights == 8:
        nx, nz = 4, 2
        light_size, base = 0.40, 16.0
        xs = _grid_centers(nx, -1.8, 1.8)
        zs = _grid_centers(nz, -1.0, 0.0)
        fin_x = [-1.2, 0.0, 1.2]
        fin_z = [-0.5, 0.6]
    elif n_lights == 32:
        nx, nz = 8, 4
        light_size, base = 0.28, 30.0
        xs = _grid_centers(nx, -2.1, 2.1)
        zs = _grid_centers(nz, -1.3, 0.5)
        fin_x = [-1.8 + 0.6 * k for k in range(7)]
        fin_z = [-1.0, -0.4, 0.2, 0.85]
    else:
        raise ValueError("boxes scene supports 8 or 32 lights")

    # x-dividers reach close under the light plane (hard cutoff between
    # columns); z-dividers are lower so neighbor light spills over them in
    # soft penumbra bands.
    fx, zn, zf, wh = 3.0, 3.0, -2.2, 1.5
    fh_x, fh_z = 1.1, 0.8
    floor = _quad((-fx, 0, zf), (fx, 0, zf), (fx, 0, zn), (-fx, 0, zn))
    ceil = _quad((-fx, wh, zf), (fx, wh, zf), (fx, wh, zn), (-fx, wh, zn))
    walls = (_quad((-fx, 0, zf), (fx, 0, zf), (fx, wh, zf), (-fx, wh, zf))
             + _quad((-fx, 0, zn), (fx, 0, zn), (fx, wh, zn), (-fx, wh, zn))
             + _quad((-fx, 0, zf), (-fx, 0, zn), (-fx, wh, zn), (-fx, wh, zf))
             + _quad((fx, 0, zf), (fx, 0, zn), (fx, wh, zn), (fx, wh, zf)))
    fins = []
    for x in fin_x:
        fins += _fin_x(x, zf, fin_z[-1], fh_x)
    for z in fin_z:
        fins += _fin_z(z, -fx, fx, fh_z)
    lights = []
    for i, (zc, xc) in enumerate((z, x) for z in zs for x in xs):
        tint = _TINTS[i % len(_TINTS)]
        # alternate bright and dim fixtures: a dim cell's only visible
        # light competes against bright occluded neighbors, which is the
        # regime where naive luminance-weighted sampling goes wrong
        ix = i % nx
        iz = i // nx
        level = 3.0 if (ix + iz) % 2 == 0 else 0.35
        lights.append(_down_light(xc, zc, 1.35, light_size,
                                  [base * level * t for t in tint]))

    return {
        "camera": {"position": [0.0, 1.25, 2.55], "look_at": [0.0, 0.0, -0.9],
                   "up": [0.0, 1.0, 0.0], "fov_deg": 48.0,
                   "width": 320, "height": 180},
        "materials": [{"albedo": _FLOOR_ALBEDO}, {"albedo": _PLATE_ALBEDO},
                      {"albedo": _WALL_ALBEDO}, {"albedo": _CEIL_ALBEDO}],
        "meshes": [{"material": 0, "triangles": floor},
                   {"material": 1, "triangles": fins},
                   {"material": 2, "triangles": walls},
                   {"material": 3, "triangles": ceil}],
        "lights": lights,
    }


def rooms_scene(n_lights: int = 1024) -> dict:
    """Three rooms split by doorway walls, with a ceiling grid of small lights."""
    nx = 32
    nz = max(1, n_lights // 32)
    if nx * nz != n_lights:
        raise ValueError("n_lights must be a multiple of 32")

    x0, x1, z0, z1, h = -4.8, 4.8, -1.7, 1.7, 3.0
    meshes = []
    floor = _quad((x0, 0, z0), (x1, 0, z0), (x1, 0, z1), (x0, 0, z1))
    ceil = _quad((x0, h, z0), (x1, h, z0), (x1, h, z1), (x0, h, z1))
    walls = []
    # Outer shell.
    walls += _quad((x0, 0, z0), (x1, 0, z0), (x1, h, z0), (x0, h, z0))
    walls += _quad((x0, 0, z1), (x1, 0, z1), (x1, h, z1), (x0, h, z1))
    walls += _quad((x0, 0, z0), (x0, 0, z1), (x0, h, z1), (x0, h, z0))
    walls += _quad((x1, 0, z0), (x1, 0, z1), (x1, h, z1), (x1, h, z0))
    # Interior dividers at x = +-1.6, each with a doorway gap.
    for xw in (-1.6, 1.6):
        door_z0, door_z1, door_h = -0.4, 0.6, 1.9
        walls += _quad((xw, 0, z0), (xw, 0, door_z0), (xw, h, door_z0), (xw, h, z0))
        walls += _quad((xw, 0, door_z1), (xw, 0, z1), (xw, h, z1), (xw, h, door_z1))
        walls += _quad((xw, door_h, door_z0), (xw, door_h, door_z1),
                       (xw, h, door_z1), (xw, h, door_z0))
    meshes.append({"material": 0, "triangles": floor})
    meshes.append({"material": 2, "triangles": ceil})
    meshes.append({"material": 3, "triangles": walls})

    lights = []
    xs = _grid_centers(nx, -4.5, 4.5)
    zs = _grid_centers(nz, -1.3, 1.3)
    for zc in zs:
        for xc in xs:
            room = 0 if xc < -1.6 else (1 if xc < 1.6 else 2)
            tint = [[1.0, 0.85, 0.7], [0.95, 0.95, 0.9], [0.7, 0.85, 1.0]][room]
            lights.append(_down_light(xc, zc, 2.8, 0.08, [8.0 * t for t in tint]))

    return {
        "camera": {"position": [0.5, 1.6, 1.1], "look_at": [-1.7, 0.3, -0.4],
                   "up": [0.0, 1.0, 0.0], "fov_deg": 60.0,
                   "width": 320, "height": 180},
        "materials": [{"albedo": _FLOOR_ALBEDO}, {"albedo": _PLATE_ALBEDO},
                      {"albedo": _CEIL_ALBEDO}, {"albedo": _WALL_ALBEDO}],
        "meshes": meshes,
        "lights": lights,
    }


BUILDERS = {
    "boxes8": lambda: boxes_scene(8),
    "boxes32": lambda: boxes_scene(32),
    "rooms1k": lambda: rooms_scene(1024),
}


def write_bundled(out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, build in BUILDERS.items():
        p = os.path.join(out_dir, f"{name}.json")
        with open(p, "w", encoding="utf-8") as f:
            json.dump(build(), f)
            f.write("\n")
        paths.append(p)
    return paths


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "scenes"
    for p in write_bundled(target):
        print(p)
