"""Numba kernels for the hot loops: BVH ray traversal and analytic
unshadowed light integrals.

Everything here operates on flat float64 arrays so the same compiled code
serves single-ray queries and million-ray batches.  Kernels are
deterministic (no reductions across threads, no RNG inside).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_STACK_DEPTH = 64

RECT = 0
POINT = 1


@njit(cache=True)
def ray_tri(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz,
            t_min, t_max):
    """Moller-Trumbore. Returns (t, u, v); t < 0 means miss.

    Inclusive edge tests so rays on shared edges hit at least one of the
    adjacent triangles instead of leaking through.
    """
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < t_min or t > t_max:
        return -1.0, 0.0, 0.0
    return t, u, v


@njit(cache=True)
def _aabb_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, t_max):
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    if t0 > t1:
        t0, t1 = t1, t0
    lo = t0
    hi = t1
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > lo:
        lo = t0
    if t1 < hi:
        hi = t1
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > lo:
        lo = t0
    if t1 < hi:
        hi = t1
    return hi >= lo and lo <= t_max and hi >= 0.0


@njit(cache=True)
def _inv_dir(d):
    if abs(d) < 1e-300:
        return 1e300 if d >= 0.0 else -1e300
    return 1.0 / d


@njit(cache=True)
def closest_hit(ox, oy, oz, dx, dy, dz, t_min, t_max,
                node_min, node_max, node_left, node_right,
                node_start, node_count, v0, v1, v2):
    """Nearest hit along one ray. Returns (t, tri_index, u, v); tri -1 on miss."""
    if v0.shape[0] == 0:
        return -1.0, -1, 0.0, 0.0
    ix = _inv_dir(dx)
    iy = _inv_dir(dy)
    iz = _inv_dir(dz)
    best_t = t_max
    best_tri = -1
    best_u = 0.0
    best_v = 0.0
    stack = np.empty(_STACK_DEPTH, dtype=np.int32)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        n = stack[top]
        if not _aabb_hit(ox, oy, oz, ix, iy, iz, node_min[n], node_max[n], best_t):
            continue
        cnt = node_count[n]
        if cnt > 0:
            s = node_start[n]
            for k in range(s, s + cnt):
                t, u, v = ray_tri(ox, oy, oz, dx, dy, dz,
                                  v0[k, 0], v0[k, 1], v0[k, 2],
                                  v1[k, 0], v1[k, 1], v1[k, 2],
                                  v2[k, 0], v2[k, 1], v2[k, 2],
                                  t_min, best_t)
                if t >= 0.0:
                    best_t = t
                    best_tri = k
                    best_u = u
                    best_v = v
        else:
            stack[top] = node_left[n]
            top += 1
            stack[top] = node_right[n]
            top += 1
    if best_tri < 0:
        return -1.0, -1, 0.0, 0.0
    return best_t, best_tri, best_u, best_v


@njit(cache=True)
def any_hit(ox, oy, oz, dx, dy, dz, t_min, t_max,
            node_min, node_max, node_left, node_right,
            node_start, node_count, v0, v1, v2):
    if v0.shape[0] == 0:
        return False
    ix = _inv_dir(dx)
    iy = _inv_dir(dy)
    iz = _inv_dir(dz)
    stack = np.empty(_STACK_DEPTH, dtype=np.int32)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        n = stack[top]
        if not _aabb_hit(ox, oy, oz, ix, iy, iz, node_min[n], node_max[n], t_max):
            continue
        cnt = node_count[n]
        if cnt > 0:
            s = node_start[n]
            for k in range(s, s + cnt):
                t, u, v = ray_tri(ox, oy, oz, dx, dy, dz,
                                  v0[k, 0], v0[k, 1], v0[k, 2],
                                  v1[k, 0], v1[k, 1], v1[k, 2],
                                  v2[k, 0], v2[k, 1], v2[k, 2],
                                  t_min, t_max)
                if t >= 0.0:
                    return True
        else:
            stack[top] = node_left[n]
            top += 1
            stack[top] = node_right[n]
            top += 1
    return False


@njit(cache=True)
def closest_hit_batch(orig, direc, t_min, t_max,
                      node_min, node_max, node_left, node_right,
                      node_start, node_count, v0, v1, v2,
                      out_t, out_tri, out_u, out_v):
    for i in range(orig.shape[0]):
        t, tri, u, v = closest_hit(orig[i, 0], orig[i, 1], orig[i, 2],
                                   direc[i, 0], direc[i, 1], direc[i, 2],
                                   t_min[i], t_max[i],
                                   node_min, node_max, node_left, node_right,
                                   node_start, node_count, v0, v1, v2)
        out_t[i] = t
        out_tri[i] = tri
        out_u[i] = u
        out_v[i] = v


@njit(cache=True)
def any_hit_batch(orig, direc, t_min, t_max,
                  node_min, node_max, node_left, node_right,
                  node_start, node_count, v0, v1, v2, out_hit):
    for i in range(orig.shape[0]):
        out_hit[i] = any_hit(orig[i, 0], orig[i, 1], orig[i, 2],
                             direc[i, 0], direc[i, 1], direc[i, 2],
                             t_min[i], t_max[i],
                             node_min, node_max, node_left, node_right,
                             node_start, node_count, v0, v1, v2)


# ---------------------------------------------------------------------------
# Analytic unshadowed light integrals.
#
# For a rectangular light the factor is the cosine-weighted solid angle of
# the polygon clipped to the upper hemisphere of the shading normal:
#
#     factor = integral over the visible part of the light of cos(theta) dw
#
# computed with the classic edge-arc sum.  Reflected radiance is then
# albedo/pi * radiance * factor.  For point lights the factor is
# max(0, cos(theta)) / r^2 (an intensity, not a radiance, integral).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rect_factor(px, py, pz, nx, ny, nz, verts, lnx, lny, lnz):
    # One-sided emitter: no energy behind the light plane.
    side = (px - verts[0, 0]) * lnx + (py - verts[0, 1]) * lny + (pz - verts[0, 2]) * lnz
    if side <= 0.0:
        return 0.0
    # Clip the (relative) quad against the shading horizon n . v >= 0.
    vx = np.empty(8, dtype=np.float64)
    vy = np.empty(8, dtype=np.float64)
    vz = np.empty(8, dtype=np.float64)
    cx = np.empty(8, dtype=np.float64)
    cy = np.empty(8, dtype=np.float64)
    cz = np.empty(8, dtype=np.float64)
    for i in range(4):
        vx[i] = verts[i, 0] - px
        vy[i] = verts[i, 1] - py
        vz[i] = verts[i, 2] - pz
    m = 4
    nc = 0
    for i in range(m):
        j = (i + 1) % m
        di = vx[i] * nx + vy[i] * ny + vz[i] * nz
        dj = vx[j] * nx + vy[j] * ny + vz[j] * nz
        if di >= 0.0:
            cx[nc] = vx[i]
            cy[nc] = vy[i]
            cz[nc] = vz[i]
            nc += 1
        if (di > 0.0 and dj < 0.0) or (di < 0.0 and dj > 0.0):
            s = di / (di - dj)
            cx[nc] = vx[i] + s * (vx[j] - vx[i])
            cy[nc] = vy[i] + s * (vy[j] - vy[i])
            cz[nc] = vz[i] + s * (vz[j] - vz[i])
            nc += 1
    if nc < 3:
        return 0.0
    # Normalize clipped vertices onto the unit sphere.
    for i in range(nc):
        ln = np.sqrt(cx[i] * cx[i] + cy[i] * cy[i] + cz[i] * cz[i])
        if ln < 1e-12:
            return 0.0
        cx[i] /= ln
        cy[i] /= ln
        cz[i] /= ln
    acc = 0.0
    for i in range(nc):
        j = (i + 1) % nc
        d = cx[i] * cx[j] + cy[i] * cy[j] + cz[i] * cz[j]
        if d > 1.0:
            d = 1.0
        elif d < -1.0:
            d = -1.0
        sin_t = np.sqrt(max(0.0, 1.0 - d * d))
        if sin_t < 1e-9:
            ratio = 1.0  # theta -> 0; antipodal pairs are measure zero
        else:
            ratio = np.arccos(d) / sin_t
        gx = cy[i] * cz[j] - cz[i] * cy[j]
        gy = cz[i] * cx[j] - cx[i] * cz[j]
        gz = cx[i] * cy[j] - cy[i] * cx[j]
        acc += ratio * (gx * nx + gy * ny + gz * nz)
    return 0.5 * abs(acc)


@njit(cache=True)
def _point_factor(px, py, pz, nx, ny, nz, lx, ly, lz):
    wx = lx - px
    wy = ly - py
    wz = lz - pz
    d2 = wx * wx + wy * wy + wz * wz
    if d2 < 1e-24:
        return 0.0
    inv = 1.0 / np.sqrt(d2)
    c = (wx * nx + wy * ny + wz * nz) * inv
    if c <= 0.0:
        return 0.0
    return c / d2


@njit(cache=True)
def light_factors_all(pos, nrm, lt_kind, lt_verts, lt_normal, out):
    """Unshadowed geometry factor for every (point, light) pair."""
    n = pos.shape[0]
    k = lt_kind.shape[0]
    for i in range(n):
        for j in range(k):
            if lt_kind[j] == RECT:
                out[i, j] = _rect_factor(pos[i, 0], pos[i, 1], pos[i, 2],
                                         nrm[i, 0], nrm[i, 1], nrm[i, 2],
                                         lt_verts[j],
                                         lt_normal[j, 0], lt_normal[j, 1],
                                         lt_normal[j, 2])
            else:
                out[i, j] = _point_factor(pos[i, 0], pos[i, 1], pos[i, 2],
                                          nrm[i, 0], nrm[i, 1], nrm[i, 2],
                                          lt_verts[j, 0, 0], lt_verts[j, 0, 1],
                                          lt_verts[j, 0, 2])


@njit(cache=True)
def light_factors_ids(pos, nrm, ids, lt_kind, lt_verts, lt_normal, out):
    """Unshadowed geometry factor for one chosen light per point (id < 0 -> 0)."""
    n = pos.shape[0]
    for i in range(n):
        j = ids[i]
        if j < 0:
            out[i] = 0.0
        elif lt_kind[j] == RECT:
            out[i] = _rect_factor(pos[i, 0], pos[i, 1], pos[i, 2],
                                  nrm[i, 0], nrm[i, 1], nrm[i, 2],
                                  lt_verts[j],
                                  lt_normal[j, 0], lt_normal[j, 1],
                                  lt_normal[j, 2])
        else:
            out[i] = _point_factor(pos[i, 0], pos[i, 1], pos[i, 2],
                                   nrm[i, 0], nrm[i, 1], nrm[i, 2],
                                   lt_verts[j, 0, 0], lt_verts[j, 0, 1],
                                   lt_verts[j, 0, 2])
