"""Multi-resolution hash-grid positional encoding with trainable features.

Each level is a lattice of ``floor(base_resolution * scale**level)`` cells
per axis over the scene bounding box.  Vertices are addressed densely when
the level's vertex count fits the table, otherwise through a spatial hash;
features of the 8 surrounding vertices are blended trilinearly and levels
are concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Spatial-hash primes; hash(0,0,0) == 0 by construction.  Products are
# combined by modular addition: on the small coordinate boxes the coarse
# levels use, the resulting lattice stays near-uniform per table slot
# (XOR-combining the same products leaves low-bit slots unreachable).
HASH_PRIMES = (1, 2654435761, 805459861)

DEFAULT_LEVELS = 10
DEFAULT_BASE_RESOLUTION = 16
DEFAULT_FEATURES = 4
DEFAULT_TABLE_SIZE = 1 << 14
# Growth chosen so the finest of the 10 default levels reaches 512 cells/axis.
DEFAULT_SCALE = (512.0 / 16.0) ** (1.0 / 9.0)

FEATURE_INIT_SCALE = 1e-4


@dataclass
class HashGridConfig:
    levels: int = DEFAULT_LEVELS
    base_resolution: int = DEFAULT_BASE_RESOLUTION
    per_level_scale: float = DEFAULT_SCALE
    features_per_level: int = DEFAULT_FEATURES
    table_size: int = DEFAULT_TABLE_SIZE
    aabb_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    aabb_max: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        if self.levels < 1 or self.base_resolution < 1 or self.features_per_level < 1:
            raise ValueError("levels, base_resolution, features_per_level must be >= 1")
        if self.per_level_scale <= 1.0:
            raise ValueError("per_level_scale must be > 1")
        if self.table_size < 1 or self.table_size & (self.table_size - 1):
            raise ValueError("table_size must be a power of two")
        self.aabb_min = np.asarray(self.aabb_min, dtype=np.float64)
        self.aabb_max = np.asarray(self.aabb_max, dtype=np.float64)

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    @property
    def param_count(self) -> int:
        return self.levels * self.table_size * self.features_per_level

    def resolution(self, level: int) -> int:
        return int(np.floor(self.base_resolution * self.per_level_scale ** level))

    def dense(self, level: int) -> bool:
        n = self.resolution(level) + 1
        return n * n * n <= self.table_size


def clustered_config(**kw) -> HashGridConfig:
    """Coarser preset used when outputs are light clusters."""
    kw.setdefault("levels", 8)
    kw.setdefault("base_resolution", 2)
    return HashGridConfig(**kw)


def init_params(cfg: HashGridConfig, rng: np.random.Generator,
                dtype=np.float32) -> np.ndarray:
    """Feature table (levels, table_size, features), near-zero uniform init."""
    return rng.uniform(-FEATURE_INIT_SCALE, FEATURE_INIT_SCALE,
                       (cfg.levels, cfg.table_size, cfg.features_per_level)).astype(dtype)


def spatial_hash(coords, table_size: int):
    """Hash integer grid coordinates into [0, table_size). Vectorized."""
    c = np.asarray(coords, dtype=np.int64)
    h = (c[..., 0] * HASH_PRIMES[0] + c[..., 1] * HASH_PRIMES[1]
         + c[..., 2] * HASH_PRIMES[2])
    return h & (table_size - 1)


_CORNERS = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                    dtype=np.int64)


def _normalize(cfg: HashGridConfig, pos: np.ndarray) -> np.ndarray:
    span = np.maximum(cfg.aabb_max - cfg.aabb_min, 1e-12)
    q = (pos - cfg.aabb_min) / span
    return np.clip(q, 0.0, 1.0)


def _level_lookup(cfg: HashGridConfig, level: int, q: np.ndarray):
    """Vertex indices (B,8) and trilinear weights (B,8) for one level."""
    n = cfg.resolution(level)
    x = q * n
    c0 = np.minimum(x.astype(np.int64), n - 1)
    f = x - c0
    corners = c0[:, None, :] + _CORNERS[None, :, :]
    w = np.where(_CORNERS[None, :, :] == 1, f[:, None, :], 1.0 - f[:, None, :])
    w = w[:, :, 0] * w[:, :, 1] * w[:, :, 2]
    if cfg.dense(level):
        m = n + 1
        idx = corners[..., 0] + m * (corners[..., 1] + m * corners[..., 2])
    else:
        idx = spatial_hash(corners, cfg.table_size)
    return idx, w


def encode_batch(pos: np.ndarray, cfg: HashGridConfig, params: np.ndarray):
    """Encode (B,3) positions. Returns (features (B, L*F), ctx for backward)."""
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    q = _normalize(cfg, pos)
    b = q.shape[0]
    f = cfg.features_per_level
    out = np.empty((b, cfg.output_dim), dtype=params.dtype)
    ctx = []
    for lvl in range(cfg.levels):
        idx, w = _level_lookup(cfg, lvl, q)
        feats = params[lvl][idx]  # (B, 8, F)
        out[:, lvl * f:(lvl + 1) * f] = np.einsum(
            "bc,bcf->bf", w.astype(params.dtype), feats)
        ctx.append((idx, w))
    return out, ctx


def encode(pos, cfg: HashGridConfig, params: np.ndarray) -> np.ndarray:
    """Feature vector of length levels * features_per_level for one position."""
    out, _ = encode_batch(np.asarray(pos, dtype=np.float64)[None, :], cfg, params)
    return out[0]


def grad_from_ctx(cfg: HashGridConfig, ctx, upstream: np.ndarray,
                  dtype=None) -> np.ndarray:
    """Scatter upstream feature gradients back into a dense table gradient."""
    upstream = np.atleast_2d(upstream)
    f = cfg.features_per_level
    dtype = dtype or upstream.dtype
    grad = np.zeros((cfg.levels, cfg.table_size, f), dtype=dtype)
    for lvl, (idx, w) in enumerate(ctx):
        g = upstream[:, lvl * f:(lvl + 1) * f]  # (B, F)
        contrib = w[:, :, None] * g[:, None, :]  # (B, 8, F)
        np.add.at(grad[lvl], idx.reshape(-1), contrib.reshape(-1, f).astype(dtype))
    return grad


def encode_backward(pos, cfg: HashGridConfig, params: np.ndarray,
                    upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``upstream . encode(pos)`` w.r.t. the feature table.

    Only the <= 8 vertices touched per level receive gradient; the result
    is a dense (levels, table_size, features) array, zero elsewhere.
    """
    pos = np.asarray(pos, dtype=np.float64)
    q = _normalize(cfg, np.atleast_2d(pos))
    ctx = [_level_lookup(cfg, lvl, q) for lvl in range(cfg.levels)]
    return grad_from_ctx(cfg, ctx, np.atleast_2d(upstream), dtype=params.dtype)
