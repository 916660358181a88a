"""Trainable cache mapping a 3D position to per-light visibility, per-cluster
visibility, or RGB radiance (baseline), through the hash-grid encoder and MLP.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from . import rng as rngmod
from .hashgrid import HashGridConfig, clustered_config, encode_batch, grad_from_ctx, init_params
from .mlp import (LEAKY, SIGMOID, AdamState, MLPConfig, MLPParams, TrainStepConfig,
                  adam_step, backward_l2, forward, he_init, l2_loss, lr_at)

MODE_LIGHTS = "lights"
MODE_CLUSTERS = "clusters"
MODE_RADIANCE = "radiance"

_SNAP_MAGIC = b"VCSNAP1\n"


class VisibilityCache:
    """Online-trained cache; one output neuron per light, cluster, or channel."""

    def __init__(self, mode: str, output_dim: int, grid: HashGridConfig,
                 train: TrainStepConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        if mode not in (MODE_LIGHTS, MODE_CLUSTERS, MODE_RADIANCE):
            raise ValueError(f"unknown cache mode {mode!r}")
        self.mode = mode
        self.output_dim = output_dim
        self.grid_cfg = grid
        out_act = LEAKY if mode == MODE_RADIANCE else SIGMOID
        self.net_cfg = MLPConfig(input_dim=grid.output_dim, output_dim=output_dim,
                                 output_activation=out_act)
        self.train_cfg = train or TrainStepConfig()
        self.dtype = np.dtype(dtype)
        g = rngmod.stream(seed, rngmod.INIT_PARAMS)
        self.grid_params = init_params(grid, g, dtype=self.dtype)
        self.net_params = he_init(self.net_cfg, g, dtype=self.dtype)
        self.adam = AdamState.for_params(self._param_dict())
        self.step = 0

    def _param_dict(self) -> dict[str, np.ndarray]:
        return {"grid": self.grid_params, **self.net_params.as_dict()}

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self._param_dict().values())

    def infer(self, positions: np.ndarray) -> np.ndarray:
        """Predictions for (B,3) positions, shape (B, output_dim)."""
        feats, _ = encode_batch(positions, self.grid_cfg, self.grid_params)
        out, _ = forward(self.net_params, self.net_cfg, feats)
        return out

    def train_step(self, positions: np.ndarray, targets: np.ndarray,
                   mask: np.ndarray | None = None) -> float:
        """One fused encode/forward/backward/Adam update. Returns batch loss."""
        feats, ctx = encode_batch(positions, self.grid_cfg, self.grid_params)
        out, cache = forward(self.net_params, self.net_cfg, feats)
        loss = l2_loss(out, targets, mask)
        net_grads, d_feats = backward_l2(self.net_params, self.net_cfg, cache,
                                         targets, mask)
        grid_grad = grad_from_ctx(self.grid_cfg, ctx, d_feats, dtype=self.dtype)
        lr = lr_at(self.step, self.train_cfg)
        adam_step(self._param_dict(),
                  {"grid": grid_grad, **net_grads.as_dict()}, self.adam, lr)
        self.step += 1
        return loss

    # -- snapshots ---------------------------------------------------------

    def save(self, path) -> None:
        """Flat little-endian float32 blob behind a JSON header."""
        arrays = self._param_dict()
        header = {
            "mode": self.mode,
            "output_dim": self.output_dim,
            "step": self.step,
            "grid": {**{k: v for k, v in asdict(self.grid_cfg).items()
                        if k not in ("aabb_min", "aabb_max")},
                     "aabb_min": self.grid_cfg.aabb_min.tolist(),
                     "aabb_max": self.grid_cfg.aabb_max.tolist()},
            "train": asdict(self.train_cfg),
            "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        }
        blob = json.dumps(header).encode("utf-8")
        with open(path, "wb") as f:
            f.write(_SNAP_MAGIC)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            for v in arrays.values():
                f.write(np.ascontiguousarray(v, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "VisibilityCache":
        with open(path, "rb") as f:
            magic = f.read(len(_SNAP_MAGIC))
            if magic != _SNAP_MAGIC:
                raise ValueError(f"{path}: not a cache snapshot")
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode("utf-8"))
            grid = HashGridConfig(**header["grid"])
            obj = cls(mode=header["mode"], output_dim=header["output_dim"],
                      grid=grid, train=TrainStepConfig(**header["train"]))
            obj.step = header["step"]
            arrays = obj._param_dict()
            for spec in header["arrays"]:
                shape = tuple(spec["shape"])
                n = int(np.prod(shape))
                data = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
                arrays[spec["name"]][...] = data
        return obj


def make_cache(scene, mode: str, seed: int = 0, clusters: int | None = None,
               grid: HashGridConfig | None = None,
               train: TrainStepConfig | None = None,
               dtype=np.float32) -> VisibilityCache:
    """Cache sized to the scene: K lights, K clusters, or 3 RGB outputs."""
    box = {"aabb_min": scene.aabb_min, "aabb_max": scene.aabb_max}
    if mode == MODE_LIGHTS:
        out = scene.n_lights
        grid = grid or HashGridConfig(**box)
    elif mode == MODE_CLUSTERS:
        if clusters is None:
            raise ValueError("cluster mode needs a cluster count")
        out = clusters
        grid = grid or clustered_config(**box)
    elif mode == MODE_RADIANCE:
        out = 3
        grid = grid or HashGridConfig(**box)
    else:
        raise ValueError(f"unknown cache mode {mode!r}")
    return VisibilityCache(mode, out, grid, train=train, seed=seed, dtype=dtype)
