"""Command-line entry point: render a scene in any mode, write the final
PFM + PPM preview + per-frame metrics CSV."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import imageio, rng as rngmod
from .hashgrid import (DEFAULT_BASE_RESOLUTION, DEFAULT_FEATURES, DEFAULT_LEVELS,
                       DEFAULT_TABLE_SIZE, HashGridConfig)
from .mlp import TrainStepConfig
from .render import (ALL_MODES, CLUSTER_MODES, MODE_REFERENCE, NEURAL_MODES,
                     RenderConfig, render_frame, FrameState)
from .sampling import (CLAMP_FLOOR, DEFAULT_CLUSTERS, RESTIR_CANDIDATES,
                       RESTIR_NEIGHBORS, RESTIR_RADIUS, RESTIR_TEMPORAL_CLAMP)
from .scene import Camera, SceneError, load_scene
from .training import TrainFrameConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="viscache",
        description="CPU direct-lighting renderer with an online-trained "
                    "neural visibility cache")
    p.add_argument("--scene", required=True, help="scene JSON path")
    p.add_argument("--mode", default="nls", choices=ALL_MODES)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, help="override camera width")
    p.add_argument("--height", type=int, help="override camera height")
    p.add_argument("--outdir", default=".", help="output directory")
    p.add_argument("--out-prefix", default=None,
                   help="output file prefix (default: the mode name)")
    p.add_argument("--reference", default=None,
                   help="PFM to compare against in the metrics CSV")
    p.add_argument("--checkpoint-frames", default="",
                   help="comma list of frame counts to snapshot as PFMs")
    p.add_argument("--spp-per-light", type=int, default=16,
                   help="reference mode: area samples per light per frame")

    g = p.add_argument_group("sampling")
    g.add_argument("--clamp-visibility", type=float, default=CLAMP_FLOOR)
    g.add_argument("--no-clamp", action="store_true",
                   help="disable the visibility floor (bias reproduction)")
    g.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS)
    g.add_argument("--restir-candidates", type=int, default=RESTIR_CANDIDATES)
    g.add_argument("--restir-radius", type=int, default=RESTIR_RADIUS)
    g.add_argument("--restir-neighbors", type=int, default=RESTIR_NEIGHBORS)
    g.add_argument("--restir-temporal-clamp", type=float, default=RESTIR_TEMPORAL_CLAMP)
    g.add_argument("--restir-clamp-mode", choices=("m", "contribution"), default="m")
    g.add_argument("--restir-order", choices=("temporal-first", "spatial-first"),
                   default="temporal-first")
    g.add_argument("--invalidate-reservoirs-at", type=int, default=None,
                   help="drop all previous reservoirs before this frame")

    g = p.add_argument_group("training")
    g.add_argument("--train-world-samples", type=int, default=None)
    g.add_argument("--train-screen-samples", type=int, default=None)
    g.add_argument("--train-steps-per-frame", type=int, default=1)
    g.add_argument("--train-surface-samples", action="store_true",
                   help="draw on-surface points instead of world-space points")
    g.add_argument("--lr-start", type=float, default=0.05)
    g.add_argument("--lr-end", type=float, default=0.001)
    g.add_argument("--lr-warm-steps", type=int, default=200)

    g = p.add_argument_group("encoding")
    g.add_argument("--hash-levels", type=int, default=None)
    g.add_argument("--hash-base-res", type=int, default=None)
    g.add_argument("--hash-features", type=int, default=None)
    g.add_argument("--hash-table-size", type=int, default=None)
    return p


def config_from_args(args) -> RenderConfig:
    if args.mode in CLUSTER_MODES:
        train = TrainFrameConfig.clustered(seed=args.seed)
    else:
        train = TrainFrameConfig(seed=args.seed)
    if args.train_world_samples is not None:
        train.n_world = args.train_world_samples
    if args.train_screen_samples is not None:
        train.n_screen = args.train_screen_samples
    train.steps = args.train_steps_per_frame
    train.surface_samples = args.train_surface_samples
    return RenderConfig(
        mode=args.mode, seed=args.seed, frames=args.frames,
        clamp_floor=None if args.no_clamp else args.clamp_visibility,
        clusters=args.clusters, train=train,
        restir_candidates=args.restir_candidates,
        restir_radius=args.restir_radius,
        restir_neighbors=args.restir_neighbors,
        restir_temporal_clamp=args.restir_temporal_clamp,
        restir_clamp_mode=args.restir_clamp_mode,
        restir_order=args.restir_order,
        spp_per_light=args.spp_per_light,
        invalidate_at=args.invalidate_reservoirs_at)


def _apply_neural_overrides(state: FrameState, args, scene) -> None:
    overrides = {k: v for k, v in (("levels", args.hash_levels),
                                   ("base_resolution", args.hash_base_res),
                                   ("features_per_level", args.hash_features),
                                   ("table_size", args.hash_table_size)) if v is not None}
    lr = TrainStepConfig(lr_start=args.lr_start, lr_end=args.lr_end,
                         warm_steps=args.lr_warm_steps)
    if args.mode not in NEURAL_MODES:
        return
    state.ensure_neural()
    needs_grid = bool(overrides)
    if needs_grid:
        from .cache import VisibilityCache
        base = state.cache.grid_cfg
        cfg = HashGridConfig(
            levels=overrides.get("levels", base.levels),
            base_resolution=overrides.get("base_resolution", base.base_resolution),
            features_per_level=overrides.get("features_per_level", base.features_per_level),
            table_size=overrides.get("table_size", base.table_size),
            per_level_scale=base.per_level_scale,
            aabb_min=scene.aabb_min, aabb_max=scene.aabb_max)
        state.cache = VisibilityCache(state.cache.mode, state.cache.output_dim,
                                      cfg, train=lr, seed=args.seed)
    else:
        state.cache.train_cfg = lr


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scene = load_scene(args.scene)
    except SceneError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    camera = scene.camera
    if args.width or args.height:
        camera = Camera(position=camera.position, look_at=camera.look_at,
                        up=camera.up, fov_deg=camera.fov_deg,
                        width=args.width or camera.width,
                        height=args.height or camera.height)

    try:
        config = config_from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    reference = None
    if args.reference:
        reference = imageio.read_pfm(args.reference).astype(np.float64)
        if reference.shape[:2] != (camera.height, camera.width):
            print("error: reference dimensions do not match the render",
                  file=sys.stderr)
            return 2

    checkpoints = set()
    if args.checkpoint_frames:
        checkpoints = {int(v) for v in args.checkpoint_frames.split(",") if v}

    prefix = args.out_prefix or args.mode
    os.makedirs(args.outdir, exist_ok=True)
    out = lambda ext: os.path.join(args.outdir, f"{prefix}{ext}")

    state = FrameState(scene, config, camera)
    _apply_neural_overrides(state, args, scene)
    rows = [imageio.METRICS_HEADER]
    for _ in range(config.frames):
        render_frame(scene, state, config)
        rows.append(imageio.metrics_row(state.count, state.accum_mean, reference,
                                        state.metrics[-1]["seconds"]))
        if state.count in checkpoints:
            imageio.write_pfm(state.accum_mean, out(f"_f{state.count}.pfm"))

    imageio.write_pfm(state.accum_mean, out(".pfm"))
    imageio.write_ppm(state.accum_mean, out(".ppm"))
    with open(out("_metrics.csv"), "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
