"""viscache: CPU direct-lighting renderer built around an online-trained
neural visibility cache, with reservoir-based light sampling and classical
RIS / screen-space ReSTIR baselines."""

import os

__version__ = "0.1.0"

# Cap numba's worker pool when requested; rendering math is deterministic
# either way because kernels only write disjoint per-ray outputs.
_threads = os.environ.get("NVC_THREADS")
if _threads:
    try:
        import numba

        numba.set_num_threads(max(1, int(_threads)))
    except (ImportError, ValueError):
        pass

from .cache import MODE_CLUSTERS, MODE_LIGHTS, MODE_RADIANCE, VisibilityCache, make_cache
from .geometry import (Bvh, Ray, Triangle, build_bvh, intersect_scene,
                       ray_triangle_intersect, sample_triangle_uniform, visibility)
from .hashgrid import HashGridConfig, encode, encode_backward, spatial_hash
from .mlp import (AdamState, MLPConfig, MLPParams, TrainStepConfig, adam_step,
                  backward_l2, forward, he_init, lr_at)
from .render import RenderConfig, FrameState, reference_render, render, render_frame
from .sampling import (ClusterSet, Reservoir, ShadingPoint, clamp_visibility,
                       clustered_sample, cnvc_initial_candidates, kmeans_cluster,
                       neural_di_shade, nls_sample, ris_initial_candidates,
                       restir_spatial, restir_temporal, unshadowed_weight, wrs_select)
from .scene import Camera, Light, Material, Scene, SceneError, camera_primary_ray, geometry_term, load_scene
from .training import TrainFrameConfig, compute_visibility_targets, gen_screen_samples, gen_world_samples, train_frame
