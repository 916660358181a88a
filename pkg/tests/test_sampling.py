import numpy as np
import pytest
from scipy import stats

from viscache import rng as rngmod
from viscache.cache import MODE_CLUSTERS, MODE_LIGHTS, make_cache
from viscache.geometry import visibility, visibility_batch
from viscache.sampling import (CLAMP_FLOOR, ClusterSet, PixelCtx, Reservoir,
                               ShadingPoint, clamp_visibility, clustered_sample,
                               clustered_sample_batch, kmeans_cluster,
                               neural_di_shade, nls_sample, nls_weights_batch,
                               unshadowed_weight, unshadowed_rgb_one, wrs_select,
                               wrs_select_batch)
from viscache.scene import Light, luminance
from viscache.training import TrainFrameConfig, train_frame

from conftest import down_light, make_scene, FLOOR
from oracles import mc_unshadowed_luminance


class FixedCache:
    """Duck-typed cache stub returning one fixed prediction row."""

    def __init__(self, row, mode=MODE_LIGHTS):
        self.row = np.asarray(row, dtype=np.float64)
        self.mode = mode
        self.output_dim = len(self.row)

    def infer(self, positions):
        return np.tile(self.row, (np.atleast_2d(positions).shape[0], 1))


def sp_at(scene, pos=(0.0, 0.0, 0.0)):
    return ShadingPoint(position=np.asarray(pos, dtype=float),
                        normal=np.array([0.0, 1.0, 0.0]),
                        albedo=scene.materials[0].albedo)


class TestClamp:
    def test_paper_examples(self):
        assert clamp_visibility(0.0) == 0.001
        assert clamp_visibility(-0.2) == 0.001
        assert clamp_visibility(0.5) == 0.5

    def test_vectorized(self):
        v = clamp_visibility(np.array([-1.0, 0.0, 0.0005, 0.2]))
        np.testing.assert_allclose(v, [0.001, 0.001, 0.001, 0.2])


class TestWrsSelect:
    def test_single_weight(self):
        r = wrs_select([5.0], rngmod.stream(40))
        assert r.y == 0
        assert r.W == pytest.approx(1.0)
        assert r.w_sum == pytest.approx(5.0)

    def test_all_zero_weights(self):
        r = wrs_select([0.0, 0.0], rngmod.stream(41))
        assert r.empty
        assert r.W == 0.0

    def test_two_weight_frequency(self):
        # batched draw of 10^6 selections from the same implementation
        rng = rngmod.stream(42)
        w = np.tile([1.0, 3.0], (1_000_000, 1))
        idx, _, _ = wrs_select_batch(w, rng)
        p1 = (idx == 1).mean()
        assert p1 == pytest.approx(0.75, abs=0.002)

    def test_scalar_matches_pmf(self):
        rng = rngmod.stream(43)
        w = np.array([0.5, 2.0, 1.0, 0.25])
        counts = np.zeros(4)
        n = 20_000
        for _ in range(n):
            counts[wrs_select(w, rng).y] += 1
        chi = stats.chisquare(counts, w / w.sum() * n)
        assert chi.pvalue > 0.001

    def test_reservoir_invariant(self):
        rng = rngmod.stream(44)
        for _ in range(50):
            w = rng.random(6) * (rng.random(6) > 0.3)
            r = wrs_select(w, rng)
            if not r.empty:
                assert r.W == pytest.approx(r.w_sum / (r.M * r.w_y))
                assert r.w_sum >= r.w_y >= 0
            assert r.M == 6

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            wrs_select([0.5, -0.1], rngmod.stream(45))

    def test_chi_square_32_lights(self):
        # selection frequencies match w_i / sum(w) on random weight vectors
        rng = rngmod.stream(46)
        for trial in range(3):
            w = rng.random(32) + 0.05
            draws = wrs_select_batch(np.tile(w, (200_000, 1)), rng)[0]
            counts = np.bincount(draws, minlength=32)
            chi = stats.chisquare(counts, w / w.sum() * 200_000)
            assert chi.pvalue > 0.001


class TestUnshadowedWeight:
    def test_light_below_horizon_is_zero(self, single_light_scene):
        sp = ShadingPoint(position=np.array([0.0, 0.0, 0.0]),
                          normal=np.array([0.0, -1.0, 0.0]),  # facing away
                          albedo=np.array([0.7, 0.7, 0.7]))
        assert unshadowed_weight(sp, 0, single_light_scene) == 0.0

    def test_point_behind_one_sided_light_is_zero(self, single_light_scene):
        sp = sp_at(single_light_scene, (0.0, 3.0, 0.0))  # above the light
        assert unshadowed_weight(sp, 0, single_light_scene) == 0.0

    def test_small_distant_light_matches_point_approximation(self):
        # 2cm light 3m away: solid angle ~ 4.4e-5 sr
        scene = make_scene([down_light(0.8, 0.3, 3.0, 0.02, (50.0, 50.0, 50.0))],
                           meshes=[{"material": 0, "triangles": FLOOR}])
        sp = sp_at(scene)
        light = scene.lights[0]
        got = unshadowed_weight(sp, 0, scene)
        d = light.centroid() - sp.position
        dist2 = d @ d
        w = d / np.sqrt(dist2)
        cos_x = w @ sp.normal
        cos_y = -w @ light.normal
        rgb = sp.albedo / np.pi * light.radiance * (light.area * cos_x * cos_y / dist2)
        assert got == pytest.approx(float(luminance(rgb)), rel=0.01)

    def test_matches_monte_carlo_area_integral(self, single_light_scene):
        rng = rngmod.stream(47)
        for pos in ([0.3, 0.0, 0.2], [1.5, 0.0, -0.7], [0.1, 0.5, 2.2]):
            sp = sp_at(single_light_scene, pos)
            got = unshadowed_weight(sp, 0, single_light_scene)
            want = mc_unshadowed_luminance(sp.position, sp.normal, sp.albedo,
                                           single_light_scene.lights[0],
                                           1_000_000, rng)
            assert got == pytest.approx(want, rel=0.005)

    def test_nonnegative_everywhere(self, boxes32):
        rng = rngmod.stream(48)
        pts = rng.uniform(boxes32.aabb_min, boxes32.aabb_max, (200, 3))
        nrm = rng.normal(size=(200, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        ctx = PixelCtx(boxes32, pts, nrm, np.full((200, 3), 0.6))
        assert np.all(ctx.lum_matrix() >= 0.0)


class TestNlsSample:
    def test_single_light_selected_with_w_one(self, single_light_scene):
        cache = FixedCache([0.7])
        lid, point, w = nls_sample(sp_at(single_light_scene), cache,
                                   single_light_scene, rngmod.stream(49))
        assert lid == 0
        assert w == pytest.approx(1.0)
        assert point[1] == pytest.approx(2.0)  # on the light plane

    def test_equal_predictions_follow_unshadowed_distribution(self, boxes8):
        cache = FixedCache([0.5] * 8)
        sp = sp_at(boxes8, (0.4, 0.0, 0.1))
        ctx = PixelCtx(boxes8, sp.position[None], sp.normal[None], sp.albedo[None])
        lum = ctx.lum_matrix()[0]
        rng = rngmod.stream(50)
        n = 200_000
        w = nls_weights_batch(ctx, cache)
        idx, _, _ = wrs_select_batch(np.tile(w, (n, 1)), rng)
        counts = np.bincount(idx, minlength=8)
        chi = stats.chisquare(counts, lum / lum.sum() * n)
        assert chi.pvalue > 0.001

    def test_exhaustive_expectation_equals_shadowed_sum(self, boxes8):
        # closed-form unbiasedness: selection pmf is known, so the estimator
        # expectation conditional on fixed per-light points is exact
        rng = rngmod.stream(51)
        cache = FixedCache(rng.random(8))
        sp = sp_at(boxes8, (-0.3, 0.0, -0.2))
        ctx = PixelCtx(boxes8, sp.position[None], sp.normal[None], sp.albedo[None])
        w = nls_weights_batch(ctx, cache, CLAMP_FLOOR)[0]
        p_sel = w / w.sum()
        total = np.zeros(3)
        expect = np.zeros(3)
        for k in range(8):
            u = rng.random(2)
            y, pdf_a = boxes8.lights[k].sample_point(*u)
            vis = visibility(sp.position, y, boxes8.bvh)
            d = y - sp.position
            d2 = d @ d
            wdir = d / np.sqrt(d2)
            g = max(0.0, wdir @ sp.normal) * max(0.0, -wdir @ boxes8.lights[k].normal) / d2
            c = sp.albedo / np.pi * boxes8.lights[k].radiance * g * vis / pdf_a
            total += c
            expect += p_sel[k] * c * (w.sum() / w[k])
        np.testing.assert_allclose(expect, total, rtol=1e-12)

    def test_empty_when_all_below_horizon(self, single_light_scene):
        sp = ShadingPoint(position=np.array([0.0, 0.0, 0.0]),
                          normal=np.array([0.0, -1.0, 0.0]),
                          albedo=np.array([0.7, 0.7, 0.7]))
        lid, _, w = nls_sample(sp, FixedCache([0.9]), single_light_scene,
                               rngmod.stream(52))
        assert lid == -1 and w == 0.0


class TestNeuralDi:
    def test_untrained_cache_gives_half_unshadowed_sum(self, boxes8):
        cache = FixedCache([0.5] * 8)
        sp = sp_at(boxes8, (0.2, 0.0, 0.4))
        got = neural_di_shade(sp, cache, boxes8)
        want = 0.5 * sum(unshadowed_rgb_one(sp, k, boxes8) for k in range(8))
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_trained_cache_probes(self, penumbra_scene):
        scene = penumbra_scene
        cache = make_cache(scene, MODE_LIGHTS, seed=9)
        cfg = TrainFrameConfig(n_world=512, n_screen=512, seed=9)
        for f in range(512):
            train_frame(scene, scene.camera, cache, cfg, frame=f)
        lit = sp_at(scene, (2.5, 0.0, 1.5))
        dark = sp_at(scene, (0.0, 0.0, 0.0))
        unshadowed = unshadowed_rgb_one(lit, 0, scene)
        got_lit = neural_di_shade(lit, cache, scene)
        np.testing.assert_allclose(got_lit, unshadowed, rtol=0.05)
        got_dark = neural_di_shade(dark, cache, scene)
        dark_unshadowed = unshadowed_rgb_one(dark, 0, scene)
        assert luminance(got_dark) < 0.05 * luminance(dark_unshadowed)


class TestKmeans:
    def lights_at(self, positions):
        return [Light(kind="point", position=np.asarray(p, float),
                      radiance=np.ones(3)) for p in positions]

    def test_k_equals_n_gives_singletons(self):
        pts = rngmod.stream(53).random((5, 3))
        cs = kmeans_cluster(self.lights_at(pts), 5, rngmod.stream(54))
        assert cs.m == 5
        assert sorted(int(m[0]) for m in cs.members) == [0, 1, 2, 3, 4]

    def test_k_above_n_reduces(self):
        pts = rngmod.stream(55).random((3, 3))
        cs = kmeans_cluster(self.lights_at(pts), 32, rngmod.stream(56))
        assert cs.m == 3

    def test_two_separated_groups(self):
        rng = rngmod.stream(57)
        a = rng.normal(0, 0.1, (10, 3))
        b = rng.normal(0, 0.1, (10, 3)) + np.array([20.0, 0, 0])
        cs = kmeans_cluster(self.lights_at(np.vstack([a, b])), 2, rngmod.stream(58))
        sets = [set(m.tolist()) for m in cs.members]
        assert set(range(10)) in sets and set(range(10, 20)) in sets

    def test_partition_invariant(self, rooms1k):
        cs = kmeans_cluster(rooms1k.lights, 32, rngmod.stream(59))
        assert cs.m == 32
        all_ids = np.concatenate(cs.members)
        assert len(all_ids) == 1024
        assert len(np.unique(all_ids)) == 1024

    def test_inertia_nonincreasing(self):
        rng = rngmod.stream(60)
        for trial in range(5):
            pts = rng.random((64, 3))
            cs = kmeans_cluster(self.lights_at(pts), 8, rng)
            h = cs.inertia_history
            assert all(a >= b - 1e-9 for a, b in zip(h, h[1:]))


def two_cluster_setup(scene, preds=(0.9, 0.2)):
    clusters = kmeans_cluster(scene.lights, 2, rngmod.stream(61))
    # order clusters deterministically: cluster 0 = lights 0-2 (negative x)
    if clusters.centroids[0][0] > 0:
        clusters = ClusterSet(centroids=clusters.centroids[::-1].copy(),
                              members=list(reversed(clusters.members)))
    cache = FixedCache(list(preds), mode=MODE_CLUSTERS)
    return clusters, cache


class TestClusteredSample:
    def test_one_cluster_one_light_deterministic(self, single_light_scene):
        clusters = ClusterSet(centroids=np.zeros((1, 3)),
                              members=[np.array([0])])
        cache = FixedCache([0.6], mode=MODE_CLUSTERS)
        sp = sp_at(single_light_scene)
        lid, point, w = clustered_sample(sp, cache, clusters,
                                         single_light_scene, rngmod.stream(62))
        assert lid == 0
        # p(x) = 1: the only cluster, the only light; W must undo the
        # target-weight resampling exactly
        assert w == pytest.approx(1.0)

    def test_selection_pmf_matches_composition(self, two_cluster_scene):
        scene = two_cluster_scene
        clusters, cache = two_cluster_setup(scene)
        sp = sp_at(scene, (0.5, 0.0, 0.3))
        ctx = PixelCtx(scene, sp.position[None], sp.normal[None], sp.albedo[None])
        lum = ctx.lum_matrix()[0]
        cw = clamp_visibility(np.array([0.9, 0.2]))
        # analytic two-step pmf: cluster WRS x within-cluster RIS (phat/sum)
        pmf = np.zeros(6)
        for j, mem in enumerate(clusters.members):
            inner = lum[mem] / lum[mem].sum()
            pmf[mem] = (cw[j] / cw.sum()) * inner
        n = 1_000_000
        ids, _, _ = clustered_sample_batch(
            PixelCtx(scene, np.tile(sp.position, (n, 1)),
                     np.tile(sp.normal, (n, 1)), np.tile(sp.albedo, (n, 1))),
            cache, clusters, rngmod.stream(63))
        counts = np.bincount(ids, minlength=6) / n
        tv = 0.5 * np.abs(counts - pmf).sum()
        assert tv < 0.005

    def test_unbiased_against_full_sum(self, two_cluster_scene):
        scene = two_cluster_scene
        clusters, cache = two_cluster_setup(scene, preds=(0.35, 0.75))
        probe = np.array([-0.8, 0.0, 0.0])  # partially shadowed by the plate
        sp = ShadingPoint(probe, np.array([0.0, 1.0, 0.0]),
                          scene.materials[0].albedo)
        n = 2_000_000
        ctx = PixelCtx(scene, np.tile(probe, (n, 1)),
                       np.tile(sp.normal, (n, 1)), np.tile(sp.albedo, (n, 1)))
        rng = rngmod.stream(64)
        ids, pts, w = clustered_sample_batch(ctx, cache, clusters, rng)
        from viscache.render import shade_batch
        est = shade_batch(scene, ctx.positions, ctx.normals, ctx.albedos,
                          ids, pts, w)
        lum_est = est @ np.array([0.2126, 0.7152, 0.0722])
        # reference: exhaustive shadowed sum with many area samples
        total = np.zeros(3)
        for k in range(6):
            for _ in range(200):
                u = rng.random(2)
                y, pdf_a = scene.lights[k].sample_point(*u)
                vis = visibility(probe, y, scene.bvh)
                d = y - probe
                d2 = d @ d
                wd = d / np.sqrt(d2)
                g = max(0.0, wd @ sp.normal) * max(0.0, -wd @ scene.lights[k].normal) / d2
                total += sp.albedo / np.pi * scene.lights[k].radiance * g * vis / (pdf_a * 200)
        want = float(total @ np.array([0.2126, 0.7152, 0.0722]))
        se = lum_est.std() / np.sqrt(n)
        assert abs(lum_est.mean() - want) < 3 * se + 0.005 * want

    def test_cluster_weights_ignore_radiance(self, two_cluster_scene):
        # step-1 weights are clamped cluster visibility only; scaling one
        # cluster's radiance must not change cluster-selection frequencies
        scene = two_cluster_scene
        clusters, cache = two_cluster_setup(scene, preds=(0.5, 0.5))
        n = 50_000
        sp = sp_at(scene, (0.0, 0.0, 1.0))
        ctx = PixelCtx(scene, np.tile(sp.position, (n, 1)),
                       np.tile(sp.normal, (n, 1)), np.tile(sp.albedo, (n, 1)))
        ids, _, _ = clustered_sample_batch(ctx, cache, clusters, rngmod.stream(65))
        frac_c0 = np.isin(ids, clusters.members[0]).mean()
        assert frac_c0 == pytest.approx(0.5, abs=0.01)
