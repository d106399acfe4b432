#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests for field_builder.py

Field components are checked against brute-force per-pixel oracles.
"""

import math

import numpy as np
import pytest

from field_builder import (
    DistanceGrid,
    FidelityField,
    FieldError,
    build_core,
    build_decay,
    build_field,
    build_protect,
    build_simple_field,
    distance_transform,
    gaussian_kernel,
    gaussian_smooth,
    image_diagonal,
    plan_field,
)
from scene_model import BinaryMask, FieldConfig, Quad, RegionRole, SceneSpec, TextRegion, pad_mask, rasterize_quad


def brute_distance(bits):
    ys, xs = np.nonzero(bits)
    height, width = bits.shape
    ii = np.arange(width)
    out = np.empty((height, width))
    for j in range(height):
        d2 = (j - ys)[None, :] ** 2 + (ii[:, None] - xs[None, :]) ** 2
        out[j] = np.sqrt(d2.min(axis=1))
    return out


def dense_smooth(values, sigma):
    """Direct 2-D correlation with the outer-product kernel and replicated borders."""
    radius = int(math.ceil(3 * sigma))
    offsets = np.arange(-radius, radius + 1)
    k1 = np.exp(-offsets ** 2 / (2 * sigma ** 2))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    padded = np.pad(values, radius, mode='edge')
    h, w = values.shape
    out = np.zeros_like(values, dtype=np.float64)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            out += k2[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out


def brute_pad(quad, pad, width, height):
    """Pixel-centre rasterization plus brute-force dilation; empty when degenerate."""
    try:
        raw = rasterize_quad(quad, width, height).bits
    except ValueError:
        return np.zeros((height, width), dtype=bool)
    if pad == 0:
        return raw
    return brute_distance(raw) <= pad + 1e-9


def naive_field(scene, cfg, width, height):
    core = brute_pad(scene.target.quad, cfg.pad_core, width, height)
    decay = np.exp(-brute_distance(core) / (cfg.sigma * math.hypot(width, height)))
    protect = np.zeros((height, width), dtype=bool)
    for region in scene.non_targets:
        protect |= brute_pad(region.quad, cfg.pad_protect, width, height)
    combined = np.maximum(core.astype(float), decay) * (1.0 - protect)
    if cfg.smooth_sigma > 0:
        combined = dense_smooth(combined, cfg.smooth_sigma)
    weights = combined.astype(np.float32)
    weights[protect] = 0.0
    return np.clip(weights, 0.0, 1.0)


def random_scene(rng, width, height, n_regions):
    regions = []
    for k in range(n_regions):
        w = rng.uniform(4, width / 2)
        h = rng.uniform(4, height / 2)
        cx = rng.uniform(w / 2, width - w / 2)
        cy = rng.uniform(h / 2, height - h / 2)
        angle = rng.uniform(-0.4, 0.4)
        c, s = math.cos(angle), math.sin(angle)
        pts = tuple((cx + c * x - s * y, cy + s * x + c * y)
                    for x, y in [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)])
        regions.append(TextRegion(f"r{k}", Quad(pts), f"T{k}",
                                  RegionRole.TARGET if k == 0 else RegionRole.NON_TARGET))
    return SceneSpec("rand", "test", "source.png", tuple(regions), "X")


class TestDistanceTransform:
    """Test suite for the exact Euclidean distance transform."""

    def test_matches_brute_force_on_random_masks(self):
        """Test 100 random masks up to 64x64 against brute force."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            h, w = int(rng.integers(1, 65)), int(rng.integers(1, 65))
            bits = rng.random((h, w)) < rng.uniform(0.005, 0.2)
            bits[int(rng.integers(h)), int(rng.integers(w))] = True
            grid = distance_transform(BinaryMask(bits))
            assert np.allclose(grid.distances, brute_distance(bits), atol=1e-6)

    def test_single_seed_diagonal(self):
        """Test distance 2*sqrt(2) two pixels diagonally from a single seed."""
        bits = np.zeros((5, 5), dtype=bool)
        bits[0, 0] = True
        grid = distance_transform(BinaryMask(bits))
        assert grid.distances[2, 2] == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        assert grid.distances[0, 0] == 0.0

    def test_empty_mask_rejected(self):
        """Test that a mask with no set pixel raises FieldError."""
        with pytest.raises(FieldError):
            distance_transform(BinaryMask.empty(4, 4))


class TestDecay:
    """Test suite for build_decay."""

    def test_image_diagonal(self):
        """Test D = 1000 for 800x600."""
        assert image_diagonal(800, 600) == 1000.0

    def test_closed_form_values(self):
        """Test weight(d=120) = e^-1 and weight(d=0) = 1 at sigma 0.12 on 800x600."""
        distances = np.zeros((600, 800))
        distances[10, 10] = 120.0
        decay = build_decay(DistanceGrid(distances), 0.12, 800, 600)
        assert decay.weights[10, 10] == pytest.approx(math.exp(-1), abs=1e-6)
        assert decay.weights[0, 0] == 1.0

    def test_size_mismatch_rejected(self):
        """Test that the grid must match the image size."""
        with pytest.raises(FieldError):
            build_decay(DistanceGrid(np.zeros((3, 3))), 0.12, 4, 3)


class TestProtect:
    """Test suite for build_protect."""

    def test_union_of_disjoint_regions(self, scene_factory):
        """Test that the mask is the union of padded non-target rasterizations."""
        scene = scene_factory([(5, 5, 15, 15), (30, 5, 40, 15), (5, 30, 15, 40)])
        zones = build_protect(scene, 3, 50, 50)
        expected = np.zeros((50, 50), dtype=bool)
        for region in scene.non_targets:
            expected |= brute_pad(region.quad, 3, 50, 50)
        assert np.array_equal(zones.mask.bits, expected)
        assert zones.skipped == []

    def test_degenerate_region_skipped(self, scene_factory):
        """Test that a non-target outside the image is skipped, not fatal."""
        scene = scene_factory([(5, 5, 15, 15), (100, 100, 110, 110)])
        zones = build_protect(scene, 3, 50, 50)
        assert not zones.mask.any()
        assert zones.skipped == ['r1']

    def test_degenerate_target_is_fatal(self, scene_factory):
        """Test that a target outside the image raises."""
        scene = scene_factory([(100, 100, 110, 110), (5, 5, 15, 15)])
        with pytest.raises(ValueError):
            build_field(scene, FieldConfig(), 50, 50)


class TestSmoothing:
    """Test suite for separable Gaussian smoothing."""

    def test_kernel_normalized(self):
        """Test kernel radius ceil(3 sigma) and unit sum."""
        kernel = gaussian_kernel(2.5)
        assert kernel.size == 2 * 8 + 1
        assert kernel.sum() == pytest.approx(1.0, abs=1e-12)

    def test_impulse_matches_dense_convolution(self):
        """Test an impulse on 21x21 against direct 2-D convolution."""
        values = np.zeros((21, 21), dtype=np.float32)
        values[10, 10] = 1.0
        smoothed = gaussian_smooth(FidelityField(values), 2.0)
        expected = dense_smooth(values.astype(np.float64), 2.0)
        assert np.allclose(smoothed.weights, expected, atol=1e-6)
        kernel = gaussian_kernel(2.0)
        assert smoothed.weights[10, 10] == pytest.approx(kernel[6] * kernel[6], abs=1e-6)

    def test_constant_field_unchanged(self):
        """Test replicate-edge borders keep a constant field constant."""
        smoothed = gaussian_smooth(FidelityField.constant(0.7, 12, 9), 3.0)
        assert np.allclose(smoothed.weights, 0.7, atol=1e-6)

    def test_sigma_zero_is_identity(self):
        """Test that smooth_sigma 0 returns the field unchanged."""
        field = FidelityField.constant(0.3, 4, 4)
        assert gaussian_smooth(field, 0) is field

    def test_tiny_sigma_is_identity(self):
        """Test that a sigma whose square underflows behaves like sigma 0."""
        assert gaussian_kernel(1e-200).tolist() == [1.0]
        field = FidelityField.constant(0.3, 4, 4)
        assert gaussian_smooth(field, 1e-200) is field

    def test_tiny_sigma_field_matches_unsmoothed(self, fixture_scene):
        """Test build_field with a vanishing smoothing sigma equals no smoothing."""
        tiny = build_field(fixture_scene, FieldConfig(smooth_sigma=1e-200), 120, 80)
        none = build_field(fixture_scene, FieldConfig(smooth_sigma=0), 120, 80)
        assert not np.isnan(tiny.weights).any()
        assert np.array_equal(tiny.weights, none.weights)

    def test_negative_sigma_rejected(self):
        """Test that a negative smoothing sigma raises."""
        with pytest.raises(FieldError):
            gaussian_smooth(FidelityField.constant(0.3, 4, 4), -1)


class TestBuildField:
    """Test suite for the composed field."""

    def test_matches_naive_oracle(self):
        """Test 20 random scenes at up to 64x64 against per-pixel evaluation."""
        rng = np.random.default_rng(2024)
        for _ in range(20):
            w, h = int(rng.integers(16, 65)), int(rng.integers(16, 65))
            scene = random_scene(rng, w, h, int(rng.integers(2, 6)))
            cfg = FieldConfig(sigma=float(rng.uniform(0.05, 0.3)), pad_core=float(rng.integers(0, 8)),
                              pad_protect=float(rng.integers(0, 5)), smooth_sigma=float(rng.uniform(0, 3)))
            field = build_field(scene, cfg, w, h)
            assert field.weights.dtype == np.float32
            assert np.allclose(field.weights, naive_field(scene, cfg, w, h), atol=1e-5)

    def test_protected_pixels_are_zero(self, fixture_scene, default_config):
        """Test that every padded non-target pixel has weight exactly 0."""
        plan = plan_field(fixture_scene, default_config, 120, 80)
        assert plan.protect.any()
        assert np.all(plan.field.weights[plan.protect.bits] == 0.0)

    def test_core_interior_is_one(self, fixture_scene, default_config):
        """Test weight 1 deep inside the core, away from protected zones."""
        field = build_field(fixture_scene, default_config, 120, 80)
        assert field.weights[20, 30] == pytest.approx(1.0, abs=1e-6)

    def test_range_and_shape(self, fixture_scene, default_config):
        """Test that weights lie in [0, 1] with the image shape."""
        field = build_field(fixture_scene, default_config, 120, 80)
        assert field.weights.shape == (80, 120)
        assert field.weights.min() == 0.0
        assert field.weights.max() <= 1.0

    def test_target_only_exponential_falloff(self, scene_factory):
        """Test pad 0, smooth 0: weight along a row follows exp(-d / (sigma D))."""
        scene = scene_factory([(10, 10, 20, 20)])
        cfg = FieldConfig(pad_core=0, smooth_sigma=0)
        field = build_field(scene, cfg, 100, 50)
        scale = 0.12 * math.hypot(100, 50)
        assert field.weights[15, 15] == 1.0
        for x in (25, 40, 80):
            assert field.weights[15, x] == pytest.approx(math.exp(-(x - 19) / scale), abs=1e-6)
        assert np.all(np.diff(field.weights[15, 19:]) < 0)

    def test_overlap_resolves_to_protection(self, scene_factory, default_config):
        """Test that a non-target inside the padded core still gets weight 0."""
        scene = scene_factory([(10, 10, 50, 30), (55, 10, 70, 30)])
        plan = plan_field(scene, default_config, 100, 60)
        overlap = plan.core.bits & plan.protect.bits
        assert overlap.any()
        assert np.all(plan.field.weights[overlap] == 0.0)

    def test_simple_field_has_no_protection(self, fixture_scene, default_config):
        """Test that the ablation field keeps weight over non-target regions."""
        simple = build_simple_field(fixture_scene, default_config, 120, 80)
        eff = build_field(fixture_scene, default_config, 120, 80)
        r1 = rasterize_quad(fixture_scene.region('r1').quad, 120, 80)
        assert np.all(simple.weights[r1.bits] > 0.0)
        assert np.all(eff.weights[r1.bits] == 0.0)

    def test_mass_grows_with_pad_core_and_sigma(self, fixture_scene):
        """Test field mass strictly increasing in pad_core and sigma."""
        masses = [build_field(fixture_scene, FieldConfig(pad_core=p), 120, 80).mass for p in (5, 15, 30)]
        assert masses[0] < masses[1] < masses[2]
        masses = [build_field(fixture_scene, FieldConfig(sigma=s), 120, 80).mass for s in (0.06, 0.12, 0.24)]
        assert masses[0] < masses[1] < masses[2]

    def test_core_is_padded_target(self, fixture_scene):
        """Test build_core equals pad_mask of the rasterized target."""
        core = build_core(fixture_scene, 15, 120, 80)
        assert core == pad_mask(rasterize_quad(fixture_scene.target.quad, 120, 80), 15)

    def test_out_of_range_field_rejected(self):
        """Test that FidelityField refuses weights above 1."""
        with pytest.raises(FieldError):
            FidelityField(np.full((2, 2), 1.5))
