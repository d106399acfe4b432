"""Tests for synthetic_scenes.py: seeded generator and corpus writer."""

import numpy as np
import pytest

from scene_model import load_manifest, rasterize_quad
from synthetic_scenes import (
    CATEGORIES,
    Corruption,
    CorruptionKind,
    SyntheticSceneError,
    SyntheticSceneSpec,
    corruption_plan,
    generate_corpus,
    generate_synthetic,
    glyph_rows,
)


def changed_pixels(a, b):
    return np.any(a.pixels != b.pixels, axis=2)


class TestGenerateSynthetic:
    """Test suite for single-scene generation."""

    def test_all_preserve_is_identity(self):
        """Test that preserving every region (target included) leaves edited == source."""
        spec = SyntheticSceneSpec(plan=corruption_plan('identity', 4))
        synthetic = generate_synthetic(spec, seed=1)
        assert synthetic.edited.same_pixels(synthetic.source)
        assert synthetic.scene.edited_ocr == {r.id: r.text for r in synthetic.scene.regions}

    def test_fill_black_touches_only_its_region(self):
        """Test that FillBlack on r1 changes pixels inside r1 only."""
        plan = {'r0': Corruption(), 'r1': Corruption(CorruptionKind.FILL_BLACK)}
        synthetic = generate_synthetic(SyntheticSceneSpec(plan=plan), seed=2)
        diff = changed_pixels(synthetic.source, synthetic.edited)
        r1 = rasterize_quad(synthetic.scene.region('r1').quad, 320, 240)
        assert diff.any()
        assert not np.any(diff & ~r1.bits)
        assert synthetic.scene.edited_ocr['r1'] == ""

    def test_target_repainted_by_default(self):
        """Test that the target shows the target text in the edited image."""
        synthetic = generate_synthetic(SyntheticSceneSpec(), seed=3)
        scene = synthetic.scene
        target = rasterize_quad(scene.target.quad, 320, 240)
        diff = changed_pixels(synthetic.source, synthetic.edited)
        assert diff.any()
        assert not np.any(diff & ~target.bits)
        assert scene.edited_ocr['r0'] == scene.target_text
        assert all(a != b for a, b in zip(scene.target.text, scene.target_text))

    def test_repaint_text_differs_everywhere(self):
        """Test that RepaintText records a text differing at every position."""
        plan = {'r2': Corruption(CorruptionKind.REPAINT_TEXT)}
        scene = generate_synthetic(SyntheticSceneSpec(plan=plan), seed=4).scene
        old, new = scene.region('r2').text, scene.edited_ocr['r2']
        assert len(old) == len(new)
        assert all(a != b for a, b in zip(old, new))

    def test_shift_keeps_text(self):
        """Test that ShiftPixels changes pixels but not the ground-truth text."""
        plan = {'r1': Corruption(CorruptionKind.SHIFT_PIXELS, dx=3)}
        synthetic = generate_synthetic(SyntheticSceneSpec(plan=plan), seed=5)
        r1 = rasterize_quad(synthetic.scene.region('r1').quad, 320, 240)
        assert changed_pixels(synthetic.source, synthetic.edited)[r1.bits].any()
        assert synthetic.scene.edited_ocr['r1'] == synthetic.scene.region('r1').text

    def test_same_seed_is_bitwise_identical(self):
        """Test determinism of the generator."""
        spec = SyntheticSceneSpec(plan=corruption_plan('all', 4))
        a, b = generate_synthetic(spec, seed=9), generate_synthetic(spec, seed=9)
        assert a.source.same_pixels(b.source)
        assert a.edited.same_pixels(b.edited)
        assert a.scene.to_dict() == b.scene.to_dict()

    def test_regions_separated(self):
        """Test that padded region boxes never overlap."""
        scene = generate_synthetic(SyntheticSceneSpec(region_count=5), seed=6).scene
        masks = [rasterize_quad(r.quad, 320, 240).bits for r in scene.regions]
        total = sum(m.astype(int) for m in masks)
        assert total.max() == 1

    def test_placement_failure(self):
        """Test that an impossible layout raises after bounded retries."""
        with pytest.raises(SyntheticSceneError):
            generate_synthetic(SyntheticSceneSpec(width=120, height=60, region_count=6), seed=0)

    def test_invalid_specs(self):
        """Test spec validation."""
        with pytest.raises(SyntheticSceneError):
            SyntheticSceneSpec(region_count=1)
        with pytest.raises(SyntheticSceneError):
            SyntheticSceneSpec(region_count=3, plan={'r7': Corruption()})
        with pytest.raises(SyntheticSceneError):
            Corruption(CorruptionKind.SHIFT_PIXELS, dx=0, dy=0)

    def test_glyphs_distinct(self):
        """Test that every letter has its own glyph."""
        glyphs = {tuple(glyph_rows(chr(ord('A') + k))) for k in range(26)}
        assert len(glyphs) == 26


class TestGenerateCorpus:
    """Test suite for the corpus writer."""

    def test_writes_loadable_manifest(self, tmp_path):
        """Test that the written manifest loads with images on disk."""
        manifest = generate_corpus(6, 11, tmp_path / 'c', region_count=3, plan='one')
        scenes = load_manifest(manifest)
        assert [s.scene_id for s in scenes] == [f"synth_{i:04d}" for i in range(6)]
        assert [s.category for s in scenes] == [CATEGORIES[i % 4] for i in range(6)]
        for scene in scenes:
            assert scene.source_ref.is_file()
            assert scene.edited_ref.is_file()
            assert scene.load_source().size == (320, 240)

    def test_corpus_deterministic(self, tmp_path):
        """Test that the same seed writes identical files."""
        a = generate_corpus(3, 5, tmp_path / 'a')
        b = generate_corpus(3, 5, tmp_path / 'b')
        assert a.read_bytes() == b.read_bytes()
        for name in ('synth_0002_source.png', 'synth_0002_edited.png'):
            assert (a.parent / 'images' / name).read_bytes() == (b.parent / 'images' / name).read_bytes()

    def test_unknown_plan(self, tmp_path):
        """Test that an unknown plan name raises."""
        with pytest.raises(SyntheticSceneError):
            generate_corpus(1, 0, tmp_path, plan='most')
