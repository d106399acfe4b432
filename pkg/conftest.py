"""Shared pytest fixtures for the EFF test suite."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from scene_model import FieldConfig, Quad, RasterImage, RegionRole, SceneSpec, TextRegion
from synthetic_scenes import generate_corpus


def make_scene(boxes, target=0, texts=None, scene_id='s0', category='test',
               source_ref='source.png', edited_ref=None, edited_ocr=None, target_text='NEW'):
    """Scene with axis-aligned regions r0..rN; ``target`` indexes the target box."""
    texts = texts or [f"TEXT{k}" for k in range(len(boxes))]
    regions = tuple(
        TextRegion(
            id=f"r{k}",
            quad=Quad.from_box(*box),
            text=texts[k],
            role=RegionRole.TARGET if k == target else RegionRole.NON_TARGET,
        )
        for k, box in enumerate(boxes)
    )
    return SceneSpec(scene_id=scene_id, category=category, source_ref=Path(source_ref),
                     regions=regions, target_text=target_text,
                     edited_ref=Path(edited_ref) if edited_ref else None, edited_ocr=edited_ocr)


def random_image(rng, width, height):
    return RasterImage(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


@pytest.fixture
def scene_factory():
    return make_scene


@pytest.fixture
def default_config():
    return FieldConfig()


@pytest.fixture
def fixture_scene():
    """120x80 scene: target r0 on the left, r1 to its right, r2 below it."""
    return make_scene([(10, 10, 50, 30), (70, 10, 110, 30), (10, 50, 50, 70)])


@pytest.fixture
def synthetic_corpus(tmp_path):
    """Factory: seeded synthetic corpus on disk, returns the manifest path."""
    def build(count=8, seed=7, plan='all', region_count=4, name='corpus'):
        return generate_corpus(count, seed, tmp_path / name, region_count=region_count, plan=plan)
    return build


@pytest.fixture
def stub_command(tmp_path):
    """Factory: write a Python stub script and return a shell command running it."""
    def build(body: str, name='stub.py') -> str:
        script = tmp_path / name
        script.write_text(body, encoding='utf-8')
        return f'"{sys.executable}" "{script}"'
    return build


@pytest.fixture
def write_manifest(tmp_path):
    """Factory: dump a manifest document to tmp_path and return its path."""
    def build(document, name='manifest.json') -> Path:
        path = tmp_path / name
        if isinstance(document, str):
            path.write_text(document, encoding='utf-8')
        else:
            path.write_text(json.dumps(document, indent=2), encoding='utf-8')
        return path
    return build
