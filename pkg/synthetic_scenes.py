"""Seeded synthetic scenes with ground-truth corruption.

Each scene is a plain light background with N high-contrast glyph blocks at
non-overlapping random positions. Region ``r0`` is the edit target; the
"edited" image repaints it with the target text (unless the plan preserves it)
and applies a corruption plan to the other regions, so the expected
spillover of every method is known exactly.
"""

import string
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from debug_logging import get_logger
from scene_model import (
    PathLike,
    Quad,
    RasterImage,
    RegionRole,
    SceneSpec,
    TextRegion,
    save_manifest,
)

logger = get_logger(__name__)

CATEGORIES = ('real', 'app', 'normal', 'receipts')
TARGET_ID = 'r0'

BOX_COLOR = 255
INK_COLOR = 0
MARGIN = 2
GLYPH_ROWS = 5
GLYPH_COLS = 5
CELL_COLS = GLYPH_COLS + 1  # one blank column between characters

MAX_PLACEMENT_ATTEMPTS = 2000


class SyntheticSceneError(ValueError):
    """Synthetic scene spec is invalid or cannot be realized"""
    pass


class CorruptionKind(str, Enum):
    PRESERVE = "preserve"
    FILL_BLACK = "fill_black"
    SHIFT_PIXELS = "shift_pixels"
    REPAINT_TEXT = "repaint_text"


@dataclass(frozen=True)
class Corruption:
    """What the synthetic editor does to one non-target region."""
    kind: CorruptionKind = CorruptionKind.PRESERVE
    dx: int = 3
    dy: int = 0
    new_text: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', CorruptionKind(self.kind))
        if self.kind == CorruptionKind.SHIFT_PIXELS and self.dx == 0 and self.dy == 0:
            raise SyntheticSceneError("ShiftPixels needs a non-zero offset")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    width: int = 320
    height: int = 240
    region_count: int = 4
    plan: Dict[str, Corruption] = field(default_factory=dict)
    category: str = 'synthetic'
    min_gap: int = 40

    def __post_init__(self):
        if self.region_count < 2:
            raise SyntheticSceneError(f"region_count must be >= 2, got {self.region_count}")
        if self.width < 100 or self.height < 40:
            raise SyntheticSceneError(f"image {self.width}x{self.height} is too small for glyph blocks")
        if self.min_gap < 0:
            raise SyntheticSceneError("min_gap must be >= 0")
        valid = {region_id(k) for k in range(self.region_count)}
        unknown = sorted(set(self.plan) - valid)
        if unknown:
            raise SyntheticSceneError(f"corruption plan names unknown regions: {', '.join(unknown)}")

    def corruption(self, rid: str) -> Corruption:
        """Planned corruption; the target defaults to RepaintText, others to Preserve."""
        if rid in self.plan:
            return self.plan[rid]
        if rid == TARGET_ID:
            return Corruption(CorruptionKind.REPAINT_TEXT)
        return Corruption()


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    scene: SceneSpec
    source: RasterImage
    edited: RasterImage


def region_id(index: int) -> str:
    return f"r{index}"


# ---------------------------------------------------------------------------
# Glyph rendering
# ---------------------------------------------------------------------------

def glyph_rows(char: str) -> List[int]:
    """Five 5-bit rows for an uppercase letter; distinct letters differ."""
    k = ord(char) - ord('A')
    pattern = (k * 7 + 3) % 31 + 1
    return [((pattern << r) | (pattern >> (GLYPH_COLS - r))) & 0b11111 for r in range(GLYPH_ROWS)]


def _glyph_table(text: str) -> np.ndarray:
    table = np.zeros((GLYPH_ROWS, CELL_COLS * len(text)), dtype=bool)
    for i, char in enumerate(text):
        for r, bits in enumerate(glyph_rows(char)):
            for c in range(GLYPH_COLS):
                table[r, i * CELL_COLS + c] = bool(bits >> (GLYPH_COLS - 1 - c) & 1)
    return table


def render_text_block(pixels: np.ndarray, box: Tuple[int, int, int, int], text: str):
    """Paint ``text`` as black glyphs on a white box, in place."""
    x0, y0, x1, y1 = box
    pixels[y0:y1, x0:x1] = BOX_COLOR
    if not text:
        return
    inner_h = (y1 - y0) - 2 * MARGIN
    inner_w = (x1 - x0) - 2 * MARGIN
    table = _glyph_table(text)
    gy = np.arange(inner_h) * GLYPH_ROWS // inner_h
    gx = np.arange(inner_w) * table.shape[1] // inner_w
    ink = table[gy[:, None], gx[None, :]]
    block = pixels[y0 + MARGIN:y1 - MARGIN, x0 + MARGIN:x1 - MARGIN]
    block[ink] = INK_COLOR


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------

def random_text(rng: np.random.Generator, length: Optional[int] = None) -> str:
    if length is None:
        length = int(rng.integers(4, 7))
    return "".join(string.ascii_uppercase[i] for i in rng.integers(0, 26, size=length))


def differing_text(rng: np.random.Generator, text: str) -> str:
    """Same length as ``text``, different letter at every position."""
    out = []
    for char in text:
        offset = int(rng.integers(1, 26))
        out.append(string.ascii_uppercase[(ord(char) - ord('A') + offset) % 26])
    return "".join(out)


def _place_boxes(rng: np.random.Generator, spec: SyntheticSceneSpec) -> List[Tuple[int, int, int, int]]:
    boxes: List[Tuple[int, int, int, int]] = []
    attempts = 0
    while len(boxes) < spec.region_count:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise SyntheticSceneError(
                f"could not place {spec.region_count} non-overlapping regions "
                f"in {spec.width}x{spec.height} after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )
        w = int(rng.integers(40, 91))
        h = int(rng.integers(16, 29))
        if w + 2 > spec.width or h + 2 > spec.height:
            continue
        x0 = int(rng.integers(1, spec.width - w))
        y0 = int(rng.integers(1, spec.height - h))
        candidate = (x0, y0, x0 + w, y0 + h)
        gap = spec.min_gap
        if all(candidate[2] + gap <= b[0] or b[2] + gap <= candidate[0]
               or candidate[3] + gap <= b[1] or b[3] + gap <= candidate[1] for b in boxes):
            boxes.append(candidate)
    return boxes


def _corrupt(pixels: np.ndarray, box, corruption: Corruption, text: str,
             rng: np.random.Generator) -> str:
    """Apply one corruption in place; returns the text the region now shows."""
    x0, y0, x1, y1 = box
    kind = corruption.kind
    if kind == CorruptionKind.FILL_BLACK:
        pixels[y0:y1, x0:x1] = 0
        return ""
    if kind == CorruptionKind.SHIFT_PIXELS:
        block = pixels[y0:y1, x0:x1]
        pixels[y0:y1, x0:x1] = np.roll(block, (corruption.dy, corruption.dx), axis=(0, 1))
        return text
    if kind == CorruptionKind.REPAINT_TEXT:
        new_text = corruption.new_text if corruption.new_text is not None else differing_text(rng, text)
        render_text_block(pixels, box, new_text)
        return new_text
    return text


def generate_synthetic(spec: SyntheticSceneSpec, seed: int, scene_id: str = 'synth_0000',
                       image_dir: Optional[PathLike] = None) -> SyntheticScene:
    """Render one synthetic scene and its edited counterpart.

    Args:
        spec: image size, region count, corruption plan
        seed: RNG seed; equal seeds give bitwise-equal scenes
        scene_id: id of the generated scene
        image_dir: where the scene's image references point (files are not written)

    Raises:
        SyntheticSceneError: regions cannot be placed
    """
    rng = np.random.default_rng(seed)
    background = rng.integers(200, 241, size=3).astype(np.uint8)

    pixels = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    pixels[...] = background
    boxes = _place_boxes(rng, spec)
    texts = [random_text(rng) for _ in boxes]
    for box, text in zip(boxes, texts):
        render_text_block(pixels, box, text)

    edited = pixels.copy()
    target_text = differing_text(rng, texts[0])
    target_plan = spec.corruption(TARGET_ID)
    if target_plan.kind == CorruptionKind.REPAINT_TEXT:
        target_text = target_plan.new_text or target_text
        target_plan = replace(target_plan, new_text=target_text)

    edited_ocr = {}
    for k, (box, text) in enumerate(zip(boxes, texts)):
        rid = region_id(k)
        plan = target_plan if rid == TARGET_ID else spec.corruption(rid)
        edited_ocr[rid] = _corrupt(edited, box, plan, text, rng)

    regions = tuple(
        TextRegion(
            id=region_id(k),
            quad=Quad.from_box(*box),
            text=text,
            role=RegionRole.TARGET if k == 0 else RegionRole.NON_TARGET,
        )
        for k, (box, text) in enumerate(zip(boxes, texts))
    )
    base = Path(image_dir) if image_dir is not None else Path('.')
    scene = SceneSpec(
        scene_id=scene_id,
        category=spec.category,
        source_ref=base / f"{scene_id}_source.png",
        regions=regions,
        target_text=target_text,
        edited_ref=base / f"{scene_id}_edited.png",
        edited_ocr=edited_ocr,
    )
    return SyntheticScene(scene=scene, source=RasterImage(pixels), edited=RasterImage(edited))


PLAN_KINDS = ('identity', 'none', 'one', 'all')
_CYCLE = (CorruptionKind.FILL_BLACK, CorruptionKind.SHIFT_PIXELS, CorruptionKind.REPAINT_TEXT)


def corruption_plan(kind: str, region_count: int) -> Dict[str, Corruption]:
    """Named plans.

    identity: nothing changes, not even the target; none: only the target is
    repainted; one: r1 is also filled black; all: every non-target is corrupted,
    cycling FillBlack, ShiftPixels and RepaintText.
    """
    if kind == 'identity':
        return {region_id(k): Corruption() for k in range(region_count)}
    if kind == 'none':
        return {}
    if kind == 'one':
        return {region_id(1): Corruption(CorruptionKind.FILL_BLACK)}
    if kind == 'all':
        return {region_id(k): Corruption(_CYCLE[(k - 1) % len(_CYCLE)]) for k in range(1, region_count)}
    raise SyntheticSceneError(f"unknown corruption plan {kind!r}; expected one of {', '.join(PLAN_KINDS)}")


def generate_corpus(count: int, seed: int, out_dir: PathLike, region_count: int = 4,
                    plan: str = 'all', width: int = 320, height: int = 240) -> Path:
    """Write ``count`` synthetic scenes and a manifest; returns the manifest path.

    Scenes get independent child seeds of ``seed``; categories cycle through
    real, app, normal, receipts.
    """
    if count < 1:
        raise SyntheticSceneError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    image_dir = out_dir / 'images'
    image_dir.mkdir(parents=True, exist_ok=True)

    children = np.random.SeedSequence(seed).spawn(count)
    scenes = []
    for i, child in enumerate(children):
        spec = SyntheticSceneSpec(
            width=width,
            height=height,
            region_count=region_count,
            plan=corruption_plan(plan, region_count),
            category=CATEGORIES[i % len(CATEGORIES)],
        )
        scene_id = f"synth_{i:04d}"
        synthetic = generate_synthetic(spec, int(child.generate_state(1)[0]), scene_id, image_dir)
        synthetic.source.save(synthetic.scene.source_ref)
        synthetic.edited.save(synthetic.scene.edited_ref)
        scenes.append(synthetic.scene)

    manifest = save_manifest(scenes, out_dir / 'manifest.json')
    logger.info(f"Wrote {count} synthetic scenes to {out_dir}")
    return manifest
