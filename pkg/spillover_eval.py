"""Per-region spillover quantification.

For each non-target region:
  1. OCR text change: flagged if similarity to the source text < sim_threshold
  2. Region PSNR between source and output
  3. Spillover: text changed OR PSNR < psnr_threshold

Scene reports aggregate these into the spill rate (flagged / non-target count),
average and minimum region PSNR, background PSNR and target-found; corpus
reports aggregate scenes overall and per category.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import Levenshtein
import numpy as np

import config
from debug_logging import get_logger
from scene_model import (
    BinaryMask,
    DegenerateRegionError,
    FieldConfig,
    OcrMode,
    PathLike,
    RasterImage,
    SceneSpec,
    TextRegion,
    pad_mask,
    rasterize_quad,
)

logger = get_logger(__name__)

PEAK = 255.0

FOUND_RATE_NOTE = (
    "Target found rate is OCR-measured; OCR can fail on visually correct text "
    "after blending, so it may understate edit quality."
)


class EvaluationError(ValueError):
    """Evaluation inputs are missing or inconsistent"""
    pass


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def region_psnr(src: RasterImage, out: RasterImage, mask: BinaryMask,
                psnr_cap: float = 150.0) -> float:
    """PSNR over the mask's pixels and all three channels, capped at ``psnr_cap``."""
    if src.pixels.shape != out.pixels.shape:
        raise EvaluationError(
            f"image sizes differ: {src.width}x{src.height} vs {out.width}x{out.height}"
        )
    if mask.bits.shape != src.pixels.shape[:2]:
        raise EvaluationError("mask size differs from image size")
    if not mask.any():
        raise EvaluationError("region mask is empty")

    diff = src.pixels[mask.bits].astype(np.int64) - out.pixels[mask.bits].astype(np.int64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float(psnr_cap)
    return min(float(psnr_cap), 10.0 * math.log10(PEAK * PEAK / mse))


def normalize_text(text: str) -> str:
    """Casefold, trim, and collapse whitespace runs to single spaces."""
    return " ".join(text.casefold().split())


def text_similarity(a: str, b: str) -> float:
    """1 - Levenshtein(a, b) / max(|a|, |b|) on normalized strings."""
    a, b = normalize_text(a), normalize_text(b)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1.0 - Levenshtein.distance(a, b) / max(len(a), len(b))


def flag_spillover(similarity: Optional[float], psnr: float, config: FieldConfig) -> bool:
    """Binary spillover rule; both comparisons are strict."""
    text_changed = similarity is not None and similarity < config.sim_threshold
    return text_changed or psnr < config.psnr_threshold


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _opt_float(value: Optional[float]) -> Optional[float]:
    return None if value is None else float(value)


@dataclass(frozen=True)
class RegionReport:
    region_id: str
    text_src: str
    text_out: Optional[str]
    text_similarity: Optional[float]
    region_psnr: float
    text_changed: Optional[bool]
    spillover: bool
    ocr_mode: OcrMode

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region_id": self.region_id,
            "text_src": self.text_src,
            "text_out": self.text_out,
            "text_similarity": self.text_similarity,
            "region_psnr": self.region_psnr,
            "text_changed": self.text_changed,
            "spillover": self.spillover,
            "ocr_mode": self.ocr_mode.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RegionReport':
        return cls(
            region_id=data["region_id"],
            text_src=data["text_src"],
            text_out=data.get("text_out"),
            text_similarity=_opt_float(data.get("text_similarity")),
            region_psnr=float(data["region_psnr"]),
            text_changed=data.get("text_changed"),
            spillover=bool(data["spillover"]),
            ocr_mode=OcrMode(data.get("ocr_mode", OcrMode.DISABLED.value)),
        )


@dataclass(frozen=True)
class SceneReport:
    """Metrics for one scene; ``error`` is set (and metrics empty) when it failed."""

    scene_id: str
    category: str
    target_found: Optional[bool] = None
    spill_rate: Optional[float] = None
    avg_region_psnr: Optional[float] = None
    min_region_psnr: Optional[float] = None
    bg_psnr: Optional[float] = None
    region_reports: List[RegionReport] = field(default_factory=list)
    skipped_regions: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def errored(self) -> bool:
        return self.error is not None

    @property
    def flagged_count(self) -> int:
        return sum(1 for r in self.region_reports if r.spillover)

    @property
    def region_count(self) -> int:
        return len(self.region_reports)

    @classmethod
    def failed(cls, scene_id: str, category: str, error: str) -> 'SceneReport':
        return cls(scene_id=scene_id, category=category, error=error)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "category": self.category,
            "target_found": self.target_found,
            "spill_rate": self.spill_rate,
            "avg_region_psnr": self.avg_region_psnr,
            "min_region_psnr": self.min_region_psnr,
            "bg_psnr": self.bg_psnr,
            "region_reports": [r.to_dict() for r in self.region_reports],
            "skipped_regions": list(self.skipped_regions),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SceneReport':
        return cls(
            scene_id=data["scene_id"],
            category=data.get("category", "uncategorized"),
            target_found=data.get("target_found"),
            spill_rate=_opt_float(data.get("spill_rate")),
            avg_region_psnr=_opt_float(data.get("avg_region_psnr")),
            min_region_psnr=_opt_float(data.get("min_region_psnr")),
            bg_psnr=_opt_float(data.get("bg_psnr")),
            region_reports=[RegionReport.from_dict(r) for r in data.get("region_reports", [])],
            skipped_regions=list(data.get("skipped_regions", [])),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class CorpusRow:
    """Aggregated metrics over a set of scenes (one category or overall)."""

    scene_count: int
    errored_count: int
    region_count: int
    flagged_count: int
    found_rate: Optional[float]
    spill_rate: Optional[float]
    avg_region_psnr: Optional[float]
    min_region_psnr: Optional[float]
    bg_psnr: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene_count": self.scene_count,
            "errored_count": self.errored_count,
            "region_count": self.region_count,
            "flagged_count": self.flagged_count,
            "found_rate": self.found_rate,
            "spill_rate": self.spill_rate,
            "avg_region_psnr": self.avg_region_psnr,
            "min_region_psnr": self.min_region_psnr,
            "bg_psnr": self.bg_psnr,
        }


@dataclass(frozen=True)
class CorpusReport:
    overall: CorpusRow
    categories: Dict[str, CorpusRow]
    weighting: str = "region"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weighting": self.weighting,
            "overall": self.overall.to_dict(),
            "categories": {name: row.to_dict() for name, row in sorted(self.categories.items())},
        }


# ---------------------------------------------------------------------------
# Region and scene evaluation
# ---------------------------------------------------------------------------

def classify_region(src: RasterImage, out: RasterImage, region: TextRegion,
                    out_text: Optional[str], config: FieldConfig,
                    ocr_mode: OcrMode = OcrMode.GROUND_TRUTH) -> RegionReport:
    """Apply the three-step protocol to one non-target region.

    Without ``out_text`` the text branch is skipped and the report is marked
    OCR-disabled.

    Raises:
        EvaluationError: region is the target
        DegenerateRegionError: region covers no pixel of the image
    """
    if region.is_target:
        raise EvaluationError(f"region {region.id} is the edit target; only non-targets are classified")

    mask = rasterize_quad(region.quad, src.width, src.height)
    psnr = region_psnr(src, out, mask, config.psnr_cap)

    if out_text is None:
        similarity = None
        text_changed = None
        mode = OcrMode.DISABLED
    else:
        similarity = text_similarity(region.text, out_text)
        text_changed = similarity < config.sim_threshold
        mode = OcrMode(ocr_mode)

    return RegionReport(
        region_id=region.id,
        text_src=region.text,
        text_out=out_text,
        text_similarity=similarity,
        region_psnr=psnr,
        text_changed=text_changed,
        spillover=flag_spillover(similarity, psnr, config),
        ocr_mode=mode,
    )


def text_neighbourhoods(scene: SceneSpec, config: FieldConfig, width: int, height: int) -> BinaryMask:
    """Padded target (pad_core) plus padded non-targets (pad_protect)."""
    bits = np.zeros((height, width), dtype=bool)
    for region in scene.regions:
        pad = config.pad_core if region.is_target else config.pad_protect
        try:
            bits |= pad_mask(rasterize_quad(region.quad, width, height), pad).bits
        except DegenerateRegionError:
            continue
    return BinaryMask(bits)


def evaluate_scene(scene: SceneSpec, output: Optional[RasterImage], config: FieldConfig,
                   ocr_results: Optional[Mapping[str, str]] = None,
                   source: Optional[RasterImage] = None,
                   ocr_mode: OcrMode = OcrMode.GROUND_TRUTH) -> SceneReport:
    """Evaluate one output image against its scene's source.

    Args:
        scene: the scene being evaluated
        output: image produced by the method under test
        config: thresholds and padding
        ocr_results: region id -> text recognized on ``output``; None disables
            the text branch and target-found
        source: source image; loaded from ``scene.source_ref`` when omitted
        ocr_mode: provenance recorded in region reports

    Raises:
        EvaluationError: output missing or of a different size
    """
    if output is None:
        raise EvaluationError(f"scene {scene.scene_id}: missing output image")
    if source is None:
        source = scene.load_source()
    if output.pixels.shape != source.pixels.shape:
        raise EvaluationError(
            f"scene {scene.scene_id}: output is {output.width}x{output.height}, "
            f"source is {source.width}x{source.height}"
        )

    reports = []
    skipped = []
    for region in scene.non_targets:
        out_text = ocr_results.get(region.id) if ocr_results is not None else None
        try:
            reports.append(classify_region(source, output, region, out_text, config, ocr_mode))
        except DegenerateRegionError as e:
            logger.warning(f"[{scene.scene_id}] skipping region {region.id}: {e}")
            skipped.append(region.id)

    spill_rate = avg_psnr = min_psnr = None
    if reports:
        spill_rate = sum(1 for r in reports if r.spillover) / len(reports)
        psnrs = [r.region_psnr for r in reports]
        avg_psnr = math.fsum(psnrs) / len(psnrs)
        min_psnr = min(psnrs)

    background = text_neighbourhoods(scene, config, source.width, source.height).invert()
    bg_psnr = region_psnr(source, output, background, config.psnr_cap) if background.any() else None

    target_found = None
    if ocr_results is not None and scene.target.id in ocr_results:
        similarity = text_similarity(ocr_results[scene.target.id], scene.target_text)
        target_found = similarity >= config.sim_threshold

    return SceneReport(
        scene_id=scene.scene_id,
        category=scene.category,
        target_found=target_found,
        spill_rate=spill_rate,
        avg_region_psnr=avg_psnr,
        min_region_psnr=min_psnr,
        bg_psnr=bg_psnr,
        region_reports=reports,
        skipped_regions=skipped,
    )


# ---------------------------------------------------------------------------
# Corpus aggregation
# ---------------------------------------------------------------------------

def _mean(values: Sequence[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def _aggregate(reports: Sequence[SceneReport], weighting: str) -> CorpusRow:
    ok = [r for r in reports if not r.errored]
    region_count = sum(r.region_count for r in ok)
    flagged_count = sum(r.flagged_count for r in ok)

    if weighting == "scene":
        spill_rate = _mean([r.spill_rate for r in ok if r.spill_rate is not None])
    else:
        spill_rate = flagged_count / region_count if region_count else None

    found = [r.target_found for r in ok if r.target_found is not None]
    found_rate = sum(1 for f in found if f) / len(found) if found else None

    return CorpusRow(
        scene_count=len(ok),
        errored_count=len(reports) - len(ok),
        region_count=region_count,
        flagged_count=flagged_count,
        found_rate=found_rate,
        spill_rate=spill_rate,
        avg_region_psnr=_mean([r.avg_region_psnr for r in ok if r.avg_region_psnr is not None]),
        min_region_psnr=_mean([r.min_region_psnr for r in ok if r.min_region_psnr is not None]),
        bg_psnr=_mean([r.bg_psnr for r in ok if r.bg_psnr is not None]),
    )


def aggregate_corpus(reports: Sequence[SceneReport],
                     categories: Optional[Mapping[str, str]] = None,
                     weighting: Optional[str] = None) -> CorpusReport:
    """Aggregate scene reports overall and per category.

    Args:
        reports: scene reports (errored ones are counted, not averaged)
        categories: scene id -> category; defaults to each report's category
        weighting: "region" (each non-target region counts once) or "scene"

    Raises:
        EvaluationError: no reports, or unknown weighting
    """
    if not reports:
        raise EvaluationError("cannot aggregate an empty set of scene reports")
    weighting = weighting or config.SPILL_WEIGHTING
    if weighting not in ("region", "scene"):
        raise EvaluationError(f"unknown spill weighting {weighting!r}")

    categories = categories or {}
    groups: Dict[str, List[SceneReport]] = {}
    for report in reports:
        name = categories.get(report.scene_id, report.category)
        groups.setdefault(name, []).append(report)

    return CorpusReport(
        overall=_aggregate(reports, weighting),
        categories={name: _aggregate(group, weighting) for name, group in groups.items()},
        weighting=weighting,
    )


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_json_report(document: Dict[str, Any], path: PathLike) -> Path:
    """Write a report document with its schema version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": config.REPORT_SCHEMA_VERSION, **document}
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding='utf-8')
    return path


SCENE_COLUMNS = ["schema_version", "method", "scene_id", "category", "target_found", "spill_rate",
                 "avg_region_psnr", "min_region_psnr", "bg_psnr", "error"]
REGION_COLUMNS = ["schema_version", "method", "scene_id", "region_id", "text_src", "text_out",
                  "text_similarity", "region_psnr", "text_changed", "spillover", "ocr_mode"]
CORPUS_COLUMNS = ["schema_version", "method", "category", "scene_count", "errored_count",
                  "region_count", "flagged_count", "found_rate", "spill_rate",
                  "avg_region_psnr", "min_region_psnr", "bg_psnr"]


def write_scene_csv(reports_by_method: Mapping[str, Sequence[SceneReport]], path: PathLike,
                    per_region: bool = False) -> Path:
    """One row per scene (or per region with ``per_region``) and method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    version = config.REPORT_SCHEMA_VERSION
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(REGION_COLUMNS if per_region else SCENE_COLUMNS)
        for method, reports in reports_by_method.items():
            for r in reports:
                if per_region:
                    for rr in r.region_reports:
                        writer.writerow([format_cell(v) for v in (
                            version, method, r.scene_id, rr.region_id, rr.text_src, rr.text_out,
                            rr.text_similarity, rr.region_psnr, rr.text_changed, rr.spillover,
                            rr.ocr_mode.value)])
                else:
                    writer.writerow([format_cell(v) for v in (
                        version, method, r.scene_id, r.category, r.target_found, r.spill_rate,
                        r.avg_region_psnr, r.min_region_psnr, r.bg_psnr, r.error)])
    return path


def write_corpus_csv(corpora: Mapping[str, CorpusReport], path: PathLike) -> Path:
    """Per-method table: one row per category plus an ``overall`` row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    version = config.REPORT_SCHEMA_VERSION
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(CORPUS_COLUMNS)
        for method, corpus in corpora.items():
            rows = sorted(corpus.categories.items()) + [("overall", corpus.overall)]
            for name, row in rows:
                writer.writerow([format_cell(v) for v in (
                    version, method, name, row.scene_count, row.errored_count, row.region_count,
                    row.flagged_count, row.found_rate, row.spill_rate, row.avg_region_psnr,
                    row.min_region_psnr, row.bg_psnr)])
    return path
