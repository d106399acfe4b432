"""Scene domain model shared by every stage of the EFF pipeline.

Raster, region and scene value types, manifest ingestion and serialization,
PNG I/O, and region rasterization / padding. All types are immutable after
construction (numpy buffers are marked read-only).
"""

import json
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

import config
from debug_logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, os.PathLike]

_AREA_EPS = 1e-9
_EDGE_EPS = 1e-9
_PAD_EPS = 1e-9


class ConfigError(ValueError):
    """Invalid FieldConfig or harness setting"""
    pass


class ManifestError(ValueError):
    """Base class for manifest problems"""
    pass


class ManifestSchemaError(ManifestError):
    """Manifest does not parse or does not follow the schema"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field {field}")
        if line is not None:
            location.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.field = field
        self.line = line


class SceneValidationError(ManifestError):
    """Scene violates a domain invariant (target count, unique ids, ...)"""
    pass


class DegenerateRegionError(ValueError):
    """Quad is empty after clipping to the image bounds"""
    pass


class RegionRole(str, Enum):
    """Role of a text region within its scene."""
    TARGET = "target"
    NON_TARGET = "non_target"


class OcrMode(str, Enum):
    """Where recognized text comes from."""
    GROUND_TRUTH = "ground_truth"
    EXTERNAL = "external"
    DISABLED = "disabled"


def _readonly(array: np.ndarray) -> np.ndarray:
    if array.flags.writeable:
        array = array.copy()
        array.setflags(write=False)
    return array


# ---------------------------------------------------------------------------
# Rasters and masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB image, row-major, top-left origin; ``pixels`` has shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels)
        if pixels.dtype != np.uint8:
            raise ValueError(f"RasterImage needs uint8 samples, got {pixels.dtype}")
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"RasterImage needs shape (H, W, 3), got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("RasterImage needs width >= 1 and height >= 1")
        object.__setattr__(self, 'pixels', _readonly(pixels))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> Tuple[int, int]:
        """(width, height), Pillow order."""
        return self.width, self.height

    @classmethod
    def blank(cls, width: int, height: int, color: Sequence[int] = (0, 0, 0)) -> 'RasterImage':
        pixels = np.empty((height, width, 3), dtype=np.uint8)
        pixels[...] = np.asarray(color, dtype=np.uint8)
        return cls(pixels)

    @classmethod
    def load(cls, path: PathLike) -> 'RasterImage':
        """Read an image file as 8-bit RGB; alpha is dropped."""
        with Image.open(path) as img:
            rgb = img.convert('RGB')
            return cls(np.asarray(rgb, dtype=np.uint8))

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(self.pixels)).save(path, format='PNG')
        return path

    def same_pixels(self, other: 'RasterImage') -> bool:
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """One boolean per pixel; ``bits`` has shape (H, W)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"BinaryMask needs a 2-D array, got shape {bits.shape}")
        object.__setattr__(self, 'bits', _readonly(bits))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @classmethod
    def empty(cls, width: int, height: int) -> 'BinaryMask':
        return cls(np.zeros((height, width), dtype=bool))

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def any(self) -> bool:
        return bool(self.bits.any())

    def __or__(self, other: 'BinaryMask') -> 'BinaryMask':
        if self.bits.shape != other.bits.shape:
            raise ValueError("cannot combine masks of different dimensions")
        return BinaryMask(self.bits | other.bits)

    def invert(self) -> 'BinaryMask':
        return BinaryMask(~self.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None


# ---------------------------------------------------------------------------
# Regions and scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quad:
    """Four (x, y) vertices in pixels, consistent winding order."""

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        try:
            points = tuple((float(x), float(y)) for x, y in self.points)
        except (TypeError, ValueError) as e:
            raise ValueError(f"quad vertices must be (x, y) number pairs: {e}") from e
        if len(points) != 4:
            raise ValueError(f"quad needs exactly 4 vertices, got {len(points)}")
        if not all(math.isfinite(c) for p in points for c in p):
            raise ValueError("quad vertices must be finite")
        object.__setattr__(self, 'points', points)

    @classmethod
    def from_list(cls, data: Sequence[Sequence[float]]) -> 'Quad':
        return cls(tuple(tuple(p) for p in data))

    @classmethod
    def from_box(cls, x0: float, y0: float, x1: float, y1: float) -> 'Quad':
        """Axis-aligned rectangle, clockwise in image coordinates."""
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def to_list(self) -> List[List[float]]:
        return [[x, y] for x, y in self.points]

    def flat(self) -> List[float]:
        return [c for p in self.points for c in p]

    def clip(self, width: float, height: float) -> List[Tuple[float, float]]:
        """Sutherland-Hodgman clip against [0, width] x [0, height]."""
        polygon = list(self.points)
        edges = (
            (lambda p: p[0] >= 0.0, lambda a, b: _cross_x(a, b, 0.0)),
            (lambda p: p[0] <= width, lambda a, b: _cross_x(a, b, width)),
            (lambda p: p[1] >= 0.0, lambda a, b: _cross_y(a, b, 0.0)),
            (lambda p: p[1] <= height, lambda a, b: _cross_y(a, b, height)),
        )
        for inside, intersect in edges:
            if not polygon:
                break
            clipped = []
            prev = polygon[-1]
            for cur in polygon:
                if inside(cur):
                    if not inside(prev):
                        clipped.append(intersect(prev, cur))
                    clipped.append(cur)
                elif inside(prev):
                    clipped.append(intersect(prev, cur))
                prev = cur
            polygon = clipped
        return polygon


def _cross_x(a, b, x):
    t = (x - a[0]) / (b[0] - a[0])
    return (x, a[1] + t * (b[1] - a[1]))


def _cross_y(a, b, y):
    t = (y - a[1]) / (b[1] - a[1])
    return (a[0] + t * (b[0] - a[0]), y)


def polygon_area(points: Sequence[Tuple[float, float]]) -> float:
    """Unsigned shoelace area."""
    if len(points) < 3:
        return 0.0
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points, list(points[1:]) + [points[0]]):
        total += x0 * y1 - x1 * y0
    return abs(total) / 2.0


@dataclass(frozen=True)
class TextRegion:
    """One OCR text region: quad, recognized source text, role."""

    id: str
    quad: Quad
    text: str
    role: RegionRole = RegionRole.NON_TARGET

    @property
    def is_target(self) -> bool:
        return self.role == RegionRole.TARGET

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "quad": self.quad.to_list(),
            "role": self.role.value,
        }


@dataclass(frozen=True)
class SceneSpec:
    """One benchmark scene: source image, regions, target designation and text."""

    scene_id: str
    category: str
    source_ref: Path
    regions: Tuple[TextRegion, ...]
    target_text: str
    edited_ref: Optional[Path] = None
    edited_ocr: Optional[Dict[str, str]] = None

    def __post_init__(self):
        object.__setattr__(self, 'regions', tuple(self.regions))
        object.__setattr__(self, 'source_ref', Path(self.source_ref))
        if self.edited_ref is not None:
            object.__setattr__(self, 'edited_ref', Path(self.edited_ref))
        if self.edited_ocr is not None:
            object.__setattr__(self, 'edited_ocr', dict(self.edited_ocr))

        if not self.regions:
            raise SceneValidationError(f"scene {self.scene_id!r} has no text regions")
        ids = [r.id for r in self.regions]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise SceneValidationError(
                f"scene {self.scene_id!r} has duplicate region ids: {', '.join(duplicates)}"
            )
        targets = [r.id for r in self.regions if r.is_target]
        if len(targets) != 1:
            raise SceneValidationError(
                f"scene {self.scene_id!r} needs exactly one target region, found {len(targets)}"
            )

    @property
    def target(self) -> TextRegion:
        return next(r for r in self.regions if r.is_target)

    @property
    def non_targets(self) -> List[TextRegion]:
        return [r for r in self.regions if not r.is_target]

    def region(self, region_id: str) -> TextRegion:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def load_source(self) -> RasterImage:
        return RasterImage.load(self.source_ref)

    def to_dict(self, base_dir: Optional[Path] = None) -> Dict[str, Any]:
        """Manifest representation; paths relative to ``base_dir`` when given."""
        data: Dict[str, Any] = {
            "scene_id": self.scene_id,
            "category": self.category,
            "source": _relative_ref(self.source_ref, base_dir),
        }
        if self.edited_ref is not None:
            data["edited"] = _relative_ref(self.edited_ref, base_dir)
        data["target_region_id"] = self.target.id
        data["target_text"] = self.target_text
        data["regions"] = [r.to_dict() for r in self.regions]
        if self.edited_ocr is not None:
            data["edited_ocr"] = dict(self.edited_ocr)
        return data


@dataclass(frozen=True)
class FieldConfig:
    """Field construction and evaluation parameters."""

    sigma: float = 0.12
    pad_core: float = 15.0
    pad_protect: float = 8.0
    smooth_sigma: float = 3.0
    sim_threshold: float = 0.85
    psnr_threshold: float = 35.0
    psnr_cap: float = 150.0

    def __post_init__(self):
        for name in ('sigma', 'pad_core', 'pad_protect', 'smooth_sigma',
                     'sim_threshold', 'psnr_threshold', 'psnr_cap'):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, value)

        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.pad_core < 0 or self.pad_protect < 0:
            raise ConfigError("padding values must be >= 0")
        if self.smooth_sigma < 0:
            raise ConfigError(f"smooth_sigma must be >= 0, got {self.smooth_sigma}")
        if not 0.0 <= self.sim_threshold <= 1.0:
            raise ConfigError(f"sim_threshold must lie in [0, 1], got {self.sim_threshold}")
        if self.psnr_cap <= self.psnr_threshold:
            raise ConfigError("psnr_cap must exceed psnr_threshold")

    @classmethod
    def from_env(cls, **overrides: Any) -> 'FieldConfig':
        """Defaults from EFF_* environment variables, then explicit overrides."""
        values = {
            'sigma': config.SIGMA,
            'pad_core': config.PAD_CORE,
            'pad_protect': config.PAD_PROTECT,
            'smooth_sigma': config.SMOOTH_SIGMA,
            'sim_threshold': config.SIM_THRESHOLD,
            'psnr_threshold': config.PSNR_THRESHOLD,
            'psnr_cap': config.PSNR_CAP,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_dict(self) -> Dict[str, float]:
        return {
            'sigma': self.sigma,
            'pad_core': self.pad_core,
            'pad_protect': self.pad_protect,
            'smooth_sigma': self.smooth_sigma,
            'sim_threshold': self.sim_threshold,
            'psnr_threshold': self.psnr_threshold,
            'psnr_cap': self.psnr_cap,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FieldConfig':
        return cls(**{k: data[k] for k in cls().to_dict() if k in data})


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

def _relative_ref(ref: Path, base_dir: Optional[Path]) -> str:
    if base_dir is None:
        return ref.as_posix()
    try:
        return Path(os.path.relpath(ref, base_dir)).as_posix()
    except ValueError:
        # different drive on Windows
        return ref.as_posix()


def _resolve_ref(ref: str, base_dir: Path) -> Path:
    path = Path(ref)
    return path if path.is_absolute() else Path(os.path.normpath(base_dir / path))


def _require(data: Dict[str, Any], key: str, kind, where: str):
    if key not in data:
        raise ManifestSchemaError(f"missing required key {key!r}", field=f"{where}.{key}")
    value = data[key]
    if not isinstance(value, kind):
        raise ManifestSchemaError(
            f"expected {getattr(kind, '__name__', kind)} for {key!r}, got {type(value).__name__}",
            field=f"{where}.{key}",
        )
    return value


def _parse_quad(raw: Any, where: str) -> Quad:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ManifestSchemaError("quad must be a list of 4 [x, y] pairs", field=where)
    for i, point in enumerate(raw):
        if (not isinstance(point, list) or len(point) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in point)):
            raise ManifestSchemaError("vertex must be [x, y] numbers", field=f"{where}[{i}]")
    try:
        return Quad.from_list(raw)
    except ValueError as e:
        raise ManifestSchemaError(str(e), field=where) from e


def scene_from_dict(data: Any, base_dir: Path, where: str = "scene") -> SceneSpec:
    """Parse one manifest scene object."""
    if not isinstance(data, dict):
        raise ManifestSchemaError("scene must be an object", field=where)

    scene_id = _require(data, "scene_id", str, where)
    source = _require(data, "source", str, where)
    target_text = _require(data, "target_text", str, where)
    raw_regions = _require(data, "regions", list, where)
    category = data.get("category", "uncategorized")
    if not isinstance(category, str):
        raise ManifestSchemaError("category must be a string", field=f"{where}.category")

    edited = data.get("edited")
    if edited is not None and not isinstance(edited, str):
        raise ManifestSchemaError("edited must be a string path", field=f"{where}.edited")

    edited_ocr = data.get("edited_ocr")
    if edited_ocr is not None:
        if not isinstance(edited_ocr, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in edited_ocr.items()):
            raise ManifestSchemaError("edited_ocr must map region ids to strings",
                                      field=f"{where}.edited_ocr")

    target_id = data.get("target_region_id")
    if target_id is not None and not isinstance(target_id, str):
        raise ManifestSchemaError("target_region_id must be a string",
                                  field=f"{where}.target_region_id")

    parsed = []
    for j, raw in enumerate(raw_regions):
        rwhere = f"{where}.regions[{j}]"
        if not isinstance(raw, dict):
            raise ManifestSchemaError("region must be an object", field=rwhere)
        region_id = _require(raw, "id", str, rwhere)
        text = _require(raw, "text", str, rwhere)
        quad = _parse_quad(raw.get("quad"), f"{rwhere}.quad")
        role_raw = raw.get("role")
        if role_raw is not None:
            try:
                RegionRole(role_raw)
            except ValueError:
                raise ManifestSchemaError(f"unknown role {role_raw!r}", field=f"{rwhere}.role")
        parsed.append((region_id, text, quad, role_raw))

    ids = {p[0] for p in parsed}
    if target_id is not None and target_id not in ids:
        raise SceneValidationError(
            f"scene {scene_id!r}: target_region_id {target_id!r} is not among its regions"
        )

    regions = []
    for region_id, text, quad, role_raw in parsed:
        if region_id == target_id and role_raw == RegionRole.NON_TARGET.value:
            raise SceneValidationError(
                f"scene {scene_id!r}: region {region_id!r} is target_region_id but has role 'non_target'"
            )
        is_target = region_id == target_id or role_raw == RegionRole.TARGET.value
        regions.append(TextRegion(
            id=region_id,
            quad=quad,
            text=text,
            role=RegionRole.TARGET if is_target else RegionRole.NON_TARGET,
        ))

    return SceneSpec(
        scene_id=scene_id,
        category=category,
        source_ref=_resolve_ref(source, base_dir),
        regions=tuple(regions),
        target_text=target_text,
        edited_ref=_resolve_ref(edited, base_dir) if edited is not None else None,
        edited_ocr=edited_ocr,
    )


def load_manifest(path: PathLike) -> List[SceneSpec]:
    """Parse a manifest file into validated scenes.

    Image files are not opened here; relative paths resolve against the
    manifest's directory.

    Raises:
        ManifestSchemaError: unparseable JSON or schema violation (with field/line)
        SceneValidationError: duplicate ids, target count != 1
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e

    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestSchemaError(f"invalid JSON: {e.msg}", line=e.lineno) from e

    if not isinstance(document, dict):
        raise ManifestSchemaError("manifest must be a JSON object", field="$")
    raw_scenes = _require(document, "scenes", list, "$")

    base_dir = path.parent
    scenes = [scene_from_dict(raw, base_dir, f"scenes[{i}]") for i, raw in enumerate(raw_scenes)]

    seen = set()
    for scene in scenes:
        if scene.scene_id in seen:
            raise SceneValidationError(f"duplicate scene id {scene.scene_id!r}")
        seen.add(scene.scene_id)

    logger.debug(f"Loaded {len(scenes)} scenes from {path}")
    return scenes


def save_manifest(scenes: Iterable[SceneSpec], path: PathLike) -> Path:
    """Write scenes as a manifest; image paths are stored relative to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base_dir = path.parent
    document = {"scenes": [s.to_dict(base_dir) for s in scenes]}
    path.write_text(json.dumps(document, indent=2, ensure_ascii=False) + "\n", encoding='utf-8')
    return path


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

def points_in_polygon(px: np.ndarray, py: np.ndarray,
                      vertices: Sequence[Tuple[float, float]]) -> np.ndarray:
    """Vectorized crossing-number test; points on an edge count as inside."""
    inside = np.zeros(np.shape(px), dtype=bool)
    on_edge = np.zeros(np.shape(px), dtype=bool)
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]

        straddles = (y0 > py) != (y1 > py)
        if y1 != y0:
            x_cross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            inside ^= straddles & (px < x_cross)

        cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        tol = _EDGE_EPS * max(math.hypot(x1 - x0, y1 - y0), 1.0)
        on_edge |= (
            (np.abs(cross) <= tol)
            & (px >= min(x0, x1) - _EDGE_EPS) & (px <= max(x0, x1) + _EDGE_EPS)
            & (py >= min(y0, y1) - _EDGE_EPS) & (py <= max(y0, y1) + _EDGE_EPS)
        )
    return inside | on_edge


def rasterize_quad(quad: Quad, width: int, height: int) -> BinaryMask:
    """Pixel (i, j) is set iff its centre (i + 0.5, j + 0.5) lies in or on the quad.

    Raises:
        DegenerateRegionError: quad is outside the image, has zero area after
            clipping, or covers no pixel centre
    """
    clipped = quad.clip(width, height)
    if polygon_area(clipped) <= _AREA_EPS:
        raise DegenerateRegionError(f"quad {quad.to_list()} is empty inside {width}x{height}")

    xs = [p[0] for p in clipped]
    ys = [p[1] for p in clipped]
    i0 = max(0, int(math.floor(min(xs) - 0.5)))
    i1 = min(width - 1, int(math.ceil(max(xs) - 0.5)))
    j0 = max(0, int(math.floor(min(ys) - 0.5)))
    j1 = min(height - 1, int(math.ceil(max(ys) - 0.5)))

    bits = np.zeros((height, width), dtype=bool)
    if i1 >= i0 and j1 >= j0:
        py, px = np.mgrid[j0:j1 + 1, i0:i1 + 1].astype(np.float64)
        bits[j0:j1 + 1, i0:i1 + 1] = points_in_polygon(px + 0.5, py + 0.5, quad.points)

    if not bits.any():
        raise DegenerateRegionError(f"quad {quad.to_list()} covers no pixel centre")
    return BinaryMask(bits)


def pad_mask(mask: BinaryMask, pad: float) -> BinaryMask:
    """Circular dilation: set iff a set input pixel lies within Euclidean ``pad``."""
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    if pad == 0 or not mask.any():
        return mask
    distances = ndimage.distance_transform_edt(~mask.bits)
    return BinaryMask(distances <= pad + _PAD_EPS)
