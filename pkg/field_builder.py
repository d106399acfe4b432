"""Edit Fidelity Field construction.

Builds the per-pixel fidelity weight field from a scene:

    F = Smooth(max(F_core, F_decay) * F_protect), then F = 0 on protected zones

where F_core is the padded target region, F_decay = exp(-d / (sigma * D)) with
d the Euclidean distance to the padded core and D the image diagonal, and
F_protect removes every padded non-target region.
"""

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np
from scipy import ndimage

from debug_logging import get_logger
from scene_model import (
    BinaryMask,
    DegenerateRegionError,
    FieldConfig,
    SceneSpec,
    pad_mask,
    rasterize_quad,
)

logger = get_logger(__name__)


class FieldError(ValueError):
    """Field cannot be built from the given inputs"""
    pass


@dataclass(frozen=True, eq=False)
class DistanceGrid:
    """Euclidean pixel distance to the nearest seed pixel, shape (H, W)."""

    distances: np.ndarray

    def __post_init__(self):
        distances = np.asarray(self.distances, dtype=np.float64)
        if distances.ndim != 2:
            raise FieldError(f"DistanceGrid needs a 2-D array, got shape {distances.shape}")
        if not np.all(np.isfinite(distances)) or np.any(distances < 0):
            raise FieldError("distances must be finite and non-negative")
        distances = distances.copy()
        distances.setflags(write=False)
        object.__setattr__(self, 'distances', distances)

    @property
    def width(self) -> int:
        return int(self.distances.shape[1])

    @property
    def height(self) -> int:
        return int(self.distances.shape[0])


@dataclass(frozen=True, eq=False)
class FidelityField:
    """Fidelity weights in [0, 1], float32, shape (H, W)."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights)
        if weights.ndim != 2:
            raise FieldError(f"FidelityField needs a 2-D array, got shape {weights.shape}")
        weights = weights.astype(np.float32, copy=True)
        if not np.all(np.isfinite(weights)):
            raise FieldError("field weights must be finite")
        if weights.size and (weights.min() < 0.0 or weights.max() > 1.0):
            raise FieldError(
                f"field weights outside [0, 1]: min={weights.min()}, max={weights.max()}"
            )
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def mass(self) -> float:
        """Sum of weights: the editable area in pixel units."""
        return float(self.weights.sum(dtype=np.float64))

    @classmethod
    def constant(cls, value: float, width: int, height: int) -> 'FidelityField':
        return cls(np.full((height, width), value, dtype=np.float32))


class ProtectZones(NamedTuple):
    mask: BinaryMask
    skipped: List[str]


@dataclass(frozen=True, eq=False)
class FieldPlan:
    """Every component of a built field, kept for export and reporting."""

    core: BinaryMask
    distance: DistanceGrid
    decay: FidelityField
    protect: BinaryMask
    field: FidelityField
    skipped_regions: List[str] = field(default_factory=list)


def build_core(scene: SceneSpec, pad_core: float, width: int, height: int) -> BinaryMask:
    """Padded target region: F_core = 1 on the returned mask.

    Raises:
        DegenerateRegionError: the target quad is empty inside the image
    """
    raw = rasterize_quad(scene.target.quad, width, height)
    return pad_mask(raw, pad_core)


def distance_transform(mask: BinaryMask) -> DistanceGrid:
    """Exact Euclidean distance from every pixel centre to the nearest set pixel.

    Raises:
        FieldError: mask has no set pixel
    """
    if not mask.any():
        raise FieldError("distance transform needs at least one set pixel")
    return DistanceGrid(ndimage.distance_transform_edt(~mask.bits))


def image_diagonal(width: int, height: int) -> float:
    return math.hypot(width, height)


def build_decay(dist: DistanceGrid, sigma: float, width: int, height: int) -> FidelityField:
    """F_decay = exp(-d / (sigma * D)), D the image diagonal; 1 where d = 0."""
    if sigma <= 0:
        raise FieldError(f"sigma must be > 0, got {sigma}")
    if (dist.width, dist.height) != (width, height):
        raise FieldError(
            f"distance grid is {dist.width}x{dist.height}, expected {width}x{height}"
        )
    scale = sigma * image_diagonal(width, height)
    return FidelityField(np.exp(-dist.distances / scale))


def build_protect(scene: SceneSpec, pad_protect: float, width: int, height: int) -> ProtectZones:
    """Union of padded non-target regions; F_protect = 1 - mask.

    Degenerate non-target quads are skipped with a warning and listed in
    ``skipped``.
    """
    bits = np.zeros((height, width), dtype=bool)
    skipped = []
    for region in scene.non_targets:
        try:
            raw = rasterize_quad(region.quad, width, height)
        except DegenerateRegionError as e:
            logger.warning(f"[{scene.scene_id}] skipping protected region {region.id}: {e}")
            skipped.append(region.id)
            continue
        bits |= pad_mask(raw, pad_protect).bits
    return ProtectZones(BinaryMask(bits), skipped)


# Below this the kernel collapses to a unit impulse
MIN_SMOOTH_SIGMA = 1e-6


def gaussian_kernel(smooth_sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian, radius ceil(3 * sigma)."""
    if smooth_sigma < MIN_SMOOTH_SIGMA:
        return np.ones(1, dtype=np.float64)
    radius = int(math.ceil(3.0 * smooth_sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets ** 2) / (2.0 * smooth_sigma ** 2))
    return kernel / kernel.sum()


def _smooth_array(values: np.ndarray, smooth_sigma: float) -> np.ndarray:
    kernel = gaussian_kernel(smooth_sigma)
    out = ndimage.correlate1d(values, kernel, axis=0, mode='nearest')
    return ndimage.correlate1d(out, kernel, axis=1, mode='nearest')


def gaussian_smooth(field: FidelityField, smooth_sigma: float) -> FidelityField:
    """Separable Gaussian blur with replicate-edge borders; sigma ~0 is identity."""
    if smooth_sigma < 0:
        raise FieldError(f"smooth_sigma must be >= 0, got {smooth_sigma}")
    if smooth_sigma < MIN_SMOOTH_SIGMA:
        return field
    smoothed = _smooth_array(field.weights.astype(np.float64), smooth_sigma)
    return FidelityField(np.clip(smoothed, 0.0, 1.0))


def _finish(combined: np.ndarray, protect: BinaryMask, smooth_sigma: float) -> FidelityField:
    if smooth_sigma >= MIN_SMOOTH_SIGMA:
        combined = _smooth_array(combined, smooth_sigma)
    weights = combined.astype(np.float32)
    # re-enforcement runs after smoothing
    weights[protect.bits] = 0.0
    return FidelityField(np.clip(weights, 0.0, 1.0))


def plan_field(scene: SceneSpec, config: FieldConfig, width: int, height: int) -> FieldPlan:
    """Build the field and keep its components."""
    core = build_core(scene, config.pad_core, width, height)
    distance = distance_transform(core)
    decay = build_decay(distance, config.sigma, width, height)
    protect = build_protect(scene, config.pad_protect, width, height)

    combined = np.maximum(core.bits.astype(np.float64), decay.weights.astype(np.float64))
    combined = combined * (1.0 - protect.mask.bits.astype(np.float64))
    field_ = _finish(combined, protect.mask, config.smooth_sigma)

    return FieldPlan(
        core=core,
        distance=distance,
        decay=decay,
        protect=protect.mask,
        field=field_,
        skipped_regions=list(protect.skipped),
    )


def build_field(scene: SceneSpec, config: FieldConfig, width: int, height: int) -> FidelityField:
    """Edit Fidelity Field for ``scene`` on a ``width`` x ``height`` source."""
    return plan_field(scene, config, width, height).field


def build_simple_field(scene: SceneSpec, config: FieldConfig, width: int, height: int) -> FidelityField:
    """Feathered target mask without protected zones (ablation variant)."""
    core = build_core(scene, config.pad_core, width, height)
    decay = build_decay(distance_transform(core), config.sigma, width, height)
    combined = np.maximum(core.bits.astype(np.float64), decay.weights.astype(np.float64))
    return _finish(combined, BinaryMask.empty(width, height), config.smooth_sigma)
