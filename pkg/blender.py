"""Field-guided blending of source and edited images.

    out = src * (1 - w) + edited * w

computed per pixel and channel in float32, rounded half away from zero and
clamped to [0, 255]. Where w is exactly 0 or 1 the corresponding input byte is
copied verbatim, which is what keeps protected zones bit-exact.
"""

from enum import Enum

import numpy as np

from debug_logging import get_logger
from field_builder import FidelityField
from scene_model import RasterImage

logger = get_logger(__name__)


class BlendError(ValueError):
    """Inputs to blend() disagree in size or channel layout"""
    pass


class ResizePolicy(str, Enum):
    """What to do when the edited image size differs from the source."""
    STRICT = "strict"
    BILINEAR = "bilinear"


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def resize_bilinear(img: RasterImage, width: int, height: int) -> RasterImage:
    """Bilinear resampling with half-pixel-centred coordinates; identity on same size."""
    if width < 1 or height < 1:
        raise BlendError(f"target size must be >= 1x1, got {width}x{height}")
    if (img.width, img.height) == (width, height):
        return img

    src = img.pixels.astype(np.float64)

    def axis(n_out: int, n_in: int):
        coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1)
        lo = np.floor(coords).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, coords - lo

    x0, x1, fx = axis(width, img.width)
    y0, y1, fy = axis(height, img.height)
    fx = fx[None, :, None]
    fy = fy[:, None, None]

    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy

    return RasterImage(np.clip(_round_half_away(out), 0, 255).astype(np.uint8))


def blend(src: RasterImage, edited: RasterImage, field: FidelityField,
          resize_policy: ResizePolicy = ResizePolicy.STRICT) -> RasterImage:
    """Blend ``edited`` into ``src`` with per-pixel weights ``field``.

    Raises:
        BlendError: field size differs from source, edited size differs under
            STRICT, or channel counts differ
    """
    if (field.width, field.height) != (src.width, src.height):
        raise BlendError(
            f"field is {field.width}x{field.height}, source is {src.width}x{src.height}"
        )
    if src.pixels.shape[2] != edited.pixels.shape[2]:
        raise BlendError(
            f"channel mismatch: source {src.pixels.shape[2]}, edited {edited.pixels.shape[2]}"
        )
    if (edited.width, edited.height) != (src.width, src.height):
        if ResizePolicy(resize_policy) != ResizePolicy.BILINEAR:
            raise BlendError(
                f"edited image is {edited.width}x{edited.height}, "
                f"source is {src.width}x{src.height} (use bilinear resize to allow)"
            )
        logger.info(f"Resizing edited image {edited.width}x{edited.height} -> {src.width}x{src.height}")
        edited = resize_bilinear(edited, src.width, src.height)

    w = field.weights[:, :, None]
    s = src.pixels.astype(np.float32)
    e = edited.pixels.astype(np.float32)
    mixed = s * (np.float32(1.0) - w) + e * w
    out = np.clip(_round_half_away(mixed), 0, 255).astype(np.uint8)

    out = np.where(w == 0.0, src.pixels, out)
    out = np.where(w == 1.0, edited.pixels, out)
    return RasterImage(out)
