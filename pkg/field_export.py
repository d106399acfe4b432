"""Field export: PFM float maps, heatmap PNGs and cross-section profiles."""

import csv
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image

from field_builder import FidelityField, FieldError
from scene_model import PathLike


def write_pfm(field: FidelityField, path: PathLike) -> Path:
    """Grayscale PFM: scale -1.0 (little-endian), rows stored bottom-to-top."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"Pf\n{field.width} {field.height}\n-1.0\n".encode('ascii')
    raster = np.flipud(field.weights).astype('<f4').tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(raster)
    return path


def read_pfm(path: PathLike) -> np.ndarray:
    """Read a grayscale PFM into a top-row-first float32 array."""
    with open(path, 'rb') as f:
        tag = f.readline().strip()
        if tag != b'Pf':
            raise FieldError(f"{path}: not a grayscale PFM (tag {tag!r})")
        dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = '<f4' if scale < 0 else '>f4'
        data = np.frombuffer(f.read(width * height * 4), dtype=dtype)
    if data.size != width * height:
        raise FieldError(f"{path}: truncated raster")
    return np.flipud(data.reshape(height, width)).astype(np.float32)


def heatmap_array(field: FidelityField) -> np.ndarray:
    """8-bit samples round(255 * w), halves rounded up."""
    return np.floor(field.weights.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)


def write_heatmap(field: FidelityField, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(heatmap_array(field)).save(path, format='PNG')
    return path


def cross_section(field: FidelityField, row: int) -> List[Tuple[int, float]]:
    if not 0 <= row < field.height:
        raise FieldError(f"row {row} outside field of height {field.height}")
    return [(x, float(w)) for x, w in enumerate(field.weights[row])]


def write_profile_csv(field: FidelityField, row: int, path: PathLike) -> Path:
    """CSV with columns x, weight along one row of the field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['x', 'weight'])
        for x, weight in cross_section(field, row):
            writer.writerow([x, repr(weight)])
    return path
