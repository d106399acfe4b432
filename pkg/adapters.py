"""Bridges to external OCR engines and editing backends.

Stage 1 (PARSE) and Stage 3 (EDIT) of the pipeline run either from the
manifest (ground-truth regions, precomputed edits) or through subprocess
commands speaking a small JSON / command-line contract:

OCR command:    <cmd> <image path>   -> stdout {"regions": [{"id", "text", "quad", "confidence"}]}
Editor command: <cmd> --source P --target-id ID --target-text T --quad x1,y1,...,x4,y4
                                     -> final stdout line is the output image path
"""

import shlex
import subprocess
import tempfile
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

import config
from debug_logging import describe, get_logger, log_backend_call
from json_utils import extract_json_from_output, last_nonempty_line, validate_json_structure
from scene_model import (
    ConfigError,
    DegenerateRegionError,
    OcrMode,
    Quad,
    RasterImage,
    RegionRole,
    SceneSpec,
    TextRegion,
    rasterize_quad,
)

logger = get_logger(__name__)

IOU_MATCH_THRESHOLD = 0.5


class BackendError(RuntimeError):
    """External backend failed; carries exit code and captured stderr"""

    def __init__(self, message: str, returncode: Optional[int] = None, stderr: str = ''):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class BackendTimeoutError(BackendError):
    """External backend exceeded its timeout"""
    pass


class EditorMode(str, Enum):
    """Where the edited image comes from."""
    PRECOMPUTED = "precomputed"
    EXTERNAL = "external"


@dataclass(frozen=True)
class OcrBackend:
    mode: OcrMode = OcrMode.GROUND_TRUTH
    command: Optional[str] = None
    timeout: float = 120.0
    confidence_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'mode', OcrMode(self.mode))
        if self.mode == OcrMode.EXTERNAL and not self.command:
            raise ConfigError("external OCR mode requires an OCR command")

    @classmethod
    def from_env(cls) -> 'OcrBackend':
        return cls(mode=config.OCR_MODE, command=config.OCR_CMD,
                   timeout=config.ADAPTER_TIMEOUT, confidence_floor=config.OCR_CONFIDENCE_FLOOR)


@dataclass(frozen=True)
class EditorBackend:
    mode: EditorMode = EditorMode.PRECOMPUTED
    command: Optional[str] = None
    timeout: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, 'mode', EditorMode(self.mode))
        if self.mode == EditorMode.EXTERNAL and not self.command:
            raise ConfigError("external editor mode requires an editor command")

    @classmethod
    def from_env(cls) -> 'EditorBackend':
        return cls(mode=config.EDITOR_MODE, command=config.EDITOR_CMD,
                   timeout=config.ADAPTER_TIMEOUT)


# ---------------------------------------------------------------------------
# Subprocess plumbing
# ---------------------------------------------------------------------------

def _decode(data: Optional[bytes]) -> str:
    """Backend output is UTF-8 regardless of locale; bad bytes become U+FFFD."""
    return data.decode('utf-8', errors='replace') if data else ''


def _run_command(argv: Sequence[str], timeout: float, cwd: Optional[Path] = None) -> str:
    """Run one backend command and return its stdout decoded as UTF-8.

    Raises:
        BackendTimeoutError: command exceeded ``timeout`` seconds
        BackendError: command could not start or exited non-zero
    """
    try:
        completed = subprocess.run(
            list(argv), capture_output=True, timeout=timeout,
            cwd=str(cwd) if cwd else None,
        )
    except subprocess.TimeoutExpired as e:
        stderr = _decode(e.stderr)
        log_backend_call(argv, None, stderr)
        raise BackendTimeoutError(f"{argv[0]} timed out after {timeout:g} s", stderr=stderr) from e
    except OSError as e:
        raise BackendError(f"cannot start {argv[0]}: {e}") from e

    stderr = _decode(completed.stderr)
    log_backend_call(argv, completed.returncode, stderr)
    if completed.returncode != 0:
        raise BackendError(
            f"{argv[0]} exited with status {completed.returncode}: {describe(stderr.strip())}",
            returncode=completed.returncode,
            stderr=stderr,
        )
    return _decode(completed.stdout)


def _command_argv(command: str, image_path: Path) -> List[str]:
    """Split the command template; ``{image}`` is substituted, else the path is appended."""
    argv = shlex.split(command)
    if any('{image}' in a for a in argv):
        return [a.replace('{image}', str(image_path)) for a in argv]
    return argv + [str(image_path)]


def parse_ocr_output(stdout: str, confidence_floor: float = 0.0) -> List[TextRegion]:
    """Parse the OCR wire JSON into non-target regions, dropping low-confidence ones.

    Raises:
        BackendError: no JSON document, or a region entry is malformed
    """
    document = extract_json_from_output(stdout)
    if document is None or not validate_json_structure(document, ['regions']):
        raise BackendError(f"OCR output is not a regions document: {describe(stdout)}")
    if not isinstance(document['regions'], list):
        raise BackendError("OCR output 'regions' must be a list")

    regions = []
    for i, raw in enumerate(document['regions']):
        try:
            confidence = raw.get('confidence')
            if confidence is not None and float(confidence) < confidence_floor:
                logger.debug(f"Dropping OCR region {raw.get('id')} (confidence {confidence})")
                continue
            regions.append(TextRegion(
                id=str(raw['id']),
                quad=Quad.from_list(raw['quad']),
                text=str(raw.get('text', '')),
                role=RegionRole.NON_TARGET,
            ))
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise BackendError(f"malformed OCR region #{i}: {e}") from e
    return regions


# ---------------------------------------------------------------------------
# Stage 1: PARSE
# ---------------------------------------------------------------------------

def detect_text(backend: OcrBackend, image: Union[RasterImage, Path, str],
                scene: Optional[SceneSpec] = None) -> List[TextRegion]:
    """Detect text regions on an image.

    GroundTruth returns the manifest regions of ``scene`` verbatim; an external
    command is run on the image path (in-memory images are written to a
    private temp directory first); Disabled is an error.
    """
    mode = backend.mode
    if mode == OcrMode.GROUND_TRUTH:
        if scene is None:
            raise BackendError("ground-truth detection needs the manifest scene")
        return list(scene.regions)
    if mode == OcrMode.DISABLED:
        raise BackendError("text detection is required for PARSE but OCR is disabled")

    with tempfile.TemporaryDirectory(prefix='eff-ocr-') as workdir:
        if isinstance(image, RasterImage):
            image_path = image.save(Path(workdir) / 'image.png')
        else:
            image_path = Path(image).resolve()
        stdout = _run_command(_command_argv(backend.command, image_path), backend.timeout, Path(workdir))
    return parse_ocr_output(stdout, backend.confidence_floor)


def _iou(a, b) -> float:
    union = np.count_nonzero(a.bits | b.bits)
    return np.count_nonzero(a.bits & b.bits) / union if union else 0.0


def assign_target(detected: Sequence[TextRegion], scene: SceneSpec,
                  width: int, height: int) -> SceneSpec:
    """Scene with the detected regions; the target is matched by id, else by best IoU.

    Raises:
        BackendError: nothing detected overlaps the manifest target
    """
    if not detected:
        raise BackendError(f"[{scene.scene_id}] OCR detected no text regions")
    target = scene.target
    target_id = next((r.id for r in detected if r.id == target.id), None)

    if target_id is None:
        target_mask = rasterize_quad(target.quad, width, height)
        best, best_iou = None, 0.0
        for region in detected:
            try:
                iou = _iou(target_mask, rasterize_quad(region.quad, width, height))
            except DegenerateRegionError:
                continue
            if iou > best_iou:
                best, best_iou = region.id, iou
        if best is None:
            raise BackendError(f"[{scene.scene_id}] no detected region overlaps target {target.id}")
        target_id = best

    regions = tuple(
        replace(r, role=RegionRole.TARGET if r.id == target_id else RegionRole.NON_TARGET)
        for r in detected
    )
    return replace(scene, regions=regions)


# ---------------------------------------------------------------------------
# Stage 3: EDIT
# ---------------------------------------------------------------------------

def editor_argv(command: str, scene: SceneSpec) -> List[str]:
    quad = ",".join(repr(c) for c in scene.target.quad.flat())
    return shlex.split(command) + [
        '--source', str(Path(scene.source_ref).resolve()),
        '--target-id', scene.target.id,
        '--target-text', scene.target_text,
        '--quad', quad,
    ]


def run_editor(backend: EditorBackend, scene: SceneSpec) -> RasterImage:
    """Obtain the edited image for a scene.

    Raises:
        BackendError: missing edited_ref, command failure, unreadable output
    """
    if backend.mode == EditorMode.PRECOMPUTED:
        if scene.edited_ref is None:
            raise BackendError(f"[{scene.scene_id}] precomputed editing needs an 'edited' image in the manifest")
        try:
            return RasterImage.load(scene.edited_ref)
        except (OSError, ValueError) as e:
            raise BackendError(f"[{scene.scene_id}] cannot read edited image {scene.edited_ref}: {e}") from e

    with tempfile.TemporaryDirectory(prefix='eff-edit-') as workdir:
        stdout = _run_command(editor_argv(backend.command, scene), backend.timeout, Path(workdir))
        output_path = last_nonempty_line(stdout)
        if output_path is None:
            raise BackendError(f"[{scene.scene_id}] editor printed no output path")
        path = Path(output_path)
        if not path.is_absolute():
            path = Path(workdir) / path
        try:
            return RasterImage.load(path)
        except (OSError, ValueError) as e:
            raise BackendError(f"[{scene.scene_id}] cannot read editor output {path}: {e}") from e


# ---------------------------------------------------------------------------
# Reading region texts on an output image (evaluation)
# ---------------------------------------------------------------------------

def _region_mse(a: RasterImage, b: RasterImage, mask) -> float:
    diff = a.pixels[mask.bits].astype(np.int64) - b.pixels[mask.bits].astype(np.int64)
    return float(np.mean(diff * diff))


def ground_truth_texts(scene: SceneSpec, image: RasterImage, source: RasterImage,
                       edited: Optional[RasterImage] = None) -> Dict[str, str]:
    """Reference-oracle OCR built from manifest texts.

    A region reads as the source text when its bytes equal the source, as the
    edited text when they equal the edited image, and otherwise as the text
    of whichever reference is closer in region MSE (ties go to the source).
    """
    references = [(source, {r.id: r.text for r in scene.regions})]
    if edited is not None and edited.pixels.shape == image.pixels.shape:
        edited_ocr = scene.edited_ocr or {}
        references.append((edited, {r.id: edited_ocr.get(r.id, r.text) for r in scene.regions}))

    texts = {}
    for region in scene.regions:
        try:
            mask = rasterize_quad(region.quad, image.width, image.height)
        except DegenerateRegionError:
            continue
        errors = [_region_mse(image, ref, mask) for ref, _ in references]
        best = int(np.argmin(errors))
        texts[region.id] = references[best][1][region.id]
    return texts


def match_detections(scene: SceneSpec, detected: Sequence[TextRegion],
                     width: int, height: int) -> Dict[str, str]:
    """Assign detected texts to scene regions by mask IoU; unmatched regions read ''."""
    detected_masks = []
    for det in detected:
        try:
            detected_masks.append((det, rasterize_quad(det.quad, width, height)))
        except DegenerateRegionError:
            continue

    texts = {}
    for region in scene.regions:
        try:
            mask = rasterize_quad(region.quad, width, height)
        except DegenerateRegionError:
            continue
        best_text, best_iou = '', IOU_MATCH_THRESHOLD
        for det, det_mask in detected_masks:
            iou = _iou(mask, det_mask)
            if iou >= best_iou:
                best_text, best_iou = det.text, iou
        texts[region.id] = best_text
    return texts


def read_region_texts(backend: OcrBackend, scene: SceneSpec, image: RasterImage,
                      source: RasterImage, edited: Optional[RasterImage] = None) -> Optional[Dict[str, str]]:
    """Region id -> text as read on ``image``; None when OCR is disabled."""
    if backend.mode == OcrMode.DISABLED:
        return None
    if backend.mode == OcrMode.GROUND_TRUTH:
        return ground_truth_texts(scene, image, source, edited)
    detected = detect_text(backend, image)
    return match_detections(scene, detected, image.width, image.height)
