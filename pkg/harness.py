"""End-to-end EFF pipeline and corpus-level drivers.

Per scene the pipeline runs four stages:

1. PARSE - detect (or pass through) text regions and designate the target
2. PLAN  - build the fidelity field from the region layout
3. EDIT  - obtain the edited image once from the editing backend
4. BLEND - field-guided blend of source and edited image

and then evaluates the raw edited image (baseline), the ablation blend
(simple_mask) and the EFF blend side by side.
"""

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import config
from adapters import (
    EditorBackend,
    OcrBackend,
    assign_target,
    detect_text,
    read_region_texts,
    run_editor,
)
from blender import BlendError, ResizePolicy, blend, resize_bilinear
from debug_logging import get_logger, log_error_context, log_field_stats, log_scene_step
from field_builder import FieldPlan, build_simple_field, plan_field
from field_export import write_heatmap, write_pfm, write_profile_csv
from scene_model import (
    ConfigError,
    FieldConfig,
    OcrMode,
    PathLike,
    RasterImage,
    SceneSpec,
)
from spillover_eval import (
    FOUND_RATE_NOTE,
    CorpusReport,
    SceneReport,
    aggregate_corpus,
    evaluate_scene,
    format_cell,
    write_corpus_csv,
    write_json_report,
    write_scene_csv,
)

logger = get_logger(__name__)

BASELINE = 'baseline'
SIMPLE_MASK = 'simple_mask'
EFF = 'eff'


@dataclass
class SceneOutcome:
    """Result of running the pipeline on one scene."""

    scene_id: str
    category: str
    status: str = 'pending'
    steps: List[Tuple[str, str]] = field(default_factory=list)
    reports: Dict[str, SceneReport] = field(default_factory=dict)
    field_mass: Optional[float] = None
    skipped_regions: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == 'success'

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "category": self.category,
            "status": self.status,
            "steps": [list(s) for s in self.steps],
            "field_mass": self.field_mass,
            "skipped_regions": list(self.skipped_regions),
            "error": self.error,
            "methods": {m: r.to_dict() for m, r in self.reports.items()},
        }


@dataclass(frozen=True, eq=False)
class RenderedScene:
    """Everything the pipeline produced for one scene before evaluation."""

    scene: SceneSpec
    source: RasterImage
    edited: RasterImage
    plan: FieldPlan
    outputs: Dict[str, RasterImage]


@dataclass
class CorpusRun:
    outcomes: List[SceneOutcome]
    corpora: Dict[str, CorpusReport]

    @property
    def errored_scenes(self) -> List[str]:
        return [o.scene_id for o in self.outcomes if not o.ok]

    @property
    def partial(self) -> bool:
        return bool(self.errored_scenes)


class EffPipeline:
    """Run the EFF stages on scenes with one set of backends and parameters."""

    def __init__(self,
                 field_config: Optional[FieldConfig] = None,
                 ocr_backend: Optional[OcrBackend] = None,
                 editor_backend: Optional[EditorBackend] = None,
                 resize_policy: Optional[ResizePolicy] = None,
                 ablation: bool = True):
        """
        Args:
            field_config: field and evaluation parameters (env defaults when omitted)
            ocr_backend: text detection / reading backend
            editor_backend: source of edited images
            resize_policy: what to do with edited images of a different size
            ablation: also blend and evaluate the simple_mask variant
        """
        self.field_config = field_config or FieldConfig.from_env()
        self.ocr_backend = ocr_backend or OcrBackend.from_env()
        self.editor_backend = editor_backend or EditorBackend.from_env()
        self.resize_policy = ResizePolicy(resize_policy or config.RESIZE_POLICY)
        self.ablation = ablation

    @property
    def methods(self) -> List[str]:
        return [BASELINE, SIMPLE_MASK, EFF] if self.ablation else [BASELINE, EFF]

    def with_config(self, field_config: FieldConfig) -> 'EffPipeline':
        return EffPipeline(field_config, self.ocr_backend, self.editor_backend,
                           self.resize_policy, self.ablation)

    # -- stages ------------------------------------------------------------

    def parse(self, scene: SceneSpec) -> Tuple[SceneSpec, RasterImage]:
        """Stage 1: load the source and settle the region layout."""
        source = scene.load_source()
        if self.ocr_backend.mode == OcrMode.EXTERNAL:
            detected = detect_text(self.ocr_backend, scene.source_ref, scene)
            scene = assign_target(detected, scene, source.width, source.height)
        return scene, source

    def plan(self, scene: SceneSpec, source: RasterImage) -> FieldPlan:
        """Stage 2: fidelity field for the source dimensions."""
        plan = plan_field(scene, self.field_config, source.width, source.height)
        log_field_stats(scene.scene_id, plan.field.weights)
        return plan

    def edit(self, scene: SceneSpec, source: RasterImage) -> RasterImage:
        """Stage 3: edited image, brought to the source size when allowed."""
        edited = run_editor(self.editor_backend, scene)
        if edited.size != source.size:
            if self.resize_policy != ResizePolicy.BILINEAR:
                raise BlendError(
                    f"edited image is {edited.width}x{edited.height}, "
                    f"source is {source.width}x{source.height} (use bilinear resize to allow)"
                )
            edited = resize_bilinear(edited, source.width, source.height)
        return edited

    def blend_outputs(self, scene: SceneSpec, source: RasterImage, edited: RasterImage,
                      plan: FieldPlan) -> Dict[str, RasterImage]:
        """Stage 4: one output image per evaluated method."""
        outputs = {BASELINE: edited}
        if self.ablation:
            simple = build_simple_field(scene, self.field_config,
                                        source.width, source.height)
            outputs[SIMPLE_MASK] = blend(source, edited, simple, self.resize_policy)
        outputs[EFF] = blend(source, edited, plan.field, self.resize_policy)
        return outputs

    def render(self, scene: SceneSpec, steps: Optional[List[Tuple[str, str]]] = None) -> RenderedScene:
        """Run stages 1-4 on one scene."""
        steps = steps if steps is not None else []

        logger.info(f"[{scene.scene_id}] Stage 1: PARSE")
        parsed, source = self.parse(scene)
        steps.append(('parse', 'success'))

        logger.info(f"[{scene.scene_id}] Stage 2: PLAN")
        plan = self.plan(parsed, source)
        steps.append(('plan', 'success'))

        logger.info(f"[{scene.scene_id}] Stage 3: EDIT")
        edited = self.edit(parsed, source)
        steps.append(('edit', 'success'))

        logger.info(f"[{scene.scene_id}] Stage 4: BLEND")
        outputs = self.blend_outputs(parsed, source, edited, plan)
        steps.append(('blend', 'success'))

        return RenderedScene(parsed, source, edited, plan, outputs)

    def evaluate(self, scene: SceneSpec, output: RasterImage, source: RasterImage,
                 edited: Optional[RasterImage]) -> SceneReport:
        texts = read_region_texts(self.ocr_backend, scene, output, source, edited)
        mode = self.ocr_backend.mode if texts is not None else OcrMode.DISABLED
        return evaluate_scene(scene, output, self.field_config, texts, source, mode)

    # -- per scene ---------------------------------------------------------

    def process_scene(self, scene: SceneSpec, out_dir: Optional[PathLike] = None) -> SceneOutcome:
        """
        Complete pipeline for a single scene.

        Scene-scoped failures are logged and recorded in the outcome; they
        never propagate.

        Args:
            scene: scene to process
            out_dir: run directory; scene files go to ``<out_dir>/scenes/<scene_id>/``

        Returns:
            SceneOutcome with one SceneReport per method
        """
        outcome = SceneOutcome(scene.scene_id, scene.category)
        scene_dir = Path(out_dir) / 'scenes' / scene.scene_id if out_dir is not None else None

        try:
            rendered = self.render(scene, outcome.steps)
            outcome.field_mass = rendered.plan.field.mass
            outcome.skipped_regions = list(rendered.plan.skipped_regions)

            for method, output in rendered.outputs.items():
                outcome.reports[method] = self.evaluate(
                    rendered.scene, output, rendered.source, rendered.edited)
            outcome.steps.append(('evaluate', 'success'))

            if scene_dir is not None:
                rendered.outputs[EFF].save(scene_dir / 'output.png')
                if SIMPLE_MASK in rendered.outputs:
                    rendered.outputs[SIMPLE_MASK].save(scene_dir / 'simple_mask.png')
                write_pfm(rendered.plan.field, scene_dir / 'field.pfm')
                write_heatmap(rendered.plan.field, scene_dir / 'field.png')
            outcome.status = 'success'
            log_scene_step(scene.scene_id, 'pipeline')

        except Exception as e:
            log_error_context(type(e).__name__, str(e), {
                'scene_id': scene.scene_id,
                'steps': outcome.steps,
            })
            log_scene_step(scene.scene_id, 'pipeline', 'error', str(e))
            outcome.status = 'error'
            outcome.error = f"{type(e).__name__}: {e}"
            outcome.reports = {
                m: SceneReport.failed(scene.scene_id, scene.category, outcome.error)
                for m in self.methods
            }

        if scene_dir is not None:
            write_json_report({
                "config": self.field_config.to_dict(),
                **outcome.to_dict(),
            }, scene_dir / 'report.json')
        return outcome


# ---------------------------------------------------------------------------
# Corpus drivers
# ---------------------------------------------------------------------------

def _map_scenes(fn: Callable, items: Sequence, jobs: int) -> List:
    """Ordered map with up to ``jobs`` worker threads."""
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _report_metadata(pipeline: EffPipeline) -> Dict[str, Any]:
    return {
        "found_rate_note": FOUND_RATE_NOTE,
        "ocr_mode": pipeline.ocr_backend.mode.value,
        "editor_mode": pipeline.editor_backend.mode.value,
        "resize_policy": pipeline.resize_policy.value,
    }


def run_corpus(scenes: Sequence[SceneSpec], pipeline: EffPipeline, out_dir: PathLike,
               jobs: int = 1, per_region: bool = False, weighting: Optional[str] = None) -> CorpusRun:
    """Run the pipeline over a corpus and write the run reports.

    Writes ``corpus_report.json``, ``corpus.csv`` and ``scenes.csv`` to
    ``out_dir`` plus per-scene directories. Report content is independent of
    job count and completion order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {len(scenes)} scenes with {jobs} job(s) into {out_dir}")

    outcomes = _map_scenes(lambda s: pipeline.process_scene(s, out_dir), list(scenes), jobs)

    by_method = {m: [o.reports[m] for o in outcomes] for m in pipeline.methods}
    corpora = {m: aggregate_corpus(reports, weighting=weighting) for m, reports in by_method.items()}
    run = CorpusRun(outcomes, corpora)

    write_json_report({
        "config": pipeline.field_config.to_dict(),
        "metadata": _report_metadata(pipeline),
        "methods": {m: c.to_dict() for m, c in corpora.items()},
        "errored_scenes": run.errored_scenes,
    }, out_dir / 'corpus_report.json')
    write_corpus_csv(corpora, out_dir / 'corpus.csv')
    write_scene_csv(by_method, out_dir / 'scenes.csv', per_region=per_region)

    for method, corpus in corpora.items():
        logger.info(f"{method}: spill_rate={corpus.overall.spill_rate} found_rate={corpus.overall.found_rate}")
    if run.partial:
        logger.warning(f"{len(run.errored_scenes)} scene(s) errored: {', '.join(run.errored_scenes)}")
    return run


@dataclass
class EvalRun:
    reports: List[SceneReport]
    missing: List[str]
    corpus: CorpusReport

    @property
    def partial(self) -> bool:
        return bool(self.missing) or any(r.errored for r in self.reports)


def find_output(outputs_dir: Path, scene_id: str) -> Optional[Path]:
    """``<scene_id>.png`` or ``<scene_id>/output.png`` under ``outputs_dir``."""
    for candidate in (outputs_dir / f"{scene_id}.png", outputs_dir / scene_id / 'output.png'):
        if candidate.is_file():
            return candidate
    return None


def evaluate_outputs(scenes: Sequence[SceneSpec], outputs_dir: PathLike, pipeline: EffPipeline,
                     out_dir: PathLike, jobs: int = 1, per_region: bool = False,
                     weighting: Optional[str] = None) -> EvalRun:
    """Standalone metric mode: score any method's outputs against the sources.

    Scenes without an output image are listed as missing and counted as
    errored; the run continues.
    """
    outputs_dir = Path(outputs_dir)
    out_dir = Path(out_dir)

    def score(scene: SceneSpec) -> SceneReport:
        path = find_output(outputs_dir, scene.scene_id)
        if path is None:
            logger.warning(f"[{scene.scene_id}] no output image in {outputs_dir}")
            return SceneReport.failed(scene.scene_id, scene.category, "missing output")
        try:
            source = scene.load_source()
            output = RasterImage.load(path)
            edited = RasterImage.load(scene.edited_ref) if scene.edited_ref is not None else None
            return pipeline.evaluate(scene, output, source, edited)
        except Exception as e:
            log_error_context(type(e).__name__, str(e), {'scene_id': scene.scene_id, 'output': str(path)})
            return SceneReport.failed(scene.scene_id, scene.category, f"{type(e).__name__}: {e}")

    reports = _map_scenes(score, list(scenes), jobs)
    missing = [r.scene_id for r in reports if r.error == "missing output"]
    corpus = aggregate_corpus(reports, weighting=weighting)

    write_json_report({
        "config": pipeline.field_config.to_dict(),
        "metadata": {**_report_metadata(pipeline), "outputs_dir": outputs_dir.as_posix()},
        "corpus": corpus.to_dict(),
        "missing_outputs": missing,
        "scenes": [r.to_dict() for r in reports],
    }, out_dir / 'eval_report.json')
    write_corpus_csv({'output': corpus}, out_dir / 'eval_corpus.csv')
    write_scene_csv({'output': reports}, out_dir / 'eval_scenes.csv', per_region=per_region)

    if missing:
        logger.warning(f"Missing outputs for {len(missing)} scene(s): {', '.join(missing)}")
    return EvalRun(reports, missing, corpus)


def export_field(scene: SceneSpec, field_config: FieldConfig, out_dir: PathLike,
                 profile_row: Optional[int] = None) -> Dict[str, Path]:
    """Write field.pfm, field.png and optionally profile.csv for one scene."""
    out_dir = Path(out_dir)
    source = scene.load_source()
    plan = plan_field(scene, field_config, source.width, source.height)
    log_field_stats(scene.scene_id, plan.field.weights)
    paths = {
        'pfm': write_pfm(plan.field, out_dir / 'field.pfm'),
        'heatmap': write_heatmap(plan.field, out_dir / 'field.png'),
    }
    if profile_row is not None:
        paths['profile'] = write_profile_csv(plan.field, profile_row, out_dir / 'profile.csv')
    return paths


# ---------------------------------------------------------------------------
# Re-aggregating an existing run
# ---------------------------------------------------------------------------

def load_run_reports(run_dir: PathLike) -> Tuple[FieldConfig, Dict[str, List[SceneReport]]]:
    """Read every ``scenes/<scene_id>/report.json`` of a finished run.

    Returns:
        The run's field configuration and the scene reports grouped by method

    Raises:
        ConfigError: no reports, an unreadable report, or mixed configurations
    """
    scenes_dir = Path(run_dir) / 'scenes'
    paths = sorted(scenes_dir.glob('*/report.json'))
    if not paths:
        raise ConfigError(f"no scene reports under {scenes_dir}")

    field_config: Optional[FieldConfig] = None
    by_method: Dict[str, List[SceneReport]] = {}
    for path in paths:
        try:
            document = json.loads(path.read_text(encoding='utf-8'))
            run_config = FieldConfig.from_dict(document['config'])
            reports = {m: SceneReport.from_dict(d) for m, d in document['methods'].items()}
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot read scene report {path}: {e}") from e
        if field_config is None:
            field_config = run_config
        elif run_config != field_config:
            raise ConfigError(f"{path}: run mixes field configurations")
        for method, report in reports.items():
            by_method.setdefault(method, []).append(report)
    return field_config, by_method


def summarize_run(run_dir: PathLike, out_dir: PathLike,
                  weighting: Optional[str] = None) -> Dict[str, CorpusReport]:
    """Aggregate a finished run's scene reports again without recomputing them.

    Writes ``summary_report.json`` and ``summary_corpus.csv`` to ``out_dir``.
    """
    field_config, by_method = load_run_reports(run_dir)
    corpora = {m: aggregate_corpus(reports, weighting=weighting) for m, reports in by_method.items()}
    out_dir = Path(out_dir)
    write_json_report({
        "config": field_config.to_dict(),
        "metadata": {"found_rate_note": FOUND_RATE_NOTE, "run_dir": Path(run_dir).as_posix()},
        "methods": {m: c.to_dict() for m, c in corpora.items()},
    }, out_dir / 'summary_report.json')
    write_corpus_csv(corpora, out_dir / 'summary_corpus.csv')
    logger.info(f"Summarized {len(next(iter(by_method.values())))} scene reports from {run_dir}")
    return corpora


# ---------------------------------------------------------------------------
# Parameter sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """Grid of (sigma, pad_core) values; other FieldConfig fields come from ``base``."""

    sigma_values: Tuple[float, ...]
    pad_core_values: Tuple[float, ...]
    base: FieldConfig = field(default_factory=FieldConfig)

    def __post_init__(self):
        object.__setattr__(self, 'sigma_values', tuple(float(v) for v in self.sigma_values))
        object.__setattr__(self, 'pad_core_values', tuple(float(v) for v in self.pad_core_values))
        if not self.sigma_values or not self.pad_core_values:
            raise ConfigError("sweep needs at least one sigma and one pad_core value")
        self.configs()  # raises ConfigError on an invalid cell

    def configs(self) -> List[FieldConfig]:
        """Cartesian product, sigma-major."""
        return [replace(self.base, sigma=s, pad_core=p)
                for s, p in itertools.product(self.sigma_values, self.pad_core_values)]


SWEEP_COLUMNS = ["schema_version", "sigma", "pad_core", "scene_count", "errored_count",
                 "found_rate", "spill_rate", "avg_region_psnr", "min_region_psnr", "bg_psnr",
                 "mean_field_mass"]


@dataclass(frozen=True)
class SweepRow:
    sigma: float
    pad_core: float
    corpus: CorpusReport
    mean_field_mass: Optional[float]

    def cells(self) -> List[Any]:
        row = self.corpus.overall
        return [config.REPORT_SCHEMA_VERSION, self.sigma, self.pad_core, row.scene_count,
                row.errored_count, row.found_rate, row.spill_rate, row.avg_region_psnr,
                row.min_region_psnr, row.bg_psnr, self.mean_field_mass]


def run_sweep(scenes: Sequence[SceneSpec], sweep: SweepSpec, pipeline: EffPipeline,
              out_dir: PathLike, jobs: int = 1, weighting: Optional[str] = None) -> List[SweepRow]:
    """Evaluate the EFF output over a (sigma, pad_core) grid; writes ``sweep.csv``.

    Each scene is parsed and edited once; only PLAN, BLEND and evaluation are
    repeated per cell.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def prepare(scene: SceneSpec):
        try:
            parsed, source = pipeline.parse(scene)
            return parsed, source, pipeline.edit(parsed, source), None
        except Exception as e:
            log_error_context(type(e).__name__, str(e), {'scene_id': scene.scene_id, 'stage': 'sweep'})
            return scene, None, None, f"{type(e).__name__}: {e}"

    prepared = _map_scenes(prepare, list(scenes), jobs)

    rows = []
    for cell in sweep.configs():
        cell_pipeline = pipeline.with_config(cell)

        def score(item, cell_pipeline=cell_pipeline) -> Tuple[SceneReport, Optional[float]]:
            scene, source, edited, error = item
            if error is not None:
                return SceneReport.failed(scene.scene_id, scene.category, error), None
            try:
                plan = cell_pipeline.plan(scene, source)
                output = blend(source, edited, plan.field, cell_pipeline.resize_policy)
                return cell_pipeline.evaluate(scene, output, source, edited), plan.field.mass
            except Exception as e:
                log_error_context(type(e).__name__, str(e), {'scene_id': scene.scene_id, 'cell': cell.to_dict()})
                return SceneReport.failed(scene.scene_id, scene.category, f"{type(e).__name__}: {e}"), None

        results = _map_scenes(score, prepared, jobs)
        masses = [m for _, m in results if m is not None]
        rows.append(SweepRow(
            sigma=cell.sigma,
            pad_core=cell.pad_core,
            corpus=aggregate_corpus([r for r, _ in results], weighting=weighting),
            mean_field_mass=math.fsum(masses) / len(masses) if masses else None,
        ))
        logger.info(f"Sweep cell sigma={cell.sigma} pad_core={cell.pad_core} done")

    with open(out_dir / 'sweep.csv', 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([format_cell(v) for v in row.cells()])
    return rows
