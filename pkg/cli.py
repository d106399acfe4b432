"""Command-line entry point for the EFF toolkit.

    python cli.py --manifest scenes/manifest.json run
    python cli.py --manifest scenes/manifest.json eval --outputs-dir other_method/
    python cli.py --manifest scenes/manifest.json sweep --sigma-values 0.06,0.12,0.24
    python cli.py --out-dir summary summarize --run-dir runs/latest --weighting scene
    python cli.py --out-dir corpus synth --count 50 --corrupt all

Exit codes: 0 success, 1 partial (scenes errored or outputs missing),
2 configuration or manifest error.
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import click
import colorama

import config
from adapters import EditorBackend, EditorMode, OcrBackend
from blender import ResizePolicy
from debug_logging import get_logger, setup_debug_logger
from harness import (EffPipeline, SweepSpec, evaluate_outputs, export_field, run_corpus, run_sweep,
                     summarize_run)
from scene_model import ConfigError, FieldConfig, ManifestError, OcrMode, SceneSpec, load_manifest
from synthetic_scenes import PLAN_KINDS, SyntheticSceneError, generate_corpus

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


@dataclass
class Settings:
    manifest: Optional[str]
    out_dir: Path
    jobs: int
    seed: int
    field_config: FieldConfig
    ocr_backend: OcrBackend
    editor_backend: EditorBackend
    resize_policy: ResizePolicy

    def scenes(self, scene_id: Optional[str] = None) -> List[SceneSpec]:
        if not self.manifest:
            raise ConfigError("no manifest given (use --manifest or EFF_MANIFEST)")
        scenes = load_manifest(self.manifest)
        if scene_id is not None:
            scenes = [s for s in scenes if s.scene_id == scene_id]
            if not scenes:
                raise ConfigError(f"scene {scene_id!r} not in manifest {self.manifest}")
        return scenes

    def pipeline(self, ablation: bool = True) -> EffPipeline:
        return EffPipeline(self.field_config, self.ocr_backend, self.editor_backend,
                           self.resize_policy, ablation)


def _fail(message: str):
    click.echo(click.style(f"Error: {message}", fg='red'), err=True)
    sys.exit(EXIT_CONFIG)


def _float_list(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def _finish(partial: bool, what: str):
    if partial:
        click.echo(click.style(f"{what} finished with errors", fg='yellow'))
        sys.exit(EXIT_PARTIAL)
    click.echo(click.style(f"{what} finished", fg='green'))


@click.group()
@click.option('--manifest', default=config.MANIFEST, help='Scene manifest JSON [EFF_MANIFEST]')
@click.option('--out-dir', default=config.OUT_DIR, show_default=True, type=click.Path(file_okay=False),
              help='Output directory [EFF_OUT_DIR]')
@click.option('--jobs', default=config.JOBS, show_default=True, type=int, help='Parallel scenes [EFF_JOBS]')
@click.option('--seed', default=config.SEED, show_default=True, type=int, help='Synthetic corpus seed [EFF_SEED]')
@click.option('--log-level', default=config.LOG_LEVEL, show_default=True, help='[EFF_LOG_LEVEL]')
@click.option('--sigma', default=config.SIGMA, show_default=True, type=float,
              help='Decay width as a fraction of the image diagonal [EFF_SIGMA]')
@click.option('--pad-core', default=config.PAD_CORE, show_default=True, type=float,
              help='Target padding in pixels [EFF_PAD_CORE]')
@click.option('--pad-protect', default=config.PAD_PROTECT, show_default=True, type=float,
              help='Protected-zone padding in pixels [EFF_PAD_PROTECT]')
@click.option('--smooth-sigma', default=config.SMOOTH_SIGMA, show_default=True, type=float,
              help='Gaussian smoothing sigma in pixels [EFF_SMOOTH_SIGMA]')
@click.option('--sim-threshold', default=config.SIM_THRESHOLD, show_default=True, type=float,
              help='[EFF_SIM_THRESHOLD]')
@click.option('--psnr-threshold', default=config.PSNR_THRESHOLD, show_default=True, type=float,
              help='[EFF_PSNR_THRESHOLD]')
@click.option('--psnr-cap', default=config.PSNR_CAP, show_default=True, type=float, help='[EFF_PSNR_CAP]')
@click.option('--resize', default=config.RESIZE_POLICY, show_default=True,
              type=click.Choice([p.value for p in ResizePolicy]), help='[EFF_RESIZE]')
@click.option('--ocr-mode', default=config.OCR_MODE, show_default=True,
              type=click.Choice([m.value for m in OcrMode]), help='[EFF_OCR_MODE]')
@click.option('--ocr-cmd', default=config.OCR_CMD, help='External OCR command [EFF_OCR_CMD]')
@click.option('--editor-mode', default=config.EDITOR_MODE, show_default=True,
              type=click.Choice([m.value for m in EditorMode]), help='[EFF_EDITOR_MODE]')
@click.option('--editor-cmd', default=config.EDITOR_CMD, help='External editor command [EFF_EDITOR_CMD]')
@click.pass_context
def cli(ctx, manifest, out_dir, jobs, seed, log_level, sigma, pad_core, pad_protect, smooth_sigma,
        sim_threshold, psnr_threshold, psnr_cap, resize, ocr_mode, ocr_cmd, editor_mode, editor_cmd):
    """Edit Fidelity Field toolkit: build fields, blend edits, measure spillover."""
    setup_debug_logger(log_level)
    if jobs < 1:
        _fail(f"--jobs must be >= 1, got {jobs}")
    try:
        ctx.obj = Settings(
            manifest=manifest,
            out_dir=Path(out_dir),
            jobs=jobs,
            seed=seed,
            field_config=FieldConfig(sigma, pad_core, pad_protect, smooth_sigma,
                                     sim_threshold, psnr_threshold, psnr_cap),
            ocr_backend=OcrBackend(ocr_mode, ocr_cmd, config.ADAPTER_TIMEOUT, config.OCR_CONFIDENCE_FLOOR),
            editor_backend=EditorBackend(editor_mode, editor_cmd, config.ADAPTER_TIMEOUT),
            resize_policy=ResizePolicy(resize),
        )
    except ConfigError as e:
        _fail(str(e))


@cli.command()
@click.option('--scene-id', default=None, help='Only this scene (default: every scene)')
@click.option('--profile-row', default=None, type=int, help='Also write a cross-section CSV at this row')
@click.pass_obj
def field(settings: Settings, scene_id, profile_row):
    """Export the fidelity field (PFM, heatmap PNG, profile CSV)."""
    try:
        scenes = settings.scenes(scene_id)
    except (ConfigError, ManifestError) as e:
        _fail(str(e))

    failed = []
    for scene in scenes:
        scene_dir = settings.out_dir / 'fields' / scene.scene_id
        try:
            paths = export_field(scene, settings.field_config, scene_dir, profile_row)
            click.echo(f"{scene.scene_id}: {', '.join(str(p) for p in paths.values())}")
        except Exception as e:
            logger.error(f"[{scene.scene_id}] field export failed: {e}")
            failed.append(scene.scene_id)
    _finish(bool(failed), 'field export')


@cli.command(name='blend')
@click.option('--scene-id', default=None, help='Only this scene (default: every scene)')
@click.pass_obj
def blend_cmd(settings: Settings, scene_id):
    """Run PARSE, PLAN, EDIT and BLEND and write the blended outputs."""
    try:
        scenes = settings.scenes(scene_id)
    except (ConfigError, ManifestError) as e:
        _fail(str(e))

    pipeline = settings.pipeline(ablation=False)
    failed = []
    for scene in scenes:
        try:
            rendered = pipeline.render(scene)
            path = rendered.outputs['eff'].save(settings.out_dir / 'outputs' / f"{scene.scene_id}.png")
            click.echo(f"{scene.scene_id}: {path}")
        except Exception as e:
            logger.error(f"[{scene.scene_id}] blend failed: {e}")
            failed.append(scene.scene_id)
    _finish(bool(failed), 'blend')


@cli.command()
@click.option('--no-ablation', is_flag=True, help='Skip the simple_mask comparison')
@click.option('--per-region', is_flag=True, help='Write per-region rows to scenes.csv')
@click.option('--weighting', default=config.SPILL_WEIGHTING, show_default=True,
              type=click.Choice(['region', 'scene']), help='Corpus spill-rate weighting [EFF_SPILL_WEIGHTING]')
@click.pass_obj
def run(settings: Settings, no_ablation, per_region, weighting):
    """Run the full pipeline and evaluate baseline and blended outputs."""
    try:
        scenes = settings.scenes()
    except (ConfigError, ManifestError) as e:
        _fail(str(e))

    result = run_corpus(scenes, settings.pipeline(ablation=not no_ablation), settings.out_dir,
                        jobs=settings.jobs, per_region=per_region, weighting=weighting)
    for method, corpus in result.corpora.items():
        row = corpus.overall
        click.echo(f"{method:12s} spill_rate={row.spill_rate} found_rate={row.found_rate} "
                   f"avg_region_psnr={row.avg_region_psnr}")
    _finish(result.partial, 'run')


@cli.command(name='eval')
@click.option('--outputs-dir', required=True, type=click.Path(file_okay=False),
              help='Directory with <scene_id>.png or <scene_id>/output.png per scene')
@click.option('--per-region', is_flag=True, help='Write per-region rows')
@click.option('--weighting', default=config.SPILL_WEIGHTING, show_default=True,
              type=click.Choice(['region', 'scene']))
@click.pass_obj
def eval_cmd(settings: Settings, outputs_dir, per_region, weighting):
    """Score existing output images against their sources."""
    try:
        scenes = settings.scenes()
    except (ConfigError, ManifestError) as e:
        _fail(str(e))

    result = evaluate_outputs(scenes, outputs_dir, settings.pipeline(), settings.out_dir,
                              jobs=settings.jobs, per_region=per_region, weighting=weighting)
    row = result.corpus.overall
    click.echo(f"spill_rate={row.spill_rate} found_rate={row.found_rate} avg_region_psnr={row.avg_region_psnr}")
    for scene_id in result.missing:
        click.echo(click.style(f"missing output: {scene_id}", fg='yellow'))
    _finish(result.partial, 'eval')


@cli.command()
@click.option('--run-dir', required=True, type=click.Path(file_okay=False),
              help='Directory of an earlier run (holds scenes/<scene_id>/report.json)')
@click.option('--weighting', default=config.SPILL_WEIGHTING, show_default=True,
              type=click.Choice(['region', 'scene']))
@click.pass_obj
def summarize(settings: Settings, run_dir, weighting):
    """Re-aggregate the scene reports of an earlier run."""
    try:
        corpora = summarize_run(run_dir, settings.out_dir, weighting=weighting)
    except ConfigError as e:
        _fail(str(e))

    for method, corpus in corpora.items():
        row = corpus.overall
        click.echo(f"{method:12s} spill_rate={row.spill_rate} found_rate={row.found_rate} "
                   f"scenes={row.scene_count}")
    _finish(any(c.overall.errored_count for c in corpora.values()), 'summarize')


@cli.command()
@click.option('--sigma-values', callback=_float_list, default=None,
              help='Comma-separated sigma values (default: --sigma)')
@click.option('--pad-core-values', callback=_float_list, default=None,
              help='Comma-separated pad_core values (default: --pad-core)')
@click.pass_obj
def sweep(settings: Settings, sigma_values, pad_core_values):
    """Sweep sigma x pad_core and write sweep.csv."""
    try:
        scenes = settings.scenes()
        spec = SweepSpec(
            sigma_values=sigma_values or [settings.field_config.sigma],
            pad_core_values=pad_core_values or [settings.field_config.pad_core],
            base=settings.field_config,
        )
    except (ConfigError, ManifestError) as e:
        _fail(str(e))

    rows = run_sweep(scenes, spec, settings.pipeline(ablation=False), settings.out_dir, jobs=settings.jobs)
    click.echo(f"{len(rows)} sweep cells written to {settings.out_dir / 'sweep.csv'}")
    _finish(any(r.corpus.overall.errored_count for r in rows), 'sweep')


@cli.command()
@click.option('--count', default=50, show_default=True, type=int, help='Number of scenes')
@click.option('--regions', default=4, show_default=True, type=int, help='Regions per scene')
@click.option('--corrupt', default='all', show_default=True, type=click.Choice(PLAN_KINDS),
              help='Which non-target regions the synthetic editor corrupts')
@click.option('--width', default=320, show_default=True, type=int)
@click.option('--height', default=240, show_default=True, type=int)
@click.pass_obj
def synth(settings: Settings, count, regions, corrupt, width, height):
    """Generate a seeded synthetic corpus with a manifest."""
    try:
        manifest = generate_corpus(count, settings.seed, settings.out_dir, regions, corrupt, width, height)
    except SyntheticSceneError as e:
        _fail(str(e))
    click.echo(f"manifest: {manifest}")


@cli.command()
def status():
    """Show backend readiness and active defaults."""
    click.echo(json.dumps(config.get_config_status(), indent=2))


def main():
    colorama.just_fix_windows_console()
    cli()


if __name__ == '__main__':
    main()
