#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the cli.py command surface and its exit codes.
"""

import csv
import json
import shutil

import pytest
from click.testing import CliRunner

from cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, cli
from scene_model import load_manifest


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def corpus(runner, tmp_path):
    """Six-scene synthetic corpus written through the synth command."""
    result = runner.invoke(cli, ['--out-dir', str(tmp_path / 'corpus'), '--seed', '3',
                                 'synth', '--count', '6', '--regions', '3'])
    assert result.exit_code == EXIT_OK, result.output
    return tmp_path / 'corpus' / 'manifest.json'


class TestSynthAndRun:
    """Test suite for corpus generation and full runs."""

    def test_synth_then_run(self, runner, corpus, tmp_path):
        """Test that a generated corpus runs cleanly and writes its reports."""
        out = tmp_path / 'run'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(out), 'run'])
        assert result.exit_code == EXIT_OK, result.output
        assert 'eff' in result.output
        for name in ('corpus_report.json', 'corpus.csv', 'scenes.csv'):
            assert (out / name).is_file()

    def test_run_per_region_rows(self, runner, corpus, tmp_path):
        """Test that --per-region writes one row per region and method."""
        out = tmp_path / 'run'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(out),
                                     'run', '--per-region', '--no-ablation'])
        assert result.exit_code == EXIT_OK, result.output
        with open(out / 'scenes.csv', newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 6 * 2 * 2
        assert {r['method'] for r in rows} == {'baseline', 'eff'}

    def test_missing_edit_is_partial(self, runner, corpus, tmp_path):
        """Test exit code 1 when one scene errors."""
        scene = load_manifest(corpus)[2]
        scene.edited_ref.unlink()
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(tmp_path / 'run'), 'run'])
        assert result.exit_code == EXIT_PARTIAL

    def test_unknown_plan_rejected(self, runner, tmp_path):
        """Test that click rejects an unknown corruption plan."""
        result = runner.invoke(cli, ['--out-dir', str(tmp_path), 'synth', '--corrupt', 'most'])
        assert result.exit_code != EXIT_OK


class TestConfigErrors:
    """Test suite for configuration and manifest failures."""

    def test_no_manifest(self, runner, tmp_path):
        """Test exit code 2 without a manifest."""
        result = runner.invoke(cli, ['--manifest', '', '--out-dir', str(tmp_path), 'run'])
        assert result.exit_code == EXIT_CONFIG

    def test_malformed_manifest(self, runner, write_manifest, tmp_path):
        """Test exit code 2 on invalid manifest JSON."""
        path = write_manifest('{"scenes": [')
        result = runner.invoke(cli, ['--manifest', str(path), '--out-dir', str(tmp_path), 'run'])
        assert result.exit_code == EXIT_CONFIG
        assert 'invalid JSON' in result.output

    def test_external_ocr_without_command(self, runner, corpus, tmp_path):
        """Test exit code 2 for external OCR without a command."""
        result = runner.invoke(cli, ['--manifest', str(corpus), '--ocr-mode', 'external',
                                     '--out-dir', str(tmp_path), 'run'])
        assert result.exit_code == EXIT_CONFIG

    def test_invalid_parameter(self, runner, corpus, tmp_path):
        """Test exit code 2 for a non-positive sigma."""
        result = runner.invoke(cli, ['--manifest', str(corpus), '--sigma', '0',
                                     '--out-dir', str(tmp_path), 'run'])
        assert result.exit_code == EXIT_CONFIG

    def test_unknown_scene(self, runner, corpus, tmp_path):
        """Test exit code 2 for a scene id not in the manifest."""
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(tmp_path),
                                     'field', '--scene-id', 'nope'])
        assert result.exit_code == EXIT_CONFIG


class TestFieldBlendEval:
    """Test suite for field export, blending and standalone evaluation."""

    def test_field_with_profile(self, runner, corpus, tmp_path):
        """Test field export of one scene with a cross-section."""
        out = tmp_path / 'out'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(out),
                                     'field', '--scene-id', 'synth_0001', '--profile-row', '100'])
        assert result.exit_code == EXIT_OK, result.output
        scene_dir = out / 'fields' / 'synth_0001'
        for name in ('field.pfm', 'field.png', 'profile.csv'):
            assert (scene_dir / name).is_file()

    def test_blend_then_eval(self, runner, corpus, tmp_path):
        """Test that blended outputs evaluate with zero spillover."""
        out = tmp_path / 'out'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(out), 'blend'])
        assert result.exit_code == EXIT_OK, result.output
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(tmp_path / 'eval'),
                                     'eval', '--outputs-dir', str(out / 'outputs')])
        assert result.exit_code == EXIT_OK, result.output
        report = json.loads((tmp_path / 'eval' / 'eval_report.json').read_text())
        assert report['corpus']['overall']['spill_rate'] == 0.0

    def test_eval_missing_outputs(self, runner, corpus, tmp_path):
        """Test exit code 1 and a listing when outputs are missing."""
        outputs = tmp_path / 'outputs'
        outputs.mkdir()
        scene = load_manifest(corpus)[0]
        shutil.copy(scene.source_ref, outputs / f"{scene.scene_id}.png")
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(tmp_path / 'eval'),
                                     'eval', '--outputs-dir', str(outputs)])
        assert result.exit_code == EXIT_PARTIAL
        assert 'missing output: synth_0005' in result.output


class TestSummarize:
    """Test suite for re-aggregating an earlier run."""

    def test_run_then_summarize(self, runner, corpus, tmp_path):
        """Test that summarize reproduces the run's corpus numbers from its scene reports."""
        run_dir = tmp_path / 'run'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(run_dir), 'run'])
        assert result.exit_code == EXIT_OK, result.output

        out = tmp_path / 'summary'
        result = runner.invoke(cli, ['--out-dir', str(out), 'summarize', '--run-dir', str(run_dir)])
        assert result.exit_code == EXIT_OK, result.output
        summary = json.loads((out / 'summary_report.json').read_text(encoding='utf-8'))
        original = json.loads((run_dir / 'corpus_report.json').read_text(encoding='utf-8'))
        for method in ('eff', 'baseline'):
            got = summary['methods'][method]['overall']
            want = original['methods'][method]['overall']
            assert got['scene_count'] == want['scene_count'] == 6
            assert got['flagged_count'] == want['flagged_count']
            assert got['spill_rate'] == pytest.approx(want['spill_rate'])
        assert summary['config'] == original['config']
        assert (out / 'summary_corpus.csv').is_file()

    def test_summarize_partial_run(self, runner, corpus, tmp_path):
        """Test exit code 1 when the summarized run had an errored scene."""
        load_manifest(corpus)[1].edited_ref.unlink()
        run_dir = tmp_path / 'run'
        runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(run_dir), 'run'])
        result = runner.invoke(cli, ['--out-dir', str(tmp_path / 'summary'),
                                     'summarize', '--run-dir', str(run_dir)])
        assert result.exit_code == EXIT_PARTIAL

    def test_summarize_empty_dir(self, runner, tmp_path):
        """Test exit code 2 when the directory holds no scene reports."""
        (tmp_path / 'empty').mkdir()
        result = runner.invoke(cli, ['--out-dir', str(tmp_path / 'summary'),
                                     'summarize', '--run-dir', str(tmp_path / 'empty')])
        assert result.exit_code == EXIT_CONFIG


class TestSweepAndStatus:
    """Test suite for sweeps and the status command."""

    def test_sweep_writes_grid(self, runner, corpus, tmp_path):
        """Test a 2x2 sweep writes four rows."""
        out = tmp_path / 'sweep'
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(out), 'sweep',
                                     '--sigma-values', '0.06,0.12', '--pad-core-values', '5,15'])
        assert result.exit_code == EXIT_OK, result.output
        with open(out / 'sweep.csv', newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        assert [(float(r['sigma']), float(r['pad_core'])) for r in rows] == [
            (0.06, 5.0), (0.06, 15.0), (0.12, 5.0), (0.12, 15.0)]

    def test_sweep_bad_values(self, runner, corpus, tmp_path):
        """Test that non-numeric sweep values are rejected."""
        result = runner.invoke(cli, ['--manifest', str(corpus), '--out-dir', str(tmp_path),
                                     'sweep', '--sigma-values', 'a,b'])
        assert result.exit_code != EXIT_OK

    def test_status(self, runner):
        """Test that status prints backend readiness as JSON."""
        result = runner.invoke(cli, ['status'])
        assert result.exit_code == EXIT_OK
        status = json.loads(result.output)
        assert 'ocr_mode' in status
        assert 'field_defaults' in status
