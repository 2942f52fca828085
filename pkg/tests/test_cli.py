#!/usr/bin/env python3
"""
Тесты командной строки: коды выхода и прогоны конвейера на синтетике.
tests/test_cli.py
"""
import json
import os
import sys

import pandas as pd
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from main import cli
from storage.checkpoint_store import load_checkpoint
from storage.jsonl_store import load_predictions, load_tubes

SMALL_CORPUS = ['--positive', '2', '--negative', '2', '--frames', '120', '--objects', '2',
                '--anomaly-length', '40', '--dim', '8', '--segments', '4', '--seed', '3']


def _synth(out_dir) -> None:
    assert cli(['synth', '--out', str(out_dir)] + SMALL_CORPUS) == 0


def _tubes(out_dir) -> None:
    assert cli(['tubes', '--det', str(out_dir / 'det.jsonl'), '--out', str(out_dir / 'tubes.jsonl')]) == 0


def _extract(out_dir) -> None:
    assert cli(['extract', '--scene', str(out_dir / 'scene.json'), '--tubes', str(out_dir / 'tubes.jsonl'),
                '--out', str(out_dir / 'features.bin')]) == 0


def _bag_args(out_dir):
    return ['--tubes', str(out_dir / 'tubes.jsonl'), '--features', str(out_dir / 'features.bin'),
            '--gt', str(out_dir / 'gt.jsonl')]


# --- Коды выхода ---

def test_eval_without_checkpoint_is_usage_error(tmp_path):
    assert cli(['eval', '--out', str(tmp_path / 'report.json')]) == 1


def test_unknown_flag_is_usage_error():
    assert cli(['tubes', '--bogus']) == 1


def test_unknown_command_is_usage_error():
    assert cli(['dance']) == 1
    assert cli([]) == 1


def test_missing_input_file_is_usage_error(tmp_path):
    assert cli(['tubes', '--det', str(tmp_path / 'absent.jsonl'), '--out', str(tmp_path / 't.jsonl')]) == 1


def test_bad_config_file_is_usage_error(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'train': {'nonsense': 1}}), encoding='utf-8')
    assert cli(['gradcheck', '--config', str(path), '--seeds', '1']) == 1


def test_malformed_detections_is_data_error(tmp_path):
    det = tmp_path / 'det.jsonl'
    det.write_text('{"video_id": "v", "frame": 0}\n', encoding='utf-8')
    assert cli(['tubes', '--det', str(det), '--out', str(tmp_path / 'tubes.jsonl')]) == 2


def test_invalid_synth_parameters(tmp_path):
    assert cli(['synth', '--out', str(tmp_path), '--objects', '0']) == 1


def test_gradcheck_command(capsys):
    assert cli(['gradcheck', '--seeds', '2', '--seed', '0']) == 0
    assert 'GRADCHECK' in capsys.readouterr().out


def test_help_exits_cleanly():
    assert cli(['--help']) == 0


# --- Конвейер на маленьком корпусе ---

def test_synth_is_deterministic(tmp_path):
    _synth(tmp_path / 'a')
    _synth(tmp_path / 'b')
    for name in ('det.jsonl', 'gt.jsonl', 'scene.json'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_synth_then_tubes(tmp_path):
    _synth(tmp_path)
    _tubes(tmp_path)
    tubes = load_tubes(tmp_path / 'tubes.jsonl')
    assert any(t.video_id.startswith('pos') for t in tubes)
    assert all(len(t) >= 50 for t in tubes)


def test_tubes_do_not_depend_on_threads(tmp_path):
    _synth(tmp_path)
    for threads in ('1', '3'):
        assert cli(['tubes', '--det', str(tmp_path / 'det.jsonl'), '--threads', threads,
                    '--out', str(tmp_path / f"tubes{threads}.jsonl")]) == 0
    assert (tmp_path / 'tubes1.jsonl').read_bytes() == (tmp_path / 'tubes3.jsonl').read_bytes()


def test_small_pipeline(tmp_path):
    _synth(tmp_path)
    _tubes(tmp_path)
    _extract(tmp_path)
    ckpt = tmp_path / 'model.ckpt'
    assert cli(['train'] + _bag_args(tmp_path) + [
        '--iterations', '3', '--heads', '2', '--hidden1', '8', '--hidden2', '4',
        '--batch-positive', '1', '--batch-negative', '1', '--out', str(ckpt)]) == 0
    assert ckpt.exists()
    trace = pd.read_csv(tmp_path / 'model.loss.csv')
    assert len(trace) == 6

    pred = tmp_path / 'pred.jsonl'
    assert cli(['infer'] + _bag_args(tmp_path) + ['--checkpoint', str(ckpt), '--out', str(pred)]) == 0
    predictions = load_predictions(pred)
    assert sorted(p.video_id for p in predictions) == ['neg001', 'pos001']
    assert all(p.localized and 0.0 < p.score < 1.0 for p in predictions)

    report_path = tmp_path / 'report.json'
    assert cli(['eval'] + _bag_args(tmp_path) + [
        '--checkpoint', str(ckpt), '--det', str(tmp_path / 'det.jsonl'), '--baseline',
        '--csv', str(tmp_path / 'report.csv'), '--out', str(report_path)]) == 0
    report = json.loads(report_path.read_text(encoding='utf-8'))
    assert 0.0 <= report['vauc'] <= 1.0
    assert set(report['iou_at']) == {'0.1', '0.2', '0.3'}
    assert report['baseline'] is not None
    assert report['frame_auc'] is not None
    assert len(pd.read_csv(tmp_path / 'report.csv')) == 2


@pytest.mark.parametrize('flags, parts', [([], 5), (['--m', '3'], 3), (['--whole-tubes'], 1)])
def test_train_records_tube_parts(tmp_path, flags, parts):
    _synth(tmp_path)
    _tubes(tmp_path)
    _extract(tmp_path)
    ckpt = tmp_path / 'model.ckpt'
    assert cli(['train'] + _bag_args(tmp_path) + flags + [
        '--iterations', '1', '--heads', '1', '--hidden1', '4', '--hidden2', '2',
        '--batch-positive', '1', '--batch-negative', '1', '--out', str(ckpt)]) == 0
    assert load_checkpoint(ckpt).extra['tube_parts'] == parts


# --- Приемочный прогон ---

def _full_run(run_dir, monkeypatch, synth_args=()) -> bytes:
    run_dir.mkdir()
    monkeypatch.chdir(run_dir)
    bags = ['--tubes', 'tubes.jsonl', '--features', 'features.bin', '--gt', 'gt.jsonl']
    assert cli(['synth', '--out', '.', '--seed', '7'] + list(synth_args)) == 0
    assert cli(['tubes', '--det', 'det.jsonl', '--out', 'tubes.jsonl']) == 0
    assert cli(['extract', '--scene', 'scene.json', '--tubes', 'tubes.jsonl', '--out', 'features.bin']) == 0
    assert cli(['train'] + bags + ['--seed', '7', '--out', 'model.ckpt']) == 0
    assert cli(['eval'] + bags + ['--checkpoint', 'model.ckpt', '--det', 'det.jsonl', '--seed', '7',
                                  '--out', 'report.json']) == 0
    return (run_dir / 'report.json').read_bytes()


@pytest.mark.slow
def test_planted_anomaly_benchmark(tmp_path, monkeypatch):
    first = _full_run(tmp_path / 'first', monkeypatch)
    report = json.loads(first)
    assert report['vauc'] >= 0.95
    assert report['miou'] >= 0.5
    assert report['false_alarm_rate'] <= 0.1
    assert report['unlocalized'] == []

    second = _full_run(tmp_path / 'second', monkeypatch)
    assert first == second


@pytest.mark.slow
def test_without_planted_shift_video_auc_is_chance(tmp_path, monkeypatch):
    report = json.loads(_full_run(tmp_path / 'null', monkeypatch, ['--delta', '0']))
    assert 0.35 <= report['vauc'] <= 0.65
