#!/usr/bin/env python3
"""
Тесты файловых форматов: JSON Lines, признаки STFV, контрольные точки STCK, отчет.
tests/test_storage.py
"""
import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from evaluation.report import EvalReport, VideoResult, export_csv, load_report, save_report
from network.relation_net import PARAM_KEYS, BranchNet
from storage.checkpoint_store import Checkpoint, load_checkpoint, save_checkpoint
from storage.feature_store import FeatureStore
from storage.jsonl_store import (
    load_detections, load_ground_truth, load_predictions, load_tubes, save_detections, save_ground_truth,
    save_predictions, save_tubes,
)
from storage.models import GroundTruthRecord, VideoPrediction
from tubes.builder import Tube, TubeEntry
from tubes.geometry import Box, ScoredBox
from utils.exceptions import DataFormatError, MissingFeatureError


def _tube(tube_id: str = 'v:u0000', kind: str = 'unary') -> Tube:
    entries = [TubeEntry(f, Box(f, 1.5, f + 10, 20.25)) for f in range(3, 7)]
    return Tube(tube_id, 'v', kind, 'car' if kind == 'unary' else None, entries)


# --- JSON Lines ---

def test_detections_round_trip_sorted(tmp_path):
    dets = [
        ScoredBox(Box(0, 0, 5, 5), 0.9, 'car', 2, 'b'),
        ScoredBox(Box(1, 1, 4, 4), 0.5, 'person', 1, 'a'),
        ScoredBox(Box(2, 2, 3, 3), 0.7, 'car', 0, 'b'),
    ]
    path = tmp_path / 'det.jsonl'
    assert save_detections(path, dets) == 3
    loaded = load_detections(path)
    assert loaded == sorted(dets, key=lambda d: (d.video_id, d.frame))


def test_malformed_detection_reports_line(tmp_path):
    path = tmp_path / 'det.jsonl'
    good = {'video_id': 'v', 'frame': 0, 'bbox': [0, 0, 1, 1], 'score': 0.5, 'category': 'car'}
    path.write_text(json.dumps(good) + '\n' + '{"video_id": "v", "frame": 1}\n', encoding='utf-8')
    with pytest.raises(DataFormatError) as excinfo:
        load_detections(path)
    assert excinfo.value.line == 2
    assert ':2:' in str(excinfo.value)


@pytest.mark.parametrize('record', [
    {'video_id': 'v', 'frame': 1.5, 'bbox': [0, 0, 1, 1], 'score': 0.5, 'category': 'car'},
    {'video_id': 'v', 'frame': 1, 'bbox': [0, 0, 1], 'score': 0.5, 'category': 'car'},
    {'video_id': 'v', 'frame': 1, 'bbox': [0, 0, 1, 1], 'score': 1.5, 'category': 'car'},
    {'video_id': 'v', 'frame': 1, 'bbox': [5, 0, 1, 1], 'score': 0.5, 'category': 'car'},
])
def test_invalid_detection_fields(tmp_path, record):
    path = tmp_path / 'det.jsonl'
    path.write_text(json.dumps(record) + '\n', encoding='utf-8')
    with pytest.raises(DataFormatError):
        load_detections(path)


def test_not_json_line(tmp_path):
    path = tmp_path / 'det.jsonl'
    path.write_text('not json\n', encoding='utf-8')
    with pytest.raises(DataFormatError):
        load_detections(path)


def test_invalid_utf8_reports_line(tmp_path):
    path = tmp_path / 'det.jsonl'
    good = {'video_id': 'v', 'frame': 0, 'bbox': [0, 0, 1, 1], 'score': 0.5, 'category': 'car'}
    path.write_bytes(json.dumps(good).encode('utf-8') + b'\n'
                     + b'{"video_id": "v\xff", "frame": 1, "bbox": [0, 0, 1, 1], "score": 0.5, "category": "car"}\n')
    with pytest.raises(DataFormatError) as excinfo:
        load_detections(path)
    assert excinfo.value.line == 2
    assert ':2:' in str(excinfo.value)


def test_crlf_lines_are_accepted(tmp_path):
    path = tmp_path / 'det.jsonl'
    good = {'video_id': 'v', 'frame': 0, 'bbox': [0, 0, 1, 1], 'score': 0.5, 'category': 'car'}
    path.write_bytes(json.dumps(good).encode('utf-8') + b'\r\n\r\n')
    assert len(load_detections(path)) == 1


def test_tubes_round_trip(tmp_path):
    tubes = [_tube('v:u0000'), _tube('v:m0000', 'multivariate')]
    path = tmp_path / 'tubes.jsonl'
    save_tubes(path, tubes)
    loaded = load_tubes(path)
    assert [t.to_record() for t in loaded] == [t.to_record() for t in tubes]


def test_ground_truth_round_trip(tmp_path):
    records = [
        GroundTruthRecord('a', 'abnormal', _tube().entries, {3, 4, 5, 6}, 10, 'test'),
        GroundTruthRecord('n', 'normal', [], set(), 10, 'train'),
    ]
    path = tmp_path / 'gt.jsonl'
    save_ground_truth(path, records)
    assert load_ground_truth(path) == records


def test_ground_truth_duplicates_rejected(tmp_path):
    path = tmp_path / 'gt.jsonl'
    record = GroundTruthRecord('a', 'normal')
    save_ground_truth(path, [record, record])
    with pytest.raises(DataFormatError):
        load_ground_truth(path)


def test_predictions_round_trip(tmp_path):
    predictions = [
        VideoPrediction('a', 0.75, 'a:u0001', 2, _tube().entries),
        VideoPrediction('b', 0.0),
    ]
    path = tmp_path / 'pred.jsonl'
    save_predictions(path, predictions)
    assert load_predictions(path) == predictions


# --- Признаки ---

def test_feature_store_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    store = FeatureStore(3)
    store.add('t@region', rng.normal(size=(2, 3)), 'region', 'v', (0, 20))
    store.add('v:v000', rng.normal(size=(1, 3)), 'videolet', 'v', (0, 5))
    path = tmp_path / 'features.bin'
    store.save(path)

    loaded = FeatureStore.load(path)
    assert loaded.dim == 3
    assert loaded.index == store.index
    for key in store.index:
        assert np.array_equal(loaded.rows(key), store.rows(key))
    assert np.array_equal(store.rows('v:v000'), store.rows('v:v000').astype(np.float32).astype(np.float64))


def test_feature_file_header(tmp_path):
    store = FeatureStore(2)
    store.add('x', np.ones((3, 2)), 'videolet', 'v', (0, 3))
    path = tmp_path / 'f.bin'
    store.save(path)
    raw = path.read_bytes()
    assert raw[:4] == b'STFV'
    assert int.from_bytes(raw[4:8], 'little') == 1
    assert int.from_bytes(raw[8:12], 'little') == 2
    assert int.from_bytes(raw[12:20], 'little') == 3
    assert len(raw) == 20 + 3 * 2 * 4


def test_feature_file_bad_magic(tmp_path):
    store = FeatureStore(2)
    store.add('x', np.ones((1, 2)), 'videolet', 'v', (0, 1))
    path = tmp_path / 'f.bin'
    store.save(path)
    path.write_bytes(b'XXXX' + path.read_bytes()[4:])
    with pytest.raises(DataFormatError):
        FeatureStore.load(path)


def test_feature_file_truncated(tmp_path):
    store = FeatureStore(2)
    store.add('x', np.ones((2, 2)), 'videolet', 'v', (0, 1))
    path = tmp_path / 'f.bin'
    store.save(path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataFormatError):
        FeatureStore.load(path)


def test_feature_store_validation():
    store = FeatureStore(2)
    with pytest.raises(ValueError):
        store.add('x', np.ones((1, 3)), 'videolet', 'v', (0, 1))
    with pytest.raises(ValueError):
        store.add('x', np.array([[np.inf, 0.0]]), 'videolet', 'v', (0, 1))
    store.add('x', np.ones((1, 2)), 'videolet', 'v', (0, 1))
    with pytest.raises(ValueError):
        store.add('x', np.ones((1, 2)), 'videolet', 'v', (0, 1))
    with pytest.raises(MissingFeatureError):
        store.rows('y')


def test_videolet_ids_sorted_by_time():
    store = FeatureStore(1)
    store.add('v:v001', np.ones((1, 1)), 'videolet', 'v', (5, 10))
    store.add('v:v000', np.ones((1, 1)), 'videolet', 'v', (0, 5))
    store.add('w:v000', np.ones((1, 1)), 'videolet', 'w', (0, 5))
    assert store.videolet_ids('v') == ['v:v000', 'v:v001']


# --- Контрольные точки ---

def _nets(seed: int = 0):
    rng = np.random.default_rng(seed)
    return {name: BranchNet.initialize(name, 4, rng, heads=2, hidden1=5, hidden2=3, dropout=0.25)
            for name in ('tube', 'temporal')}


def test_checkpoint_round_trip(tmp_path):
    checkpoint = Checkpoint(_nets(), seed=7, iteration=12, extra={'loss_mode': 'ce', 'dim': 4})
    path = tmp_path / 'model.ckpt'
    save_checkpoint(path, checkpoint)
    loaded = load_checkpoint(path)
    assert (loaded.seed, loaded.iteration, loaded.extra) == (7, 12, {'loss_mode': 'ce', 'dim': 4})
    for name, net in checkpoint.nets.items():
        other = loaded.nets[name]
        assert (other.heads, other.dropout, other.use_attention) == (net.heads, net.dropout, net.use_attention)
        assert all(np.array_equal(other.params[k], net.params[k]) for k in PARAM_KEYS)


def test_checkpoint_is_byte_stable(tmp_path):
    checkpoint = Checkpoint(_nets(), seed=7)
    first, second = tmp_path / 'a.ckpt', tmp_path / 'b.ckpt'
    save_checkpoint(first, checkpoint)
    save_checkpoint(second, load_checkpoint(first))
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / 'model.ckpt'
    save_checkpoint(path, Checkpoint(_nets(), seed=1))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / 'model.ckpt'
    path.write_bytes(b'ABCD' + b'\x00' * 16)
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


# --- Отчет ---

def _report() -> EvalReport:
    return EvalReport(
        videos=[VideoResult('a', 'abnormal', 0.9, 'a:u0000', 2, True, 0.5),
                VideoResult('n', 'normal', 0.1, None, None, False, None)],
        vauc=1.0, iou_at={'0.1': 100.0}, miou=0.5, false_alarm_rate=0.0,
        unlocalized=['n'], config={'seed': 7},
    )


def test_report_round_trip(tmp_path):
    path = tmp_path / 'report.json'
    save_report(path, _report())
    assert load_report(path) == _report()
    assert path.read_text(encoding='utf-8').endswith('\n')


def test_report_csv(tmp_path):
    path = tmp_path / 'report.csv'
    export_csv(path, _report())
    frame = pd.read_csv(path)
    assert list(frame['video_id']) == ['a', 'n']
    assert frame.loc[0, 's_loc'] == 0.5
