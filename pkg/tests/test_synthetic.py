#!/usr/bin/env python3
"""
Тесты синтетического корпуса и извлекателя признаков.
tests/test_synthetic.py
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.constants import CANVAS_HEIGHT, CANVAS_WIDTH
from storage.feature_store import image_id, region_id
from synthetic.extractor import VideoRenderer, extract_features, extract_video_features
from synthetic.generator import (
    SyntheticSpec, build_scene, generate_synthetic, ground_truth_record, load_scene, render_detections, save_scene,
)
from tubes.builder import LinkParams, Tube, TubeEntry, build_video_tubes
from tubes.geometry import Box


def _spec(**kwargs) -> SyntheticSpec:
    values = dict(positive_videos=2, negative_videos=2, frames=80, objects=2, anomaly_length=20,
                  dim=8, segments=4, seed=3)
    values.update(kwargs)
    return SyntheticSpec(**values)


def _true_tube(video, obj: int) -> Tube:
    entries = [TubeEntry(f, Box(*video.tracks[obj, f])) for f in range(video.frame_count)]
    return Tube(f"{video.video_id}:u{obj:04d}", video.video_id, 'unary', video.categories[obj], entries)


def test_scene_layout():
    scene = build_scene(_spec())
    assert [v.video_id for v in scene.videos] == ['pos000', 'pos001', 'neg000', 'neg001']
    assert [v.split for v in scene.videos] == ['train', 'test', 'train', 'test']
    assert np.linalg.norm(scene.direction) == pytest.approx(1.0)
    for video in scene.videos:
        assert video.tracks.shape == (2, 80, 4)
        if video.is_abnormal:
            start, end = video.anomaly_span
            assert start % 20 == 0 and end - start == 20 and end <= 80
            assert 0 <= video.anomaly_object < 2
        else:
            assert video.anomaly_span is None


def test_scene_is_deterministic():
    a, b = build_scene(_spec()), build_scene(_spec())
    assert a.to_record() == b.to_record()
    assert build_scene(_spec(seed=4)).to_record() != a.to_record()


def test_tracks_stay_on_canvas():
    scene = build_scene(_spec(frames=300, speed=20.0))
    tracks = np.concatenate([v.tracks for v in scene.videos])
    assert tracks[..., 0].min() >= 0.0 and tracks[..., 2].max() <= CANVAS_WIDTH
    assert tracks[..., 1].min() >= 0.0 and tracks[..., 3].max() <= CANVAS_HEIGHT


def test_detections_cover_every_object_and_frame():
    scene = build_scene(_spec())
    video = scene.videos[0]
    dets = render_detections(scene, video)
    assert len(dets) == 80 * 2
    assert all(0.5 <= d.score <= 1.0 for d in dets)
    assert {d.frame for d in dets} == set(range(80))


def test_ground_truth_record():
    scene = build_scene(_spec())
    positive, negative = scene.videos[0], scene.videos[2]
    record = ground_truth_record(positive)
    start, end = positive.anomaly_span
    assert [e.frame for e in record.entries] == list(range(start, end))
    assert record.abnormal_frames == set(range(start, end))
    assert record.frame_count == 80
    empty = ground_truth_record(negative)
    assert empty.entries == [] and empty.abnormal_frames == set()


def test_generate_is_byte_identical(tmp_path):
    first = generate_synthetic(_spec(), tmp_path / 'a')
    second = generate_synthetic(_spec(), tmp_path / 'b')
    for name in ('det', 'gt', 'scene'):
        assert first[name].read_bytes() == second[name].read_bytes()


def test_scene_round_trip(tmp_path):
    scene = build_scene(_spec())
    save_scene(tmp_path / 'scene.json', scene)
    assert load_scene(tmp_path / 'scene.json').to_record() == scene.to_record()


def test_linked_tracks_form_tubes():
    scene = build_scene(_spec())
    dets = render_detections(scene, scene.videos[0])
    tubes = build_video_tubes(dets, LinkParams(zeta1=60, zeta2=60))
    assert len([t for t in tubes if t.kind == 'unary']) == 2
    assert all(len(t) == 80 for t in tubes)


@pytest.mark.parametrize('kwargs', [
    dict(objects=0), dict(objects=9), dict(anomaly_length=100), dict(sigma=0.0),
    dict(segments=0), dict(test_fraction=1.5), dict(frames=0),
])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        _spec(**kwargs).validate()


def test_region_shift_only_on_anomalous_object():
    scene = build_scene(_spec(clip_length=10))
    video = scene.videos[0]
    renderer = VideoRenderer(scene, video)
    start, end = video.anomaly_span
    for obj in range(2):
        region, image = renderer.tube_features(_true_tube(video, obj))
        assert region.shape == (8, 8) and image.shape == (8, 8)
        for clip in range(8):
            anomalous = clip * 10 < end and start < clip * 10 + 10
            expected = renderer.region_noise[obj, clip] + (renderer.shift if anomalous and obj == video.anomaly_object else 0.0)
            assert np.allclose(region[clip], expected)
            expected_image = renderer.image_noise[clip] + (renderer.shift if anomalous else 0.0)
            assert np.allclose(image[clip], expected_image)


def test_negative_video_has_no_shift():
    scene = build_scene(_spec(clip_length=10))
    video = scene.videos[2]
    renderer = VideoRenderer(scene, video)
    region, image = renderer.tube_features(_true_tube(video, 0))
    assert np.allclose(region, renderer.region_noise[0])
    assert np.allclose(image, renderer.image_noise)


def test_videolet_features_shifted_inside_anomaly():
    scene = build_scene(_spec())
    video = scene.videos[0]
    renderer = VideoRenderer(scene, video)
    records = renderer.videolet_features()
    assert len(records) == 4
    start, end = video.anomaly_span
    for k, rec in enumerate(records):
        anomalous = rec.span[0] < end and start < rec.span[1]
        expected = renderer.videolet_noise[k] + (renderer.shift if anomalous else 0.0)
        assert np.allclose(rec.rows, expected)


def test_videolet_clips_have_independent_noise():
    scene = build_scene(_spec(clip_length=8))
    records = VideoRenderer(scene, scene.videos[2]).videolet_features()
    # 20 кадров видеолета дают три клипа
    assert all(rec.rows.shape == (3, 8) for rec in records)
    assert all(not np.allclose(rec.rows[0], rec.rows[1]) for rec in records)


def test_extract_features_store_layout():
    scene = build_scene(_spec())
    tubes = [_true_tube(v, 0) for v in scene.videos]
    store = extract_features(scene, tubes)
    assert len(store) == 4 * 2 + 4 * 4
    assert region_id('pos000:u0000') in store and image_id('pos000:u0000') in store
    assert store.videolet_ids('neg001') == [f"neg001:v{k:03d}" for k in range(4)]


def test_extract_is_order_independent():
    scene = build_scene(_spec())
    video = scene.videos[1]
    tubes = [_true_tube(video, 0), _true_tube(video, 1)]
    forward = extract_video_features(scene, video, tubes)
    backward = extract_video_features(scene, video, tubes[::-1])
    rows = {r.instance_id: r.rows for r in forward}
    assert all(np.array_equal(rows[r.instance_id], r.rows) for r in backward)


def test_extract_rejects_unknown_video():
    scene = build_scene(_spec())
    stray = Tube('ghost:u0000', 'ghost', 'unary', 'car', [TubeEntry(0, Box(0, 0, 1, 1))])
    with pytest.raises(ValueError):
        extract_features(scene, [stray])
