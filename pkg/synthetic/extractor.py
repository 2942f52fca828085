"""
Извлекатель признаков для синтетического корпуса.

Заменяет внешний извлекатель клиповых признаков: для каждой трубки
рендерит признаки клипов внутри рамок и по всему кадру, для каждого
видео - признаки видеолетов. Клип сдвигается на delta * u, если
пересекается с аномальным отрезком (для признаков внутри рамок - только
клип аномального объекта).
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.constants import TRACK_IMAGE, TRACK_REGION, TRACK_VIDEOLET
from instances.bank import clip_spans, make_videolet_instances, tubes_by_video
from storage.feature_store import FeatureStore, image_id, region_id
from synthetic.generator import SceneVideo, SyntheticScene
from tubes.builder import Tube
from tubes.geometry import Box, iou
from workers.statistics_manager import StatisticsManager
from workers.video_worker import VideoStageWorker

logger = logging.getLogger(__name__)

# объект считается источником клипа при IoU выше порога
ATTRIBUTION_IOU = 0.1


@dataclass
class FeatureRecord:
    """Признаки клипов одного экземпляра до записи в хранилище."""
    instance_id: str
    rows: np.ndarray
    track: str
    video_id: str
    span: Tuple[int, int]


def _overlaps(span: Tuple[int, int], other: Optional[Tuple[int, int]]) -> bool:
    return other is not None and span[0] < other[1] and other[0] < span[1]


class VideoRenderer:
    """Шум и сдвиги признаков одного видео сцены."""

    def __init__(self, scene: SyntheticScene, video: SceneVideo):
        spec = scene.spec
        self.video = video
        self.spec = spec
        self.shift = spec.delta * scene.direction
        n_clips = -(-video.frame_count // spec.clip_length)
        objects = len(video.categories)
        # последний слот region_noise - фон без объекта
        self.region_noise = np.random.default_rng([spec.seed, video.index + 1, 1]).normal(
            0.0, spec.sigma, size=(objects + 1, n_clips, spec.dim))
        self.image_noise = np.random.default_rng([spec.seed, video.index + 1, 2]).normal(
            0.0, spec.sigma, size=(n_clips, spec.dim))
        self.videolets = make_videolet_instances(video.video_id, video.frame_count, spec.segments)
        counts = [len(clip_spans(inst.span, spec.clip_length)) for inst in self.videolets]
        noise = np.random.default_rng([spec.seed, video.index + 1, 3]).normal(
            0.0, spec.sigma, size=(sum(counts), spec.dim))
        # свой шум на каждый клип видеолета
        self.videolet_noise = np.split(noise, np.cumsum(counts)[:-1])

    def _clip_index(self, frame: int) -> int:
        return min(frame // self.spec.clip_length, self.image_noise.shape[0] - 1)

    def _attribute(self, box: Box, frame: int) -> int:
        """Объект с наибольшим IoU к рамке в кадре или слот фона."""
        best, best_iou = len(self.video.categories), ATTRIBUTION_IOU
        for obj in range(len(self.video.categories)):
            value = iou(box, Box(*self.video.tracks[obj, frame]))
            if value > best_iou:
                best, best_iou = obj, value
        return best

    def _anomalous(self, span: Tuple[int, int]) -> bool:
        return self.video.is_abnormal and _overlaps(span, self.video.anomaly_span)

    def tube_features(self, tube: Tube) -> Tuple[np.ndarray, np.ndarray]:
        """Признаки клипов трубки: (внутри рамок, по всему кадру)."""
        boxes = tube.boxes_by_frame()
        region, image = [], []
        for span in clip_spans(tube.span, self.spec.clip_length):
            clip = self._clip_index(span[0])
            obj = self._attribute(boxes[span[0]], min(span[0], self.video.frame_count - 1))
            anomalous = self._anomalous(span)

            r = self.region_noise[obj, clip].copy()
            if anomalous and obj == self.video.anomaly_object:
                r += self.shift
            g = self.image_noise[clip].copy()
            if anomalous:
                g += self.shift
            region.append(r)
            image.append(g)
        return np.stack(region), np.stack(image)

    def videolet_features(self) -> List[FeatureRecord]:
        records = []
        for inst, noise in zip(self.videolets, self.videolet_noise):
            rows = noise.copy()
            if self._anomalous(inst.span):
                rows = rows + self.shift
            records.append(FeatureRecord(inst.instance_id, rows, TRACK_VIDEOLET, self.video.video_id, inst.span))
        return records


def extract_video_features(scene: SyntheticScene, video: SceneVideo, tubes: Sequence[Tube]) -> List[FeatureRecord]:
    """
    Признаки всех экземпляров одного видео.

    Args:
        scene: Сцена корпуса
        video: Видео сцены
        tubes: Трубки этого видео

    Returns:
        Записи: region и image для каждой трубки, затем видеолеты
    """
    renderer = VideoRenderer(scene, video)
    records: List[FeatureRecord] = []
    for tube in tubes:
        if tube.end_frame > video.frame_count:
            raise ValueError(f"Трубка {tube.tube_id} выходит за пределы видео {video.video_id}")
        region, image = renderer.tube_features(tube)
        records.append(FeatureRecord(region_id(tube.tube_id), region, TRACK_REGION, video.video_id, tube.span))
        records.append(FeatureRecord(image_id(tube.tube_id), image, TRACK_IMAGE, video.video_id, tube.span))
    records.extend(renderer.videolet_features())
    return records


def collect_features(dim: int, per_video: Sequence[List[FeatureRecord]]) -> FeatureStore:
    """Складывает записи видео в одно хранилище в заданном порядке."""
    store = FeatureStore(dim)
    for records in per_video:
        for rec in records:
            store.add(rec.instance_id, rec.rows, rec.track, rec.video_id, rec.span)
    return store


def extract_features(scene: SyntheticScene, tubes: Sequence[Tube], threads: int = 1,
                     stats: Optional[StatisticsManager] = None) -> FeatureStore:
    """
    Признаки всего корпуса по сцене и трубкам.

    Args:
        scene: Сцена корпуса
        tubes: Трубки всех видео
        threads: Число одновременно обрабатываемых видео
        stats: Менеджер статистики, в котором регистрируется воркер

    Returns:
        Хранилище с дорожками region, image и videolet
    """
    grouped = tubes_by_video(tubes)
    unknown = set(grouped) - {v.video_id for v in scene.videos}
    if unknown:
        raise ValueError(f"Трубки видео, которых нет в сцене: {sorted(unknown)[:5]}")
    worker = VideoStageWorker('extract', lambda v: extract_video_features(scene, v, grouped.get(v.video_id, [])),
                              threads, describe=lambda v: v.video_id)
    if stats is not None:
        stats.register_worker(worker)
    store = collect_features(scene.spec.dim, worker.run(scene.videos))
    logger.info(f"[EXTRACT] Признаки для {len(store)} экземпляров размерности {scene.spec.dim}")
    return store
