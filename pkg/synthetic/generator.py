"""
Синтетический корпус с заложенной аномалией.

Объекты движутся по своим горизонтальным полосам кадра 720x1280 с
постоянной скоростью и отражением от границ. В каждом положительном
видео один объект ведет себя аномально на отрезке anomaly_length кадров.
Признаки не хранятся: их рендерит synthetic.extractor по файлу сцены
с теми же зернами.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config.constants import (
    CANVAS_HEIGHT, CANVAS_WIDTH, LABEL_ABNORMAL, LABEL_NORMAL, SPLIT_TEST, SPLIT_TRAIN, SYNTHETIC_CATEGORIES,
)
from config.settings import CLIP_LENGTH, DEFAULT_SEED, VIDEOLET_SEGMENTS
from storage.jsonl_store import save_detections, save_ground_truth
from storage.models import GroundTruthRecord
from tubes.builder import TubeEntry
from tubes.geometry import Box, ScoredBox

logger = logging.getLogger(__name__)

DETECTIONS_FILE = 'det.jsonl'
GROUND_TRUTH_FILE = 'gt.jsonl'
SCENE_FILE = 'scene.json'


@dataclass
class SyntheticSpec:
    """
    Параметры синтетического корпуса.

    Attributes:
        positive_videos, negative_videos: Число видео каждого класса
        frames: Кадров в видео
        objects: Объектов в кадре
        anomaly_length: Длина аномального отрезка; начало кратно ей
        dim: Размерность признака
        delta: Сдвиг аномальных клипов вдоль единичного направления
        sigma: Шум признаков
        seed: Зерно
        clip_length: Длина клипа
        segments: Число видеолетов
        test_fraction: Доля видео каждого класса в тестовой части
        speed: Наибольшая скорость объекта, пикселей за кадр
        jitter: Шум рамок детектора, пикселей
    """
    positive_videos: int = 40
    negative_videos: int = 40
    frames: int = 200
    objects: int = 3
    anomaly_length: int = 40
    dim: int = 64
    delta: float = 6.0
    sigma: float = 1.0
    seed: int = DEFAULT_SEED
    clip_length: int = CLIP_LENGTH
    segments: int = VIDEOLET_SEGMENTS
    test_fraction: float = 0.5
    speed: float = 4.0
    jitter: float = 1.0

    def validate(self) -> None:
        """
        Raises:
            ValueError: Несогласованные параметры
        """
        if self.positive_videos < 0 or self.negative_videos < 0:
            raise ValueError("Число видео не может быть отрицательным")
        if self.frames < 1:
            raise ValueError(f"Видео должно содержать кадры: {self.frames}")
        if not 1 <= self.objects <= len(SYNTHETIC_CATEGORIES):
            raise ValueError(f"Объектов должно быть от 1 до {len(SYNTHETIC_CATEGORIES)}: {self.objects}")
        if not 1 <= self.anomaly_length <= self.frames:
            raise ValueError(f"Аномальный отрезок {self.anomaly_length} не помещается в {self.frames} кадров")
        if self.dim < 1 or self.clip_length < 1:
            raise ValueError("Размерность и длина клипа должны быть положительными")
        if not 1 <= self.segments <= self.frames:
            raise ValueError(f"Видеолетов должно быть от 1 до {self.frames}: {self.segments}")
        if self.delta < 0 or self.sigma <= 0:
            raise ValueError(f"Нужно delta >= 0 и sigma > 0: {self.delta}, {self.sigma}")
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ValueError(f"Доля теста вне [0, 1]: {self.test_fraction}")
        if self.speed < 0 or self.jitter < 0:
            raise ValueError("Скорость и шум рамок не могут быть отрицательными")


@dataclass
class SceneVideo:
    """
    Видео сцены.

    Attributes:
        video_id: Идентификатор видео
        index: Порядковый номер (определяет зерна шума)
        label: abnormal или normal
        split: train или test
        frame_count: Число кадров
        categories: Категория каждого объекта
        tracks: Истинные рамки объектов, форма (objects, frames, 4)
        anomaly_object: Номер аномального объекта
        anomaly_span: Аномальный полуинтервал кадров
    """
    video_id: str
    index: int
    label: str
    split: str
    frame_count: int
    categories: List[str]
    tracks: np.ndarray
    anomaly_object: Optional[int] = None
    anomaly_span: Optional[Tuple[int, int]] = None

    @property
    def is_abnormal(self) -> bool:
        return self.label == LABEL_ABNORMAL

    def to_record(self) -> Dict:
        return {
            'video_id': self.video_id,
            'index': self.index,
            'label': self.label,
            'split': self.split,
            'frame_count': self.frame_count,
            'categories': list(self.categories),
            'tracks': self.tracks.tolist(),
            'anomaly_object': self.anomaly_object,
            'anomaly_span': list(self.anomaly_span) if self.anomaly_span is not None else None,
        }

    @classmethod
    def from_record(cls, data: Dict) -> 'SceneVideo':
        span = data.get('anomaly_span')
        return cls(
            video_id=data['video_id'],
            index=int(data['index']),
            label=data['label'],
            split=data['split'],
            frame_count=int(data['frame_count']),
            categories=list(data['categories']),
            tracks=np.asarray(data['tracks'], dtype=np.float64),
            anomaly_object=data.get('anomaly_object'),
            anomaly_span=(int(span[0]), int(span[1])) if span is not None else None,
        )


@dataclass
class SyntheticScene:
    """Сцена корпуса: параметры, направление аномального сдвига, видео."""
    spec: SyntheticSpec
    direction: np.ndarray
    videos: List[SceneVideo]

    def to_record(self) -> Dict:
        return {
            'spec': asdict(self.spec),
            'direction': self.direction.tolist(),
            'videos': [v.to_record() for v in self.videos],
        }

    @classmethod
    def from_record(cls, data: Dict) -> 'SyntheticScene':
        return cls(
            spec=SyntheticSpec(**data['spec']),
            direction=np.asarray(data['direction'], dtype=np.float64),
            videos=[SceneVideo.from_record(v) for v in data['videos']],
        )


def save_scene(path: Union[str, Path], scene: SyntheticScene) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scene.to_record(), sort_keys=True), encoding='utf-8')


def load_scene(path: Union[str, Path]) -> SyntheticScene:
    return SyntheticScene.from_record(json.loads(Path(path).read_text(encoding='utf-8')))


def _reflect(position: float, low: float, high: float) -> float:
    # отражение от границ отрезка [low, high]
    span = high - low
    if span <= 0:
        return low
    period = 2.0 * span
    offset = (position - low) % period
    return low + (offset if offset <= span else period - offset)


def _object_track(rng: np.random.Generator, spec: SyntheticSpec, lane: int) -> np.ndarray:
    """Истинные рамки одного объекта по кадрам, форма (frames, 4)."""
    lane_height = CANVAS_HEIGHT / spec.objects
    height = rng.uniform(0.5, 0.8) * lane_height
    width = rng.uniform(80.0, 160.0)
    top = lane * lane_height + rng.uniform(0.0, lane_height - height)
    x0 = rng.uniform(0.0, CANVAS_WIDTH - width)
    vx = rng.uniform(0.5, 1.0) * spec.speed * rng.choice([-1.0, 1.0])

    track = np.empty((spec.frames, 4))
    for f in range(spec.frames):
        x = _reflect(x0 + vx * f, 0.0, CANVAS_WIDTH - width)
        track[f] = (x, top, x + width, top + height)
    return np.round(track, 3)


def _split_names(count: int, test_fraction: float) -> List[str]:
    n_test = int(round(count * test_fraction))
    return [SPLIT_TRAIN] * (count - n_test) + [SPLIT_TEST] * n_test


def build_scene(spec: SyntheticSpec) -> SyntheticScene:
    """Строит сцену корпуса детерминированно по spec.seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)

    videos: List[SceneVideo] = []
    plan = [(LABEL_ABNORMAL, 'pos', spec.positive_videos), (LABEL_NORMAL, 'neg', spec.negative_videos)]
    for label, prefix, count in plan:
        for k, split in enumerate(_split_names(count, spec.test_fraction)):
            categories = list(rng.permutation(SYNTHETIC_CATEGORIES)[:spec.objects])
            tracks = np.stack([_object_track(rng, spec, lane) for lane in range(spec.objects)])
            video = SceneVideo(
                video_id=f"{prefix}{k:03d}",
                index=len(videos),
                label=label,
                split=split,
                frame_count=spec.frames,
                categories=[str(c) for c in categories],
                tracks=tracks,
            )
            if label == LABEL_ABNORMAL:
                video.anomaly_object = int(rng.integers(0, spec.objects))
                slots = spec.frames // spec.anomaly_length
                start = spec.anomaly_length * int(rng.integers(0, slots))
                video.anomaly_span = (start, start + spec.anomaly_length)
            videos.append(video)
    return SyntheticScene(spec=spec, direction=direction, videos=videos)


def render_detections(scene: SyntheticScene, video: SceneVideo) -> List[ScoredBox]:
    """Детекции видео: истинные рамки с шумом и оценками в [0.5, 1]."""
    spec = scene.spec
    rng = np.random.default_rng([spec.seed, video.index + 1, 0])
    dets = []
    for f in range(video.frame_count):
        for obj, category in enumerate(video.categories):
            x1, y1, x2, y2 = video.tracks[obj, f] + rng.normal(0.0, spec.jitter, size=4)
            x1, x2 = sorted((min(max(x1, 0.0), CANVAS_WIDTH), min(max(x2, 0.0), CANVAS_WIDTH)))
            y1, y2 = sorted((min(max(y1, 0.0), CANVAS_HEIGHT), min(max(y2, 0.0), CANVAS_HEIGHT)))
            score = round(float(rng.uniform(0.5, 1.0)), 4)
            box = Box(round(x1, 3), round(y1, 3), round(x2, 3), round(y2, 3))
            dets.append(ScoredBox(box=box, score=score, category=category, frame=f, video_id=video.video_id))
    return dets


def ground_truth_record(video: SceneVideo) -> GroundTruthRecord:
    """Разметка видео: истинные рамки аномального объекта на аномальном отрезке."""
    entries: List[TubeEntry] = []
    abnormal_frames = set()
    if video.is_abnormal:
        start, end = video.anomaly_span
        entries = [TubeEntry(f, Box(*video.tracks[video.anomaly_object, f])) for f in range(start, end)]
        abnormal_frames = set(range(start, end))
    return GroundTruthRecord(
        video_id=video.video_id,
        label=video.label,
        entries=entries,
        abnormal_frames=abnormal_frames,
        frame_count=video.frame_count,
        split=video.split,
    )


def generate_synthetic(spec: SyntheticSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Пишет корпус: детекции, разметку и файл сцены.

    Args:
        spec: Параметры корпуса
        out_dir: Каталог результата

    Returns:
        Пути к записанным файлам по именам det, gt, scene
    """
    out_dir = Path(out_dir)
    scene = build_scene(spec)

    dets: List[ScoredBox] = []
    for video in scene.videos:
        dets.extend(render_detections(scene, video))

    paths = {
        'det': out_dir / DETECTIONS_FILE,
        'gt': out_dir / GROUND_TRUTH_FILE,
        'scene': out_dir / SCENE_FILE,
    }
    save_detections(paths['det'], dets)
    save_ground_truth(paths['gt'], (ground_truth_record(v) for v in scene.videos))
    save_scene(paths['scene'], scene)
    logger.info(f"[SYNTH] ✅ {len(scene.videos)} видео, {len(dets)} детекций в {out_dir}")
    return paths
