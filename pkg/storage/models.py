"""
Модели данных экземпляров, мешков и разметки.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from config.constants import (
    LABEL_ABNORMAL, LABEL_NORMAL, SOURCE_TUBE_IMAGE, SOURCE_TUBE_REGION, SOURCE_VIDEOLET,
    SPLIT_TEST, SPLIT_TRAIN,
)
from tubes.builder import Tube, TubeEntry
from tubes.geometry import Box


@dataclass
class Instance:
    """
    Экземпляр MIL: трубка (одна из двух дорожек признаков) или видеолет.

    Attributes:
        instance_id: Идентификатор экземпляра (ключ в индексе признаков)
        video_id: Идентификатор видео
        source: tube_region, tube_image или videolet
        span: Полуинтервал кадров [start, end)
        tube: Трубка-источник (только для трубочных экземпляров)
        clip_features: Признаки 16-кадровых клипов, форма (clips, dim)
    """
    instance_id: str
    video_id: str
    source: str
    span: Tuple[int, int]
    tube: Optional[Tube] = None
    clip_features: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.source == SOURCE_VIDEOLET:
            if self.tube is not None:
                raise ValueError(f"Видеолет {self.instance_id} не может ссылаться на трубку")
        elif self.source in (SOURCE_TUBE_REGION, SOURCE_TUBE_IMAGE):
            if self.tube is None:
                raise ValueError(f"Экземпляр {self.instance_id} должен ссылаться на трубку")
        else:
            raise ValueError(f"Неизвестный источник экземпляра: {self.source}")

    @property
    def pooled(self) -> np.ndarray:
        """Среднее признаков клипов."""
        if self.clip_features is None or len(self.clip_features) == 0:
            raise ValueError(f"У экземпляра {self.instance_id} нет признаков")
        return self.clip_features.mean(axis=0)

    @property
    def length(self) -> int:
        return self.span[1] - self.span[0]


@dataclass
class TubeInstance:
    """Трубочный экземпляр с парой дорожек: внутри трубки и по всему кадру."""
    tube: Tube
    region: Instance
    image: Optional[Instance] = None

    @property
    def instance_id(self) -> str:
        return self.tube.tube_id


@dataclass
class InstanceBag:
    """
    Мешок MIL одного видео.

    Attributes:
        video_id: Идентификатор видео
        label: abnormal (положительный) или normal (отрицательный)
        tube_instances: Трубочные экземпляры
        videolet_instances: Временные экземпляры
    """
    video_id: str
    label: str
    tube_instances: List[TubeInstance] = field(default_factory=list)
    videolet_instances: List[Instance] = field(default_factory=list)

    @property
    def is_positive(self) -> bool:
        return self.label == LABEL_ABNORMAL

    def region_matrix(self) -> np.ndarray:
        """Признаки трубок внутри рамок, форма (dim, n)."""
        return np.stack([t.region.pooled for t in self.tube_instances], axis=1)

    def videolet_matrix(self) -> np.ndarray:
        """Признаки видеолетов, форма (dim, n)."""
        return np.stack([v.pooled for v in self.videolet_instances], axis=1)


@dataclass
class GroundTruthRecord:
    """
    Запись файла разметки.

    Attributes:
        video_id: Идентификатор видео
        label: abnormal или normal
        entries: Эталонная трубка (пусто у нормальных видео)
        abnormal_frames: Кадры с аномалией для покадрового AUC
        frame_count: Число кадров видео, если известно
        split: train, test или None
    """
    video_id: str
    label: str
    entries: List[TubeEntry] = field(default_factory=list)
    abnormal_frames: Optional[Set[int]] = None
    frame_count: Optional[int] = None
    split: Optional[str] = None

    def __post_init__(self):
        if self.label not in (LABEL_ABNORMAL, LABEL_NORMAL):
            raise ValueError(f"Неизвестная метка видео: {self.label}")
        if self.split not in (None, SPLIT_TRAIN, SPLIT_TEST):
            raise ValueError(f"Неизвестная часть выборки: {self.split}")
        frames = [e.frame for e in self.entries]
        if frames != sorted(frames):
            raise ValueError(f"Кадры разметки {self.video_id} не отсортированы")

    @property
    def is_abnormal(self) -> bool:
        return self.label == LABEL_ABNORMAL

    def to_record(self) -> Dict:
        record = {
            'video_id': self.video_id,
            'entries': [{'frame': e.frame, 'bbox': e.box.to_list()} for e in self.entries],
            'label': self.label,
        }
        if self.abnormal_frames is not None:
            record['abnormal_frames'] = sorted(self.abnormal_frames)
        if self.frame_count is not None:
            record['frame_count'] = self.frame_count
        if self.split is not None:
            record['split'] = self.split
        return record

    @classmethod
    def from_record(cls, data: Dict) -> 'GroundTruthRecord':
        entries = [TubeEntry(int(e['frame']), Box.from_list(e['bbox'])) for e in data.get('entries', [])]
        abnormal = data.get('abnormal_frames')
        frame_count = data.get('frame_count')
        return cls(
            video_id=str(data['video_id']),
            label=data['label'],
            entries=entries,
            abnormal_frames=set(int(f) for f in abnormal) if abnormal is not None else None,
            frame_count=int(frame_count) if frame_count is not None else None,
            split=data.get('split'),
        )


@dataclass
class GroundTruthTube:
    """Эталонная трубка и кадры, где у детектора есть рамки."""
    video_id: str
    entries: List[TubeEntry]
    detector_frames: Set[int]

    def __post_init__(self):
        frames = [e.frame for e in self.entries]
        if frames != sorted(frames):
            raise ValueError(f"Кадры эталонной трубки {self.video_id} не отсортированы")

    def boxes_by_frame(self) -> Dict[int, Box]:
        return {e.frame: e.box for e in self.entries}


@dataclass
class VideoPrediction:
    """
    Результат вывода для одного видео.

    Attributes:
        video_id: Идентификатор видео
        score: Оценка аномальности видео (оценка лучшей трубки)
        tube_id: Родительская трубка предсказания
        sub_index: Номер гипотетической трубки (с единицы)
        entries: Записи предсказанной трубки
    """
    video_id: str
    score: float
    tube_id: Optional[str] = None
    sub_index: Optional[int] = None
    entries: List[TubeEntry] = field(default_factory=list)

    @property
    def localized(self) -> bool:
        return self.tube_id is not None

    def boxes_by_frame(self) -> Dict[int, Box]:
        return {e.frame: e.box for e in self.entries}

    def to_record(self) -> Dict:
        return {
            'video_id': self.video_id,
            'tube_id': self.tube_id,
            'sub_index': self.sub_index,
            'score': self.score,
            'localized': self.localized,
            'entries': [{'frame': e.frame, 'bbox': e.box.to_list()} for e in self.entries],
        }

    @classmethod
    def from_record(cls, data: Dict) -> 'VideoPrediction':
        return cls(
            video_id=str(data['video_id']),
            score=float(data['score']),
            tube_id=data.get('tube_id'),
            sub_index=data.get('sub_index'),
            entries=[TubeEntry(int(e['frame']), Box.from_list(e['bbox'])) for e in data.get('entries', [])],
        )
