"""
Бинарный файл признаков STFV и его JSON-индекс.

Раскладка файла (little-endian):
    4 байта   magic b'STFV'
    u32       version = 1
    u32       dim
    u64       count (число строк)
    count*dim float32, построчно

Индекс лежит рядом (<path>.index.json) и отображает instance_id в
{"row_start", "row_count", "track", "video_id", "span"}.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config.constants import (
    FEATURE_INDEX_SUFFIX, FEATURE_MAGIC, FEATURE_VERSION, TRACK_IMAGE, TRACK_REGION, TRACK_VIDEOLET, TRACKS,
)
from utils.exceptions import DataFormatError, MissingFeatureError

logger = logging.getLogger(__name__)

HEADER_DTYPE = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('dim', '<u4'),
    ('count', '<u8'),
])


def region_id(tube_id: str) -> str:
    return f"{tube_id}@{TRACK_REGION}"


def image_id(tube_id: str) -> str:
    return f"{tube_id}@{TRACK_IMAGE}"


def videolet_id(video_id: str, index: int) -> str:
    return f"{video_id}:v{index:03d}"


@dataclass(frozen=True)
class FeatureIndexEntry:
    """Положение признаков экземпляра в файле."""
    row_start: int
    row_count: int
    track: str
    video_id: str
    span: Tuple[int, int]

    def to_record(self) -> Dict:
        return {
            'row_start': self.row_start,
            'row_count': self.row_count,
            'track': self.track,
            'video_id': self.video_id,
            'span': list(self.span),
        }


class FeatureStore:
    """Хранилище клиповых признаков экземпляров."""

    def __init__(self, dim: int):
        """
        Args:
            dim: Размерность признака
        """
        if dim < 1:
            raise ValueError(f"Размерность признака должна быть положительной: {dim}")
        self.dim = dim
        self.index: Dict[str, FeatureIndexEntry] = {}
        self._blocks: List[np.ndarray] = []
        self._matrix: Optional[np.ndarray] = None
        self._count = 0

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self.index

    def add(self, instance_id: str, rows: np.ndarray, track: str, video_id: str, span: Tuple[int, int]) -> None:
        """
        Добавляет признаки клипов одного экземпляра.

        Args:
            instance_id: Ключ экземпляра
            rows: Матрица (clips, dim)
            track: region, image или videolet
            video_id: Видео экземпляра
            span: Полуинтервал кадров
        """
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.dim or rows.shape[0] == 0:
            raise ValueError(f"Признаки {instance_id}: ожидалась форма (k, {self.dim}), получено {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError(f"Признаки {instance_id} содержат нечисловые значения")
        if track not in TRACKS:
            raise ValueError(f"Неизвестная дорожка: {track}")
        if instance_id in self.index:
            raise ValueError(f"Повторный экземпляр: {instance_id}")
        self.index[instance_id] = FeatureIndexEntry(self._count, rows.shape[0], track, video_id, tuple(span))
        self._blocks.append(rows.astype('<f4'))
        self._count += rows.shape[0]
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self._blocks:
                self._matrix = np.concatenate(self._blocks, axis=0)
            else:
                self._matrix = np.zeros((0, self.dim), dtype='<f4')
            self._blocks = [self._matrix]
        return self._matrix

    def rows(self, instance_id: str) -> np.ndarray:
        """
        Возвращает признаки клипов экземпляра в float64.

        Raises:
            MissingFeatureError: Если экземпляра нет в индексе
        """
        entry = self.index.get(instance_id)
        if entry is None:
            raise MissingFeatureError(f"нет признаков для {instance_id}")
        block = self.matrix[entry.row_start:entry.row_start + entry.row_count]
        return block.astype(np.float64)

    def videolet_ids(self, video_id: str) -> List[str]:
        """Ключи видеолетов видео в порядке времени."""
        ids = [k for k, e in self.index.items() if e.track == TRACK_VIDEOLET and e.video_id == video_id]
        return sorted(ids, key=lambda k: self.index[k].span)

    def save(self, path: Union[str, Path]) -> None:
        """Сохраняет файл признаков и индекс рядом с ним."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = np.zeros(1, dtype=HEADER_DTYPE)
        header['magic'] = FEATURE_MAGIC
        header['version'] = FEATURE_VERSION
        header['dim'] = self.dim
        header['count'] = self._count
        with path.open('wb') as fh:
            fh.write(header.tobytes())
            fh.write(np.ascontiguousarray(self.matrix, dtype='<f4').tobytes())

        index = {key: entry.to_record() for key, entry in self.index.items()}
        index_path = Path(str(path) + FEATURE_INDEX_SUFFIX)
        index_path.write_text(json.dumps(index, ensure_ascii=False), encoding='utf-8')
        logger.info(f"[IO] Сохранено {len(self.index)} экземпляров ({self._count} строк) в {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'FeatureStore':
        """
        Загружает файл признаков и индекс.

        Raises:
            DataFormatError: При неверной сигнатуре, версии или размере
        """
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < HEADER_DTYPE.itemsize:
            raise DataFormatError("файл короче заголовка", path=str(path))
        header = np.frombuffer(raw[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
        if header['magic'] != FEATURE_MAGIC:
            raise DataFormatError(f"неверная сигнатура {header['magic']!r}", path=str(path))
        if int(header['version']) != FEATURE_VERSION:
            raise DataFormatError(f"неподдерживаемая версия {int(header['version'])}", path=str(path))
        dim, count = int(header['dim']), int(header['count'])
        payload = raw[HEADER_DTYPE.itemsize:]
        if len(payload) != count * dim * 4:
            raise DataFormatError(f"ожидалось {count * dim * 4} байт данных, найдено {len(payload)}", path=str(path))

        store = cls(dim)
        store._matrix = np.frombuffer(payload, dtype='<f4').reshape(count, dim)
        store._blocks = [store._matrix]
        store._count = count

        index_path = Path(str(path) + FEATURE_INDEX_SUFFIX)
        try:
            index = json.loads(index_path.read_text(encoding='utf-8'))
            for key, rec in index.items():
                entry = FeatureIndexEntry(
                    int(rec['row_start']), int(rec['row_count']), rec['track'],
                    str(rec['video_id']), (int(rec['span'][0]), int(rec['span'][1])),
                )
                if entry.track not in TRACKS or entry.row_start + entry.row_count > count:
                    raise ValueError(f"запись {key} вне файла или с неизвестной дорожкой")
                store.index[key] = entry
        except FileNotFoundError as e:
            raise DataFormatError("нет индекса признаков", path=str(index_path)) from e
        except (ValueError, KeyError, TypeError, IndexError) as e:
            raise DataFormatError(f"некорректный индекс: {e}", path=str(index_path)) from e

        logger.info(f"[IO] Загружено {len(store.index)} экземпляров размерности {dim} из {path}")
        return store
