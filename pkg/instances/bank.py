"""
Превращение трубок и временной шкалы видео в экземпляры MIL с признаками
и сборка положительных и отрицательных мешков.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import (
    LABEL_ABNORMAL, LABEL_NORMAL, SOURCE_TUBE_IMAGE, SOURCE_TUBE_REGION, SOURCE_VIDEOLET,
)
from config.settings import BAG_CAP, CLIP_LENGTH
from storage.feature_store import FeatureStore, image_id, region_id, videolet_id
from storage.models import Instance, InstanceBag, TubeInstance
from tubes.builder import Tube
from utils.exceptions import MissingFeatureError

logger = logging.getLogger(__name__)


def pool_clip_features(clips: Sequence[np.ndarray]) -> np.ndarray:
    """
    Усредняет признаки клипов поэлементно.

    Args:
        clips: Непустой список векторов одной размерности

    Returns:
        Средний вектор

    Raises:
        ValueError: Пустой список или разные размерности
    """
    if len(clips) == 0:
        raise ValueError("pool_clip_features: пустой список клипов")
    dims = {np.shape(c) for c in clips}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ValueError(f"pool_clip_features: несовпадающие размерности {sorted(dims)}")
    stacked = np.stack([np.asarray(c, dtype=np.float64) for c in clips])
    if not np.all(np.isfinite(stacked)):
        raise ValueError("pool_clip_features: нечисловые значения")
    return stacked.mean(axis=0)


def even_spans(start: int, end: int, parts: int) -> List[Tuple[int, int]]:
    """
    Делит [start, end) на parts смежных почти равных частей; остаток
    достается первым частям.
    """
    length = end - start
    if parts < 1 or parts > length:
        raise ValueError(f"Нельзя разделить {length} кадров на {parts} частей")
    base, remainder = divmod(length, parts)
    spans = []
    cursor = start
    for k in range(parts):
        size = base + (1 if k < remainder else 0)
        spans.append((cursor, cursor + size))
        cursor += size
    return spans


def make_videolet_instances(video_id: str, frame_count: int, segments: int) -> List[Instance]:
    """
    Делит видео на видеолеты: segments смежных почти равных отрезков.

    Args:
        video_id: Идентификатор видео
        frame_count: Число кадров
        segments: Число отрезков

    Returns:
        Экземпляры без признаков, по порядку времени
    """
    return [
        Instance(videolet_id(video_id, k), video_id, SOURCE_VIDEOLET, span)
        for k, span in enumerate(even_spans(0, frame_count, segments))
    ]


def clip_spans(span: Tuple[int, int], clip_length: int) -> List[Tuple[int, int]]:
    """Клипы экземпляра: отрезки по clip_length кадров от начала span, последний может быть короче."""
    start, end = span
    return [(s, min(s + clip_length, end)) for s in range(start, end, clip_length)]


def split_clip_rows(span: Tuple[int, int], clip_length: int,
                    sub_spans: Sequence[Tuple[int, int]], n_rows: Optional[int] = None) -> List[List[int]]:
    """
    Распределяет клипы родителя по под-отрезкам: клип принадлежит тому,
    где лежит его первый кадр. Под-отрезку без своих клипов достается клип,
    содержащий его первый кадр.

    Args:
        span: Отрезок родителя
        clip_length: Длина клипа в кадрах
        sub_spans: Смежные под-отрезки родителя
        n_rows: Фактическое число строк признаков родителя, если известно

    Returns:
        Для каждого под-отрезка список номеров строк признаков
    """
    start = span[0]
    clips = clip_spans(span, clip_length)
    last_row = (len(clips) if n_rows is None else n_rows) - 1
    owned: List[List[int]] = [[] for _ in sub_spans]
    for row, (clip_start, _) in enumerate(clips):
        if row > last_row:
            break
        for k, (s, e) in enumerate(sub_spans):
            if s <= clip_start < e:
                owned[k].append(row)
                break
    for k, (s, _) in enumerate(sub_spans):
        if not owned[k]:
            owned[k].append(min((s - start) // clip_length, last_row))
    return owned


def _tube_instance(tube: Tube, features: FeatureStore, need_image: bool) -> TubeInstance:
    region = Instance(region_id(tube.tube_id), tube.video_id, SOURCE_TUBE_REGION, tube.span,
                      tube=tube, clip_features=features.rows(region_id(tube.tube_id)))
    image: Optional[Instance] = None
    if image_id(tube.tube_id) in features:
        image = Instance(image_id(tube.tube_id), tube.video_id, SOURCE_TUBE_IMAGE, tube.span,
                         tube=tube, clip_features=features.rows(image_id(tube.tube_id)))
    elif need_image:
        raise MissingFeatureError(f"нет признаков по всему кадру для трубки {tube.tube_id}")
    return TubeInstance(tube=tube, region=region, image=image)


def select_longest(tubes: Sequence[Tube], cap: int) -> List[Tube]:
    """Оставляет cap самых длинных трубок (при равенстве по id), сохраняя исходный порядок."""
    if len(tubes) <= cap:
        return list(tubes)
    keep = {t.tube_id for t in sorted(tubes, key=lambda t: (-len(t), t.tube_id))[:cap]}
    return [t for t in tubes if t.tube_id in keep]


def assemble_bag(video_id: str, label: str, tubes: Sequence[Tube], features: FeatureStore,
                 cap: int = BAG_CAP, require_image: Optional[bool] = None) -> InstanceBag:
    """
    Собирает мешок видео.

    Положительному мешку нужны признаки трубок внутри рамок и по всему кадру,
    отрицательному достаточно признаков внутри рамок; обоим нужны видеолеты.

    Args:
        video_id: Идентификатор видео
        label: abnormal или normal
        tubes: Трубки видео
        features: Хранилище признаков
        cap: Предельное число экземпляров каждого вида
        require_image: Требовать признаки всего кадра независимо от метки

    Returns:
        Мешок экземпляров

    Raises:
        MissingFeatureError: Нет обязательной дорожки признаков
    """
    if label not in (LABEL_ABNORMAL, LABEL_NORMAL):
        raise ValueError(f"Неизвестная метка: {label}")
    if cap < 1:
        raise ValueError(f"Предел мешка должен быть положительным: {cap}")

    own = [t for t in tubes if t.video_id == video_id]
    kept = select_longest(own, cap)
    if len(kept) < len(own):
        logger.debug(f"[BANK] {video_id}: оставлено {len(kept)} из {len(own)} трубок")

    need_image = label == LABEL_ABNORMAL if require_image is None else require_image
    tube_instances = [_tube_instance(t, features, need_image) for t in kept]

    videolet_keys = features.videolet_ids(video_id)
    if not videolet_keys:
        raise MissingFeatureError(f"нет видеолетов для видео {video_id}")
    videolets = [
        Instance(key, video_id, SOURCE_VIDEOLET, features.index[key].span, clip_features=features.rows(key))
        for key in videolet_keys[:cap]
    ]
    return InstanceBag(video_id=video_id, label=label, tube_instances=tube_instances,
                       videolet_instances=videolets)


def tubes_by_video(tubes: Sequence[Tube]) -> Dict[str, List[Tube]]:
    """Группирует трубки по видео, сохраняя порядок внутри видео."""
    grouped: Dict[str, List[Tube]] = {}
    for tube in tubes:
        grouped.setdefault(tube.video_id, []).append(tube)
    return grouped


def subdivide_tube_instance(instance: TubeInstance, parts: int,
                            clip_length: int = CLIP_LENGTH) -> List[TubeInstance]:
    """
    Делит трубочный экземпляр на min(parts, длина) смежных частей.

    Части получают идентификаторы '<трубка>#<k>' (k с единицы) и строки
    признаков родителя по правилу split_clip_rows, в обеих дорожках.

    Args:
        instance: Трубочный экземпляр с признаками
        parts: Число частей
        clip_length: Длина клипа

    Returns:
        Экземпляры частей по порядку времени

    Raises:
        ValueError: parts < 1
    """
    if parts < 1:
        raise ValueError(f"Число частей должно быть положительным: {parts}")
    tube = instance.tube
    sub_spans = even_spans(tube.start_frame, tube.end_frame, min(parts, len(tube)))
    region_rows = split_clip_rows(tube.span, clip_length, sub_spans, len(instance.region.clip_features))
    image_rows = None
    if instance.image is not None:
        image_rows = split_clip_rows(tube.span, clip_length, sub_spans, len(instance.image.clip_features))

    result = []
    for k, (s, e) in enumerate(sub_spans):
        sub = Tube(f"{tube.tube_id}#{k + 1}", tube.video_id, tube.kind, tube.category,
                   list(tube.entries[s - tube.start_frame:e - tube.start_frame]))
        region = Instance(region_id(sub.tube_id), tube.video_id, SOURCE_TUBE_REGION, (s, e), tube=sub,
                          clip_features=instance.region.clip_features[region_rows[k]])
        image = None
        if image_rows is not None:
            image = Instance(image_id(sub.tube_id), tube.video_id, SOURCE_TUBE_IMAGE, (s, e), tube=sub,
                             clip_features=instance.image.clip_features[image_rows[k]])
        result.append(TubeInstance(tube=sub, region=region, image=image))
    return result


def subdivide_bag(bag: InstanceBag, parts: int, clip_length: int = CLIP_LENGTH) -> InstanceBag:
    """
    Мешок, в котором каждая трубка заменена своими частями, как при выводе.
    Видеолеты не меняются; parts = 1 возвращает мешок как есть.
    """
    if parts < 1:
        raise ValueError(f"Число частей должно быть положительным: {parts}")
    if parts == 1:
        return bag
    tube_instances = [sub for inst in bag.tube_instances
                      for sub in subdivide_tube_instance(inst, parts, clip_length)]
    return InstanceBag(video_id=bag.video_id, label=bag.label, tube_instances=tube_instances,
                       videolet_instances=list(bag.videolet_instances))
