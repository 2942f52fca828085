"""
Вывод: выбор лучшей гипотетической трубки видео и оценки видеолетов.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.constants import (
    BRANCH_TEMPORAL, BRANCH_TUBE, SCORING_DUAL, SCORING_MODES, SCORING_RANDOM, SCORING_TEMPORAL, SCORING_TUBE,
)
from config.settings import CLIP_LENGTH, INFERENCE_M
from instances.bank import pool_clip_features, subdivide_tube_instance
from network.relation_net import MODE_EVAL, BranchNet, predict_scores
from storage.models import InstanceBag, TubeInstance, VideoPrediction
from tubes.builder import TubeEntry
from tubes.geometry import Box

logger = logging.getLogger(__name__)


@dataclass
class HypotheticalTube:
    """
    Часть трубки после равномерного деления.

    Attributes:
        parent_id: Родительская трубка
        index: Номер части, с единицы
        entries: Смежный участок записей родителя
        region: Усредненные признаки внутри рамок
        image: Усредненные признаки всего кадра (если есть)
    """
    parent_id: str
    index: int
    entries: List[TubeEntry]
    region: np.ndarray
    image: Optional[np.ndarray] = None

    @property
    def span(self) -> Tuple[int, int]:
        return self.entries[0].frame, self.entries[-1].frame + 1

    def boxes_by_frame(self) -> Dict[int, Box]:
        return {e.frame: e.box for e in self.entries}


def split_hypothetical_tubes(instance: TubeInstance, m: int = INFERENCE_M,
                             clip_length: int = CLIP_LENGTH) -> List[HypotheticalTube]:
    """
    Делит трубку на min(m, длина) смежных частей, остаток первым частям.
    Признаки части - среднее клипов родителя, чей первый кадр лежит в части.

    Args:
        instance: Трубочный экземпляр с признаками
        m: Число частей
        clip_length: Длина клипа

    Returns:
        Части по порядку времени
    """
    return [
        HypotheticalTube(
            parent_id=instance.tube.tube_id,
            index=k + 1,
            entries=list(sub.tube.entries),
            region=pool_clip_features(sub.region.clip_features),
            image=pool_clip_features(sub.image.clip_features) if sub.image is not None else None,
        )
        for k, sub in enumerate(subdivide_tube_instance(instance, m, clip_length))
    ]


def hypothesis_scores(hyps: List[HypotheticalTube], nets: Dict[str, BranchNet],
                      scoring: str = SCORING_DUAL) -> np.ndarray:
    """
    Оценки гипотетических трубок видео; контекст внимания каждой ветви -
    все гипотетические трубки видео.
    """
    p_t = p_v = None
    if scoring in (SCORING_DUAL, SCORING_TUBE):
        R = np.stack([h.region for h in hyps], axis=1)
        p_t = predict_scores(R, nets[BRANCH_TUBE], MODE_EVAL)
    if scoring in (SCORING_DUAL, SCORING_TEMPORAL):
        if any(h.image is None for h in hyps):
            raise ValueError(f"Для оценки '{scoring}' нужны признаки всего кадра")
        G = np.stack([h.image for h in hyps], axis=1)
        p_v = predict_scores(G, nets[BRANCH_TEMPORAL], MODE_EVAL)
    if scoring == SCORING_DUAL:
        return (p_t + p_v) / 2.0
    return p_t if scoring == SCORING_TUBE else p_v


def infer_top_tube(bag: InstanceBag, nets: Dict[str, BranchNet], m: int = INFERENCE_M,
                   clip_length: int = CLIP_LENGTH, scoring: str = SCORING_DUAL,
                   rng: Optional[np.random.Generator] = None) -> Optional[Tuple[HypotheticalTube, float]]:
    """
    Лучшая гипотетическая трубка видео и ее оценка, она же оценка видео.

    Args:
        bag: Мешок видео с признаками трубок
        nets: Обученные ветви
        m: Число частей каждой трубки
        clip_length: Длина клипа
        scoring: dual, tube, temporal или random
        rng: Генератор для scoring='random'

    Returns:
        (часть, оценка) или None, если у видео нет трубок
    """
    if scoring not in SCORING_MODES:
        raise ValueError(f"Неизвестный режим оценки: {scoring}")
    hyps = [h for inst in bag.tube_instances for h in split_hypothetical_tubes(inst, m, clip_length)]
    if not hyps:
        return None

    if scoring == SCORING_RANDOM:
        rng = rng if rng is not None else np.random.default_rng()
        idx = int(rng.integers(0, len(hyps)))
        return hyps[idx], float(rng.random())

    scores = hypothesis_scores(hyps, nets, scoring)
    idx = int(np.argmax(scores))
    return hyps[idx], float(scores[idx])


def predict_video(bag: InstanceBag, nets: Dict[str, BranchNet], m: int = INFERENCE_M,
                  clip_length: int = CLIP_LENGTH, scoring: str = SCORING_DUAL,
                  rng: Optional[np.random.Generator] = None) -> VideoPrediction:
    """Предсказание для видео; без трубок - оценка 0 без локализации."""
    top = infer_top_tube(bag, nets, m, clip_length, scoring, rng)
    if top is None:
        logger.warning(f"[INFER] {bag.video_id}: нет трубок, оценка 0 без локализации")
        return VideoPrediction(video_id=bag.video_id, score=0.0)
    hyp, score = top
    return VideoPrediction(video_id=bag.video_id, score=score, tube_id=hyp.parent_id,
                           sub_index=hyp.index, entries=list(hyp.entries))


def score_segments(bag: InstanceBag, nets: Dict[str, BranchNet]) -> np.ndarray:
    """
    Оценки видеолетов средним двух ветвей; трубочная ветвь оценивает
    видеолеты как трубки.

    Returns:
        Вектор оценок по порядку видеолетов
    """
    if not bag.videolet_instances:
        raise ValueError(f"У видео {bag.video_id} нет видеолетов")
    F = bag.videolet_matrix()
    p_t = predict_scores(F, nets[BRANCH_TUBE], MODE_EVAL)
    p_v = predict_scores(F, nets[BRANCH_TEMPORAL], MODE_EVAL)
    return (p_t + p_v) / 2.0
