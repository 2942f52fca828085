"""
Метрики оценки: локализация S_loc, AUC на уровне видео и кадров,
IoU@eps, средний IoU и доля ложных тревог.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from sklearn.metrics import roc_auc_score

from storage.models import GroundTruthTube
from tubes.geometry import iou


def s_loc(gt: GroundTruthTube, pred) -> float:
    """
    Пространственно-временная локализация: средний по кадрам IoU на
    множестве кадров, где у детектора есть рамки и хотя бы у одной из
    трубок есть рамка. Кадр, где рамки нет у одной из трубок, дает 0.

    Args:
        gt: Эталонная трубка с кадрами детектора
        pred: Предсказанная трубка (любой объект с boxes_by_frame())

    Returns:
        Значение в [0, 1]; 0 при пустом множестве кадров
    """
    gt_boxes = gt.boxes_by_frame()
    pred_boxes = pred.boxes_by_frame()
    frames = gt.detector_frames & (set(gt_boxes) | set(pred_boxes))
    if not frames:
        return 0.0
    total = 0.0
    for f in frames:
        if f in gt_boxes and f in pred_boxes:
            total += iou(gt_boxes[f], pred_boxes[f])
    return total / len(frames)


def auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """
    Площадь под ROC-кривой; совпадает со статистикой Манна-Уитни
    (равенства считаются за половину).

    Raises:
        ValueError: Пустой список одного из классов
    """
    if len(pos_scores) == 0 or len(neg_scores) == 0:
        raise ValueError("Для AUC нужны оценки обоих классов")
    labels = np.concatenate([np.ones(len(pos_scores)), np.zeros(len(neg_scores))])
    scores = np.concatenate([np.asarray(pos_scores, dtype=np.float64), np.asarray(neg_scores, dtype=np.float64)])
    return float(roc_auc_score(labels, scores))


def localization_metrics(values: Sequence[float],
                         thresholds: Sequence[float]) -> Tuple[Dict[float, float], float]:
    """
    IoU@eps в процентах (строго больше eps) и средний S_loc.

    Args:
        values: S_loc аномальных тестовых видео
        thresholds: Пороги eps

    Returns:
        ({eps: процент}, MIoU)
    """
    if len(values) == 0:
        raise ValueError("Нет видео для метрик локализации")
    arr = np.asarray(values, dtype=np.float64)
    table = {float(eps): float(100.0 * np.count_nonzero(arr > eps) / len(arr)) for eps in thresholds}
    return table, float(arr.mean())


@dataclass
class FrameScoring:
    """
    Покадровые данные видео для AUC по кадрам.

    Attributes:
        video_id: Идентификатор видео
        frame_count: Число кадров
        spans: Отрезки видеолетов
        scores: Оценки видеолетов
        abnormal_frames: Кадры с аномалией (None - разметки нет)
        abnormal: Метка видео
    """
    video_id: str
    frame_count: int
    spans: List[Tuple[int, int]]
    scores: np.ndarray
    abnormal_frames: Optional[Set[int]]
    abnormal: bool

    def frame_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Оценки, размноженные по кадрам, и метки кадров."""
        if self.abnormal_frames is None and self.abnormal:
            raise ValueError(f"Нет покадровой разметки для аномального видео {self.video_id}")
        frame_scores = np.zeros(self.frame_count)
        for (s, e), score in zip(self.spans, self.scores):
            frame_scores[s:e] = score
        labels = np.zeros(self.frame_count)
        for f in self.abnormal_frames or ():
            if 0 <= f < self.frame_count:
                labels[f] = 1.0
        return frame_scores, labels


def frame_level_auc(videos: Sequence[FrameScoring]) -> float:
    """
    AUC по всем кадрам всех тестовых видео.

    Raises:
        ValueError: Нет разметки или среди кадров только один класс
    """
    if not videos:
        raise ValueError("Нет видео для покадрового AUC")
    scores, labels = zip(*(v.frame_arrays() for v in videos))
    scores, labels = np.concatenate(scores), np.concatenate(labels)
    return auc(scores[labels == 1.0], scores[labels == 0.0])


def false_alarm_rate(scores: Sequence[float], threshold: float = 0.2) -> float:
    """
    Доля нормальных видео, чья оценка лучшей трубки превышает порог.

    Raises:
        ValueError: Пустой список
    """
    if len(scores) == 0:
        raise ValueError("Нет нормальных видео для доли ложных тревог")
    arr = np.asarray(scores, dtype=np.float64)
    return float(np.count_nonzero(arr > threshold) / len(arr))
