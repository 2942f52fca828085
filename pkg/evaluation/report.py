"""
Отчет об оценке: строки по видео и сводные метрики, запись в JSON и CSV.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Union

import pandas as pd

from config.constants import DEFAULT_EPS_THRESHOLDS
from config.settings import FAR_THRESHOLD
from evaluation.metrics import FrameScoring, auc, false_alarm_rate, frame_level_auc, localization_metrics, s_loc
from storage.models import GroundTruthRecord, GroundTruthTube, VideoPrediction

logger = logging.getLogger(__name__)


@dataclass
class VideoResult:
    """Строка отчета по одному видео."""
    video_id: str
    label: str
    score: float
    tube_id: Optional[str]
    sub_index: Optional[int]
    localized: bool
    s_loc: Optional[float] = None


@dataclass
class EvalReport:
    """
    Итог оценки.

    Attributes:
        videos: Строки по видео в порядке идентификаторов
        vauc: AUC по оценкам видео
        iou_at: Процент аномальных видео с S_loc > eps, ключ - eps строкой
        miou: Средний S_loc аномальных видео
        frame_auc: AUC по кадрам, если посчитан
        false_alarm_rate: Доля нормальных видео с оценкой выше порога
        far_threshold: Порог доли ложных тревог
        unlocalized: Видео без трубок
        baseline: Метрики локализации случайного выбора, если посчитаны
        config: Параметры запуска
    """
    videos: List[VideoResult] = field(default_factory=list)
    vauc: Optional[float] = None
    iou_at: Dict[str, float] = field(default_factory=dict)
    miou: Optional[float] = None
    frame_auc: Optional[float] = None
    false_alarm_rate: Optional[float] = None
    far_threshold: float = FAR_THRESHOLD
    unlocalized: List[str] = field(default_factory=list)
    baseline: Optional[Dict] = None
    config: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'EvalReport':
        data = dict(data)
        data['videos'] = [VideoResult(**row) for row in data.get('videos', [])]
        return cls(**data)


def _eps_key(eps: float) -> str:
    return f"{eps:g}"


def localization_table(predictions: Mapping[str, VideoPrediction], truths: Sequence[GroundTruthRecord],
                       detector_frames: Mapping[str, Set[int]],
                       thresholds: Sequence[float]) -> Dict:
    """IoU@eps и MIoU по аномальным видео; видео без предсказания дает 0."""
    values = []
    for gt in truths:
        pred = predictions.get(gt.video_id)
        tube = GroundTruthTube(gt.video_id, gt.entries, set(detector_frames.get(gt.video_id, ())))
        values.append(s_loc(tube, pred) if pred is not None else 0.0)
    table, miou = localization_metrics(values, thresholds)
    return {'iou_at': {_eps_key(k): v for k, v in table.items()}, 'miou': miou}


def build_report(
    predictions: Sequence[VideoPrediction],
    truths: Sequence[GroundTruthRecord],
    detector_frames: Mapping[str, Set[int]],
    thresholds: Sequence[float] = DEFAULT_EPS_THRESHOLDS,
    far_threshold: float = FAR_THRESHOLD,
    frame_scorings: Optional[Sequence[FrameScoring]] = None,
    baseline: Optional[Sequence[VideoPrediction]] = None,
    config: Optional[Dict] = None,
) -> EvalReport:
    """
    Собирает отчет по тестовым видео.

    Args:
        predictions: Предсказания по видео
        truths: Разметка тех же видео
        detector_frames: Кадры с рамками детектора по видео
        thresholds: Пороги eps для IoU@eps
        far_threshold: Порог доли ложных тревог
        frame_scorings: Покадровые оценки для AUC по кадрам
        baseline: Предсказания случайного выбора
        config: Параметры запуска для отчета

    Returns:
        EvalReport
    """
    by_video = {p.video_id: p for p in predictions}
    report = EvalReport(far_threshold=far_threshold, config=dict(config or {}))

    abnormal = [gt for gt in truths if gt.is_abnormal]
    normal = [gt for gt in truths if not gt.is_abnormal]

    for gt in sorted(truths, key=lambda g: g.video_id):
        pred = by_video.get(gt.video_id) or VideoPrediction(video_id=gt.video_id, score=0.0)
        value = None
        if gt.is_abnormal:
            tube = GroundTruthTube(gt.video_id, gt.entries, set(detector_frames.get(gt.video_id, ())))
            value = s_loc(tube, pred)
        report.videos.append(VideoResult(gt.video_id, gt.label, pred.score, pred.tube_id,
                                         pred.sub_index, pred.localized, value))
        if not pred.localized:
            report.unlocalized.append(gt.video_id)

    scores = {row.video_id: row.score for row in report.videos}
    if abnormal and normal:
        report.vauc = auc([scores[g.video_id] for g in abnormal], [scores[g.video_id] for g in normal])
    else:
        logger.warning("[EVAL] Нет одного из классов, VAUC не считается")

    if abnormal:
        table = localization_table(by_video, abnormal, detector_frames, thresholds)
        report.iou_at, report.miou = table['iou_at'], table['miou']
        if baseline is not None:
            report.baseline = localization_table({p.video_id: p for p in baseline}, abnormal,
                                                 detector_frames, thresholds)

    if normal:
        report.false_alarm_rate = false_alarm_rate([scores[g.video_id] for g in normal], far_threshold)

    if frame_scorings:
        try:
            report.frame_auc = frame_level_auc(frame_scorings)
        except ValueError as e:
            logger.warning(f"[EVAL] AUC по кадрам не посчитан: {e}")

    logger.info(f"[EVAL] Видео: {len(report.videos)}, VAUC={report.vauc}, MIoU={report.miou}, "
                f"FAR={report.false_alarm_rate}")
    return report


def save_report(path: Union[str, Path], report: EvalReport) -> None:
    """Записывает отчет в JSON с упорядоченными ключами."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + '\n',
                    encoding='utf-8')


def load_report(path: Union[str, Path]) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


def export_csv(path: Union[str, Path], report: EvalReport) -> None:
    """Плоская выгрузка строк по видео."""
    frame = pd.DataFrame([asdict(row) for row in report.videos],
                         columns=['video_id', 'label', 'score', 'tube_id', 'sub_index', 'localized', 's_loc'])
    frame.to_csv(path, index=False)
