"""
Чтение и запись файлов JSON Lines: детекции, трубки, разметка, предсказания.

Ошибки разбора сообщаются с номером строки.
"""
import json
import logging
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, TypeVar, Union

from storage.models import GroundTruthRecord, VideoPrediction
from tubes.builder import Tube
from tubes.geometry import Box, ScoredBox
from utils.exceptions import DataFormatError

logger = logging.getLogger(__name__)

T = TypeVar('T')
PathLike = Union[str, Path]


def _read_records(path: PathLike, parse: Callable[[Dict], T]) -> Iterator[T]:
    path = Path(path)
    with path.open('rb') as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                line = raw.decode('utf-8')
                if not line.strip():
                    continue
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise ValueError("ожидался JSON-объект")
                yield parse(data)
            except (ValueError, KeyError, TypeError) as e:
                raise DataFormatError(f"некорректная запись: {e}", path=str(path), line=line_no) from e


def _write_records(path: PathLike, records: Iterable[Dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open('w', encoding='utf-8') as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + '\n')
            count += 1
    return count


def detection_from_record(data: Dict) -> ScoredBox:
    """
    Создает детекцию из записи файла детекций.

    Args:
        data: Словарь с полями video_id, frame, bbox, score, category

    Returns:
        Объект ScoredBox
    """
    frame = data['frame']
    if not isinstance(frame, int) or isinstance(frame, bool):
        raise ValueError(f"frame должен быть целым: {frame!r}")
    return ScoredBox(
        box=Box.from_list(data['bbox']),
        score=float(data['score']),
        category=str(data['category']),
        frame=frame,
        video_id=str(data['video_id']),
    )


def detection_to_record(det: ScoredBox) -> Dict:
    return {
        'video_id': det.video_id,
        'frame': det.frame,
        'bbox': det.box.to_list(),
        'score': det.score,
        'category': det.category,
    }


def load_detections(path: PathLike) -> List[ScoredBox]:
    """Загружает детекции и сортирует их по (video_id, frame)."""
    dets = list(_read_records(path, detection_from_record))
    dets.sort(key=lambda d: (d.video_id, d.frame))
    logger.info(f"[IO] Загружено {len(dets)} детекций из {path}")
    return dets


def save_detections(path: PathLike, dets: Iterable[ScoredBox]) -> int:
    return _write_records(path, (detection_to_record(d) for d in dets))


def load_tubes(path: PathLike) -> List[Tube]:
    tubes = list(_read_records(path, Tube.from_record))
    logger.info(f"[IO] Загружено {len(tubes)} трубок из {path}")
    return tubes


def save_tubes(path: PathLike, tubes: Iterable[Tube]) -> int:
    return _write_records(path, (t.to_record() for t in tubes))


def load_ground_truth(path: PathLike) -> List[GroundTruthRecord]:
    records = list(_read_records(path, GroundTruthRecord.from_record))
    seen = set()
    for record in records:
        if record.video_id in seen:
            raise DataFormatError(f"повторная разметка видео {record.video_id}", path=str(path))
        seen.add(record.video_id)
    return records


def save_ground_truth(path: PathLike, records: Iterable[GroundTruthRecord]) -> int:
    return _write_records(path, (r.to_record() for r in records))


def load_predictions(path: PathLike) -> List[VideoPrediction]:
    return list(_read_records(path, VideoPrediction.from_record))


def save_predictions(path: PathLike, predictions: Iterable[VideoPrediction]) -> int:
    return _write_records(path, (p.to_record() for p in predictions))
