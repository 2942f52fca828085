"""
Построение унарных и многовариантных трубок из покадровых детекций.

Оба алгоритма жадные: затравка берется с максимальной оценкой среди
еще не связанных рамок, затем цепочка растет вперед, потом назад,
по одному кадру за шаг. Связанные рамки удаляются из пула, даже если
цепочка отброшена порогом длины.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from config.constants import TUBE_KINDS, TUBE_MULTIVARIATE, TUBE_UNARY
from config.settings import LINK_ETA, LINK_LAMBDA, LINK_ZETA1, LINK_ZETA2
from tubes.geometry import Box, ScoredBox, iou, union_box

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinkParams:
    """
    Параметры связывания.

    Attributes:
        lambda_: Порог IoU для связывания, в [0, 1)
        eta: Вес IoU в оценке связывания
        zeta1: Минимальная длина унарной трубки в кадрах
        zeta2: Минимальная длина многовариантной трубки в кадрах
    """
    lambda_: float = LINK_LAMBDA
    eta: float = LINK_ETA
    zeta1: int = LINK_ZETA1
    zeta2: int = LINK_ZETA2

    def __post_init__(self):
        if not 0.0 <= self.lambda_ < 1.0:
            raise ValueError(f"lambda должен быть в [0, 1): {self.lambda_}")
        if self.eta < 0:
            raise ValueError(f"eta должен быть неотрицательным: {self.eta}")
        if self.zeta1 < 1 or self.zeta2 < 1:
            raise ValueError(f"Пороги длины должны быть >= 1: {self.zeta1}, {self.zeta2}")


@dataclass(frozen=True)
class TubeEntry:
    """Рамка трубки в одном кадре."""
    frame: int
    box: Box


@dataclass
class Tube:
    """
    Пространственно-временная трубка.

    Attributes:
        tube_id: Идентификатор трубки
        video_id: Идентификатор видео
        kind: 'unary' или 'multivariate'
        category: Категория (только для унарных)
        entries: Записи по кадрам, кадры идут подряд без пропусков
        member_boxes: Для каждой записи детекции, из которых она составлена
    """
    tube_id: str
    video_id: str
    kind: str
    category: Optional[str]
    entries: List[TubeEntry]
    member_boxes: List[List[ScoredBox]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in TUBE_KINDS:
            raise ValueError(f"Неизвестный вид трубки: {self.kind}")
        if not self.entries:
            raise ValueError(f"Трубка {self.tube_id} без записей")
        frames = [e.frame for e in self.entries]
        if any(b - a != 1 for a, b in zip(frames, frames[1:])):
            raise ValueError(f"Кадры трубки {self.tube_id} не идут подряд")

    @property
    def start_frame(self) -> int:
        return self.entries[0].frame

    @property
    def end_frame(self) -> int:
        """Первый кадр после трубки."""
        return self.entries[-1].frame + 1

    @property
    def span(self) -> Tuple[int, int]:
        return self.start_frame, self.end_frame

    def __len__(self) -> int:
        return len(self.entries)

    def boxes_by_frame(self) -> Dict[int, Box]:
        return {e.frame: e.box for e in self.entries}

    def to_record(self) -> Dict:
        """Преобразует трубку в запись JSON Lines."""
        return {
            'tube_id': self.tube_id,
            'video_id': self.video_id,
            'kind': self.kind,
            'category': self.category,
            'entries': [{'frame': e.frame, 'bbox': e.box.to_list()} for e in self.entries],
        }

    @classmethod
    def from_record(cls, data: Dict) -> 'Tube':
        """
        Создает трубку из записи JSON Lines.

        Args:
            data: Словарь с полями tube_id, video_id, kind, category, entries

        Returns:
            Объект Tube (без member_boxes)
        """
        entries = [TubeEntry(int(e['frame']), Box.from_list(e['bbox'])) for e in data['entries']]
        return cls(
            tube_id=str(data['tube_id']),
            video_id=str(data['video_id']),
            kind=data['kind'],
            category=data.get('category'),
            entries=entries,
        )


def linking_score(bi: ScoredBox, bj: ScoredBox, params: LinkParams) -> float:
    """
    Оценка связывания двух рамок соседних кадров.

    Returns:
        S(Bi) + S(Bj) + eta * IoU(Bi, Bj), если IoU > lambda, иначе 0
    """
    overlap = iou(bi.box, bj.box)
    if overlap > params.lambda_:
        return bi.score + bj.score + params.eta * overlap
    return 0.0


class _DetectionPool:
    """Пул несвязанных детекций одного видео с упорядочиванием по sort_key."""

    def __init__(self, dets: Iterable[ScoredBox]):
        self.order: List[ScoredBox] = sorted(dets, key=lambda d: d.sort_key)
        self.alive: List[bool] = [True] * len(self.order)
        self.remaining = len(self.order)
        self.by_frame: Dict[int, List[int]] = defaultdict(list)
        for idx, det in enumerate(self.order):
            self.by_frame[det.frame].append(idx)
        self._cursor = 0

    def __bool__(self) -> bool:
        return self.remaining > 0

    def pop_best(self) -> int:
        while not self.alive[self._cursor]:
            self._cursor += 1
        self.remove(self._cursor)
        return self._cursor

    def remove(self, idx: int) -> None:
        self.alive[idx] = False
        self.remaining -= 1

    def frame(self, frame: int) -> List[int]:
        """Живые детекции кадра в порядке sort_key."""
        return [i for i in self.by_frame.get(frame, ()) if self.alive[i]]


def _best_link(pool: _DetectionPool, current: ScoredBox, frame: int, params: LinkParams) -> Optional[int]:
    best_idx, best_score = None, 0.0
    for idx in pool.frame(frame):
        candidate = pool.order[idx]
        if iou(current.box, candidate.box) <= params.lambda_:
            continue
        score = linking_score(current, candidate, params)
        # строгое сравнение: при равенстве выигрывает раньший по sort_key
        if best_idx is None or score > best_score:
            best_idx, best_score = idx, score
    return best_idx


def _group_by_video(dets: Iterable[ScoredBox]) -> Dict[str, List[ScoredBox]]:
    grouped: Dict[str, List[ScoredBox]] = defaultdict(list)
    for det in dets:
        grouped[det.video_id].append(det)
    return grouped


def build_unary_tubes(dets: Sequence[ScoredBox], params: LinkParams) -> List[Tube]:
    """
    Строит унарные трубки: по каждой категории жадно связывает рамки
    по максимальной оценке связывания.

    Args:
        dets: Детекции (могут относиться к нескольким видео)
        params: Параметры связывания

    Returns:
        Трубки длиной не меньше zeta1 в порядке построения
    """
    tubes: List[Tube] = []
    for video_id, video_dets in sorted(_group_by_video(dets).items()):
        by_category: Dict[str, List[ScoredBox]] = defaultdict(list)
        for det in video_dets:
            by_category[det.category].append(det)

        counter = 0
        for category in sorted(by_category):
            pool = _DetectionPool(by_category[category])
            while pool:
                seed_idx = pool.pop_best()
                seed = pool.order[seed_idx]
                chain = {seed.frame: seed}

                # Прямое связывание
                current, t = seed, seed.frame
                while True:
                    nxt = _best_link(pool, current, t + 1, params)
                    if nxt is None:
                        break
                    pool.remove(nxt)
                    current, t = pool.order[nxt], t + 1
                    chain[t] = current

                # Обратное связывание
                current, t = seed, seed.frame
                while True:
                    prev = _best_link(pool, current, t - 1, params)
                    if prev is None:
                        break
                    pool.remove(prev)
                    current, t = pool.order[prev], t - 1
                    chain[t] = current

                if len(chain) >= params.zeta1:
                    frames = sorted(chain)
                    tubes.append(Tube(
                        tube_id=f"{video_id}:u{counter:04d}",
                        video_id=video_id,
                        kind=TUBE_UNARY,
                        category=category,
                        entries=[TubeEntry(f, chain[f].box) for f in frames],
                        member_boxes=[[chain[f]] for f in frames],
                    ))
                    counter += 1

        logger.debug(f"[TUBES] {video_id}: унарных трубок {counter}")
    return tubes


def _grow_cluster(pool: _DetectionPool, cluster: List[ScoredBox], frame: int, params: LinkParams) -> List[int]:
    members = []
    for idx in pool.frame(frame):
        candidate = pool.order[idx]
        if any(iou(d.box, candidate.box) > params.lambda_ for d in cluster):
            members.append(idx)
    return members


def build_multivariate_tubes(dets: Sequence[ScoredBox], params: LinkParams) -> List[Tube]:
    """
    Строит многовариантные трубки: кластеры пересекающихся рамок любых
    категорий, объединенные в одну рамку на кадр.

    Args:
        dets: Детекции (могут относиться к нескольким видео)
        params: Параметры связывания

    Returns:
        Трубки длиной не меньше zeta2 в порядке построения
    """
    tubes: List[Tube] = []
    for video_id, video_dets in sorted(_group_by_video(dets).items()):
        pool = _DetectionPool(video_dets)
        counter = 0
        while pool:
            seed_idx = pool.pop_best()
            seed = pool.order[seed_idx]

            # Кластер кадра затравки: только прямые соседи затравки, без транзитивности
            seed_cluster = [seed]
            for idx in pool.frame(seed.frame):
                if iou(seed.box, pool.order[idx].box) > params.lambda_:
                    pool.remove(idx)
                    seed_cluster.append(pool.order[idx])
            clusters: Dict[int, List[ScoredBox]] = {seed.frame: seed_cluster}

            for step in (1, -1):
                t = seed.frame
                while True:
                    members = _grow_cluster(pool, clusters[t], t + step, params)
                    if not members:
                        break
                    for idx in members:
                        pool.remove(idx)
                    t += step
                    clusters[t] = [pool.order[idx] for idx in members]

            if len(clusters) >= params.zeta2:
                frames = sorted(clusters)
                tubes.append(Tube(
                    tube_id=f"{video_id}:m{counter:04d}",
                    video_id=video_id,
                    kind=TUBE_MULTIVARIATE,
                    category=None,
                    entries=[TubeEntry(f, union_box(d.box for d in clusters[f])) for f in frames],
                    member_boxes=[sorted(clusters[f], key=lambda d: d.sort_key) for f in frames],
                ))
                counter += 1

        logger.debug(f"[TUBES] {video_id}: многовариантных трубок {counter}")
    return tubes


def build_video_tubes(dets: Sequence[ScoredBox], params: LinkParams,
                      use_multivariate: bool = True) -> List[Tube]:
    """
    Строит все трубки видео: сначала унарные, затем многовариантные.

    Args:
        dets: Детекции одного или нескольких видео
        params: Параметры связывания
        use_multivariate: Строить ли многовариантные трубки

    Returns:
        Список трубок
    """
    tubes = build_unary_tubes(dets, params)
    if use_multivariate:
        tubes.extend(build_multivariate_tubes(dets, params))
    return tubes
