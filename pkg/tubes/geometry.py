"""
Арифметика выровненных по осям рамок.

Координаты непрерывные, площадь считается как (x2 - x1) * (y2 - y1)
без поправки на пиксель.
"""
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple


@dataclass(frozen=True)
class Box:
    """
    Выровненная по осям рамка в пикселях.

    Attributes:
        x1, y1: Левый верхний угол
        x2, y2: Правый нижний угол
    """
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"Некорректная рамка: {self.to_list()}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> 'Box':
        """
        Создает рамку из списка [x1, y1, x2, y2].

        Raises:
            ValueError: Если координат не четыре или порядок нарушен
        """
        if len(values) != 4:
            raise ValueError(f"Ожидалось 4 координаты, получено {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class ScoredBox:
    """
    Детекция: рамка с оценкой и категорией в одном кадре видео.

    Attributes:
        box: Рамка
        score: Уверенность детектора в [0, 1]
        category: Метка категории
        frame: Индекс кадра
        video_id: Идентификатор видео
    """
    box: Box
    score: float
    category: str
    frame: int
    video_id: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"Оценка детекции вне [0, 1]: {self.score}")
        if self.frame < 0:
            raise ValueError(f"Отрицательный индекс кадра: {self.frame}")

    @property
    def sort_key(self) -> Tuple:
        """Полный порядок: оценка по убыванию, затем (frame, x1, y1, x2, y2, category)."""
        b = self.box
        return (-self.score, self.frame, b.x1, b.y1, b.x2, b.y2, self.category)


def iou(a: Box, b: Box) -> float:
    """
    Считает intersection-over-union двух рамок.

    Args:
        a: Первая рамка
        b: Вторая рамка

    Returns:
        Отношение площади пересечения к площади объединения; 0 при нулевом объединении
    """
    inter_w = min(a.x2, b.x2) - max(a.x1, b.x1)
    inter_h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def union_box(boxes: Iterable[Box]) -> Box:
    """
    Минимальная рамка, охватывающая все входные.

    Raises:
        ValueError: Если список пуст
    """
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union_box: пустой список рамок")
    return Box(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )
