"""
Потери обучения: ранжирующая с весом от замороженной ветви, перекрестная
энтропия для максимальных экземпляров и их комбинация по фазе.

Все оценки предварительно отсекаются в [eps, 1 - eps].
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

from config.constants import (
    LOSS_CE, LOSS_MG_RANK, LOSS_MG_RANK_CE, LOSS_MODES, LOSS_RANK_CE, SCORE_EPSILON,
)


def _clamp(p: float) -> float:
    return min(max(float(p), SCORE_EPSILON), 1.0 - SCORE_EPSILON)


def _guided_hinge(guide: float, pos: float, neg: float) -> float:
    return max(0.0, guide * (1.0 - pos + neg))


def tube_mg_rank_loss(pv_guide: float, pt_pos: float, pt_neg: float) -> float:
    """
    Ранжирующая потеря трубочной ветви с весом от временной ветви.

    Args:
        pv_guide: Оценка временной ветви для изображения максимальной трубки (константа)
        pt_pos: Оценка максимальной трубки положительного мешка
        pt_neg: Оценка максимальной трубки отрицательного мешка

    Returns:
        max(0, pv_guide * (1 - pt_pos + pt_neg))
    """
    return _guided_hinge(pv_guide, pt_pos, pt_neg)


def temporal_mg_rank_loss(pt_guide: float, pv_pos: float, pv_neg: float) -> float:
    """Симметричная потеря временной ветви: max(0, pt_guide * (1 - pv_pos + pv_neg))."""
    return _guided_hinge(pt_guide, pv_pos, pv_neg)


def branch_cross_entropy(pos: float, neg: float) -> float:
    """Слагаемые перекрестной энтропии одной ветви: -log(pos) - log(1 - neg)."""
    pos, neg = _clamp(pos), _clamp(neg)
    return -math.log(pos) - math.log(1.0 - neg)


def cross_entropy_loss(pt_pos: float, pt_neg: float, pv_pos: float, pv_neg: float) -> float:
    """Полная перекрестная энтропия по обеим ветвям."""
    return branch_cross_entropy(pt_pos, pt_neg) + branch_cross_entropy(pv_pos, pv_neg)


@dataclass(frozen=True)
class PairLoss:
    """Составляющие потери одной пары мешков."""
    tube_rank: float = 0.0
    temporal_rank: float = 0.0
    ce: float = 0.0


def combined_loss(psi: int, pairs: Sequence[PairLoss]) -> float:
    """
    Потеря фазы: psi * rank_tube + (1 - psi) * rank_tem плюс CE активной ветви,
    усредненная по парам.

    Args:
        psi: 1 - обучается трубочная ветвь, 0 - временная
        pairs: Составляющие по парам

    Returns:
        Среднее по парам (0 для пустого списка)
    """
    if psi not in (0, 1):
        raise ValueError(f"psi должно быть 0 или 1: {psi}")
    if not pairs:
        return 0.0
    total = sum(psi * p.tube_rank + (1 - psi) * p.temporal_rank + p.ce for p in pairs)
    return total / len(pairs)


@dataclass(frozen=True)
class PairTerms:
    """Потеря пары для активной ветви и ее производные по двум оценкам."""
    rank: float
    ce: float
    d_pos: float
    d_neg: float

    @property
    def total(self) -> float:
        return self.rank + self.ce


def loss_parts(loss_mode: str) -> Tuple[bool, bool, bool]:
    """
    Разбор режима потерь.

    Returns:
        (есть ранжирующая часть, взвешена ли она направляющей оценкой, есть CE)
    """
    if loss_mode not in LOSS_MODES:
        raise ValueError(f"Неизвестный режим потерь: {loss_mode}")
    use_rank = loss_mode != LOSS_CE
    guided = loss_mode in (LOSS_MG_RANK_CE, LOSS_MG_RANK)
    use_ce = loss_mode in (LOSS_MG_RANK_CE, LOSS_RANK_CE, LOSS_CE)
    return use_rank, guided, use_ce


def pair_terms(guide: float, pos: float, neg: float, loss_mode: str = LOSS_MG_RANK_CE) -> PairTerms:
    """
    Потеря одной пары для обучаемой ветви и градиенты по оценкам
    максимальных экземпляров. Направляющая оценка считается константой.

    Args:
        guide: Оценка замороженной ветви
        pos: Оценка максимального экземпляра положительного мешка
        neg: Оценка максимального экземпляра отрицательного мешка
        loss_mode: Режим потерь

    Returns:
        PairTerms
    """
    use_rank, guided, use_ce = loss_parts(loss_mode)
    pos, neg = _clamp(pos), _clamp(neg)
    weight = guide if guided else 1.0

    rank = d_pos = d_neg = 0.0
    if use_rank:
        rank = _guided_hinge(weight, pos, neg)
        if rank > 0.0:
            d_pos, d_neg = -weight, weight

    ce = 0.0
    if use_ce:
        ce = branch_cross_entropy(pos, neg)
        d_pos -= 1.0 / pos
        d_neg += 1.0 / (1.0 - neg)

    return PairTerms(rank=rank, ce=ce, d_pos=d_pos, d_neg=d_neg)
