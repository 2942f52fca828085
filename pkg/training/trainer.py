"""
Поочередное обучение трубочной и временной ветвей.

Каждая итерация состоит из двух фаз: сначала обучается временная ветвь
(psi = 0) с весами от замороженной трубочной, затем трубочная (psi = 1)
с весами от уже обновленной временной. Положительные и отрицательные
мешки пакета объединяются в пары по позиции.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.constants import BRANCH_TEMPORAL, BRANCH_TUBE, LOSS_MG_RANK_CE, LOSS_MODES
from config.settings import (
    ATTENTION_HEADS, BAG_CAP, BATCH_NEGATIVE, BATCH_POSITIVE, DEFAULT_SEED, DROPOUT_RATE,
    LEARNING_RATE, LOG_EVERY, PREDICTOR_HIDDEN1, PREDICTOR_HIDDEN2, TRAIN_ITERATIONS, USE_ATTENTION,
)
from network.optimizer import Adam
from network.relation_net import MODE_EVAL, MODE_TRAIN, BranchNet, backward, forward, predict_scores
from storage.checkpoint_store import Checkpoint
from storage.models import InstanceBag
from training.losses import pair_terms
from utils.exceptions import EmptyInputError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['iteration', 'phase', 'rank_loss', 'ce_loss', 'total']


@dataclass
class TrainConfig:
    """
    Параметры обучения.

    Attributes:
        learning_rate: Шаг Adam
        beta1, beta2, epsilon: Параметры моментов Adam
        batch_positive, batch_negative: Мешков каждого класса в пакете
        bag_cap: Предел числа экземпляров в мешке
        iterations: Число итераций (каждая содержит обе фазы)
        seed: Зерно инициализации и выборки
        loss_mode: Режим потерь
        weight_decay: L2-коэффициент, по умолчанию выключен
        heads, hidden1, hidden2, dropout, use_attention: Архитектура ветвей
        log_every: Период INFO-сообщений о ходе обучения
    """
    learning_rate: float = LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_positive: int = BATCH_POSITIVE
    batch_negative: int = BATCH_NEGATIVE
    bag_cap: int = BAG_CAP
    iterations: int = TRAIN_ITERATIONS
    seed: int = DEFAULT_SEED
    loss_mode: str = LOSS_MG_RANK_CE
    weight_decay: float = 0.0
    heads: int = ATTENTION_HEADS
    hidden1: int = PREDICTOR_HIDDEN1
    hidden2: int = PREDICTOR_HIDDEN2
    dropout: float = DROPOUT_RATE
    use_attention: bool = USE_ATTENTION
    log_every: int = LOG_EVERY

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"Шаг обучения не может быть отрицательным: {self.learning_rate}")
        if self.batch_positive < 1 or self.batch_negative < 1:
            raise ValueError("Размеры пакета должны быть не меньше 1")
        if self.iterations < 0:
            raise ValueError(f"Число итераций не может быть отрицательным: {self.iterations}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"Неизвестный режим потерь: {self.loss_mode}")

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class MaxInstanceSelection:
    """
    Максимальный экземпляр мешка по оценкам выбирающей ветви.

    Attributes:
        video_id: Видео мешка
        branch: Выбирающая ветвь
        index: Позиция экземпляра в мешке
        instance_id: Идентификатор экземпляра
        score: Оценка выбранного экземпляра
        scores: Оценки всех экземпляров мешка
        guide: Оценка выбранного экземпляра другой ветвью, если считалась
    """
    video_id: str
    branch: str
    index: int
    instance_id: str
    score: float
    scores: np.ndarray
    guide: Optional[float] = None


def argmax_by_id(scores: np.ndarray, ids: Sequence[str]) -> int:
    """Позиция максимума; при равенстве оценок выигрывает меньший идентификатор."""
    best = scores.max()
    tied = [i for i in range(len(scores)) if scores[i] == best]
    return min(tied, key=lambda i: ids[i])


def _branch_inputs(bag: InstanceBag, branch: str) -> Tuple[Optional[np.ndarray], List[str]]:
    if branch == BRANCH_TUBE:
        if not bag.tube_instances:
            return None, []
        return bag.region_matrix(), [t.instance_id for t in bag.tube_instances]
    if not bag.videolet_instances:
        return None, []
    return bag.videolet_matrix(), [v.instance_id for v in bag.videolet_instances]


def select_max_instance(bag: InstanceBag, net: BranchNet) -> Optional[MaxInstanceSelection]:
    """
    Выбирает максимальный экземпляр мешка в режиме eval.

    Трубочная ветвь выбирает среди трубок (признаки внутри рамок),
    временная среди видеолетов; контекст внимания - весь набор мешка.

    Returns:
        Выбор или None, если у мешка нет экземпляров нужного вида
    """
    F, ids = _branch_inputs(bag, net.branch)
    if F is None:
        return None
    scores = predict_scores(F, net, MODE_EVAL)
    idx = argmax_by_id(scores, ids)
    return MaxInstanceSelection(bag.video_id, net.branch, idx, ids[idx], float(scores[idx]), scores)


def tube_guidance(bag: InstanceBag, tube_index: int, temporal: BranchNet) -> float:
    """
    Вес для трубочной потери: оценка временной ветвью признаков всего кадра
    выбранной трубки вместе с видеолетами того же видео.
    """
    column = bag.tube_instances[tube_index].image.pooled[:, None]
    if bag.videolet_instances:
        F = np.concatenate([bag.videolet_matrix(), column], axis=1)
    else:
        F = column
    return float(predict_scores(F, temporal, MODE_EVAL)[-1])


def temporal_guidance(bag: InstanceBag, videolet_index: int, tube: BranchNet) -> float:
    """
    Вес для временной потери: видеолет рассматривается как трубка и
    оценивается трубочной ветвью вместе с трубками того же видео.
    """
    column = bag.videolet_instances[videolet_index].pooled[:, None]
    if bag.tube_instances:
        F = np.concatenate([bag.region_matrix(), column], axis=1)
    else:
        F = column
    return float(predict_scores(F, tube, MODE_EVAL)[-1])


@dataclass
class PhaseResult:
    """Итог одной фазы: средние потери по участвовавшим парам."""
    phase: str
    pairs: int = 0
    rank_loss: float = 0.0
    ce_loss: float = 0.0
    selections: List[Tuple[MaxInstanceSelection, MaxInstanceSelection]] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.rank_loss + self.ce_loss

    @property
    def updated(self) -> bool:
        return self.pairs > 0


@dataclass
class StepResult:
    """Итог итерации: обе фазы."""
    temporal: PhaseResult
    tube: PhaseResult

    @property
    def total(self) -> float:
        return self.temporal.total + self.tube.total


class MGPRTrainer:
    """Тренер двух ветвей с независимыми состояниями Adam."""

    def __init__(self, nets: Dict[str, BranchNet], config: TrainConfig, rng: np.random.Generator):
        """
        Args:
            nets: Ветви по именам 'tube' и 'temporal'
            config: Параметры обучения
            rng: Генератор масок dropout
        """
        self.nets = nets
        self.config = config
        self.rng = rng
        self.optimizers = {
            name: Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon, config.weight_decay)
            for name in (BRANCH_TUBE, BRANCH_TEMPORAL)
        }

    def _score_max(self, bag: InstanceBag, net: BranchNet):
        F, ids = _branch_inputs(bag, net.branch)
        scores, cache = forward(F, net, MODE_TRAIN, rng=self.rng)
        idx = argmax_by_id(scores, ids)
        selection = MaxInstanceSelection(bag.video_id, net.branch, idx, ids[idx], float(scores[idx]), scores)
        return F, cache, selection

    def _run_phase(self, branch: str, pairs: List[Tuple[InstanceBag, InstanceBag]]) -> PhaseResult:
        net = self.nets[branch]
        result = PhaseResult(phase=branch)
        grad_sum = {k: np.zeros_like(v) for k, v in net.params.items()}

        for pos_bag, neg_bag in pairs:
            F_pos, cache_pos, sel_pos = self._score_max(pos_bag, net)
            F_neg, cache_neg, sel_neg = self._score_max(neg_bag, net)

            # направляющий вес от замороженной ветви, без градиента
            if branch == BRANCH_TEMPORAL:
                guide = temporal_guidance(pos_bag, sel_pos.index, self.nets[BRANCH_TUBE])
            else:
                guide = tube_guidance(pos_bag, sel_pos.index, self.nets[BRANCH_TEMPORAL])
            sel_pos.guide = guide

            terms = pair_terms(guide, sel_pos.score, sel_neg.score, self.config.loss_mode)
            result.rank_loss += terms.rank
            result.ce_loss += terms.ce
            result.pairs += 1
            result.selections.append((sel_pos, sel_neg))

            for F, cache, sel, d in ((F_pos, cache_pos, sel_pos, terms.d_pos),
                                     (F_neg, cache_neg, sel_neg, terms.d_neg)):
                upstream = np.zeros(F.shape[1])
                upstream[sel.index] = d
                grads, _ = backward(F, net, upstream, cache)
                for key in grad_sum:
                    grad_sum[key] += grads[key]

        if result.pairs == 0:
            logger.debug(f"[TRAIN] Фаза {branch}: нет пар, шаг пропущен")
            return result

        result.rank_loss /= result.pairs
        result.ce_loss /= result.pairs
        grads = {k: v / result.pairs for k, v in grad_sum.items()}
        self.optimizers[branch].step(net.params, grads)
        return result

    def phase_temporal(self, positives: Sequence[InstanceBag], negatives: Sequence[InstanceBag]) -> PhaseResult:
        """Фаза psi = 0: обновляется только временная ветвь."""
        pairs = [(p, n) for p, n in zip(positives, negatives)
                 if p.videolet_instances and n.videolet_instances]
        return self._run_phase(BRANCH_TEMPORAL, pairs)

    def phase_tube(self, positives: Sequence[InstanceBag], negatives: Sequence[InstanceBag]) -> PhaseResult:
        """Фаза psi = 1: обновляется только трубочная ветвь."""
        pairs = [(p, n) for p, n in zip(positives, negatives)
                 if p.tube_instances and n.tube_instances
                 and all(t.image is not None for t in p.tube_instances)]
        return self._run_phase(BRANCH_TUBE, pairs)

    def train_step(self, positives: Sequence[InstanceBag], negatives: Sequence[InstanceBag]) -> StepResult:
        """
        Одна итерация: временная фаза, затем трубочная.

        Args:
            positives: Положительные мешки пакета
            negatives: Отрицательные мешки пакета

        Returns:
            Потери обеих фаз

        Raises:
            ValueError: Пустой пакет
        """
        if not positives or not negatives:
            raise ValueError("Пакет должен содержать положительные и отрицательные мешки")
        temporal = self.phase_temporal(positives, negatives)
        tube = self.phase_tube(positives, negatives)
        return StepResult(temporal=temporal, tube=tube)


def initialize_nets(dim: int, config: TrainConfig) -> Dict[str, BranchNet]:
    """Ветви в начальном состоянии, детерминированно по config.seed."""
    rng = np.random.default_rng(config.seed)
    return {
        name: BranchNet.initialize(name, dim, rng, heads=config.heads, hidden1=config.hidden1,
                                   hidden2=config.hidden2, dropout=config.dropout,
                                   use_attention=config.use_attention)
        for name in (BRANCH_TUBE, BRANCH_TEMPORAL)
    }


@dataclass
class TrainResult:
    """Итог обучения: контрольная точка и журнал потерь."""
    checkpoint: Checkpoint
    trace: pd.DataFrame


def _feature_dim(bags: Sequence[InstanceBag]) -> int:
    for bag in bags:
        if bag.videolet_instances:
            return bag.videolet_instances[0].clip_features.shape[1]
        if bag.tube_instances:
            return bag.tube_instances[0].region.clip_features.shape[1]
    raise EmptyInputError("В мешках нет ни одного экземпляра")


def train(dataset: Sequence[InstanceBag], config: TrainConfig) -> TrainResult:
    """
    Обучает обе ветви на мешках с выборкой с возвращением.

    Args:
        dataset: Мешки обучающей части
        config: Параметры обучения

    Returns:
        Контрольная точка и журнал потерь (по строке на фазу итерации)

    Raises:
        EmptyInputError: Нет положительных или отрицательных видео
    """
    positives = [b for b in dataset if b.is_positive]
    negatives = [b for b in dataset if not b.is_positive]
    if not positives or not negatives:
        raise EmptyInputError(
            f"Для обучения нужны оба класса: положительных {len(positives)}, отрицательных {len(negatives)}"
        )

    dim = _feature_dim(dataset)
    nets = initialize_nets(dim, config)
    sampler = np.random.default_rng([config.seed, 1])
    trainer = MGPRTrainer(nets, config, np.random.default_rng([config.seed, 2]))
    logger.info(f"[TRAIN] Старт: {len(positives)} положительных и {len(negatives)} отрицательных мешков, "
                f"d_k={dim}, итераций {config.iterations}, режим {config.loss_mode}")

    rows: List[Dict] = []
    for iteration in range(1, config.iterations + 1):
        pos_idx = sampler.integers(0, len(positives), size=config.batch_positive)
        neg_idx = sampler.integers(0, len(negatives), size=config.batch_negative)
        step = trainer.train_step([positives[i] for i in pos_idx], [negatives[i] for i in neg_idx])

        for phase in (step.temporal, step.tube):
            rows.append({
                'iteration': iteration,
                'phase': phase.phase,
                'rank_loss': phase.rank_loss,
                'ce_loss': phase.ce_loss,
                'total': phase.total,
            })
        logger.debug(f"[TRAIN] {iteration}: temporal={step.temporal.total:.6f} tube={step.tube.total:.6f}")
        if config.log_every and iteration % config.log_every == 0:
            logger.info(f"[TRAIN] Итерация {iteration}/{config.iterations}: "
                        f"потеря временной {step.temporal.total:.4f}, трубочной {step.tube.total:.4f}")

    checkpoint = Checkpoint(
        nets=nets,
        seed=config.seed,
        iteration=config.iterations,
        extra={'loss_mode': config.loss_mode, 'dim': dim},
    )
    logger.info(f"[TRAIN] ✅ Завершено {config.iterations} итераций")
    return TrainResult(checkpoint=checkpoint, trace=pd.DataFrame(rows, columns=TRACE_COLUMNS))


def save_loss_trace(path: Union[str, Path], trace: pd.DataFrame) -> None:
    """Записывает журнал потерь в CSV."""
    trace.to_csv(path, index=False, float_format='%.10g')
