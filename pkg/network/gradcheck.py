"""
Проверка градиентов ветви центральными конечными разностями.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from config.constants import BRANCH_TUBE
from network.relation_net import MODE_TRAIN, BranchNet, backward, forward

logger = logging.getLogger(__name__)

STEP = 1e-4
TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    """Максимальные относительные ошибки по тензорам для одного зерна."""
    seed: int
    errors: Dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Относительная ошибка ||a - n|| / max(||a|| + ||n||, 1e-12)."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)


def gradient_check(seed: int, n: int = 3, dim: int = 4, heads: int = 2,
                   hidden1: int = 3, hidden2: int = 2, dropout: float = 0.0) -> GradCheckResult:
    """
    Сравнивает аналитические градиенты с конечными разностями.

    Потеря L = c . p(F) со случайным c; при dropout > 0 маски фиксируются
    из первого прохода.

    Args:
        seed: Зерно генератора
        n: Число экземпляров
        dim: Размерность признака
        heads: Число голов
        hidden1, hidden2: Размеры скрытых слоев
        dropout: Доля dropout

    Returns:
        Ошибки по каждому параметру и по F
    """
    rng = np.random.default_rng(seed)
    net = BranchNet.initialize(BRANCH_TUBE, dim, rng, heads=heads, hidden1=hidden1,
                               hidden2=hidden2, dropout=dropout)
    # ненулевые смещения, чтобы проверить и их градиенты
    for key in ('b1', 'b2', 'b3'):
        net.params[key] = rng.normal(0.0, 0.5, size=net.params[key].shape)
    F = rng.normal(0.0, 1.0, size=(dim, n))
    upstream = rng.normal(0.0, 1.0, size=n)

    _, cache = forward(F, net, MODE_TRAIN, rng=rng)
    masks = cache.masks
    grads, dF = backward(F, net, upstream, cache)

    def loss(features: np.ndarray) -> float:
        scores, _ = forward(features, net, MODE_TRAIN, masks=masks)
        return float(upstream @ scores)

    errors: Dict[str, float] = {}
    for key, value in net.params.items():
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            original = value[idx]
            value[idx] = original + STEP
            plus = loss(F)
            value[idx] = original - STEP
            minus = loss(F)
            value[idx] = original
            numeric[idx] = (plus - minus) / (2 * STEP)
        errors[key] = relative_error(grads[key], numeric)

    numeric_f = np.zeros_like(F)
    for idx in np.ndindex(F.shape):
        shifted = F.copy()
        shifted[idx] += STEP
        plus = loss(shifted)
        shifted[idx] -= 2 * STEP
        minus = loss(shifted)
        numeric_f[idx] = (plus - minus) / (2 * STEP)
    errors['F'] = relative_error(dF, numeric_f)

    return GradCheckResult(seed, errors)


def run_gradcheck(seeds: Sequence[int]) -> List[GradCheckResult]:
    """Запускает проверку для набора зерен и логирует худший результат."""
    results = [gradient_check(seed) for seed in seeds]
    worst = max(results, key=lambda r: r.max_error)
    failed = [r.seed for r in results if not r.passed]
    if failed:
        logger.error(f"[GRADCHECK] ❌ Провалены зерна {failed}, худшая ошибка {worst.max_error:.2e}")
    else:
        logger.info(f"[GRADCHECK] ✅ {len(results)} зерен, худшая ошибка {worst.max_error:.2e}")
    return results
