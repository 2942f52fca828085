"""
Сеть одной ветви: многоголовое самовнимание над признаками экземпляров
видео с остаточной связью и трехслойный предсказатель оценки аномальности.

Признаки видео хранятся по столбцам: F имеет форму (d_k, n).
Проекции головы j: W^Q_j, W^K_j, W^V_j формы (d_k / H, d_k).
После конкатенации голов выходной проекции нет.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config.constants import BRANCH_TEMPORAL, BRANCH_TUBE, SCORE_EPSILON
from config.settings import (
    ATTENTION_HEADS, DROPOUT_RATE, PREDICTOR_HIDDEN1, PREDICTOR_HIDDEN2, USE_ATTENTION,
)

logger = logging.getLogger(__name__)

MODE_TRAIN = 'train'
MODE_EVAL = 'eval'

ATTENTION_KEYS = ('wq', 'wk', 'wv')
PREDICTOR_KEYS = ('w1', 'b1', 'w2', 'b2', 'w3', 'b3')
PARAM_KEYS = ATTENTION_KEYS + PREDICTOR_KEYS


@dataclass
class AttentionParams:
    """Проекции всех голов, массивы формы (H, d_k / H, d_k)."""
    heads: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    def __post_init__(self):
        if self.wq.shape[0] != self.heads:
            raise ValueError(f"Ожидалось {self.heads} голов, получено {self.wq.shape[0]}")
        dim = self.wq.shape[2]
        if dim % self.heads != 0:
            raise ValueError(f"d_k={dim} не делится на H={self.heads}")

    @property
    def head_dim(self) -> int:
        return self.wq.shape[1]

    @classmethod
    def identity(cls, dim: int, heads: int = 1) -> 'AttentionParams':
        """Проекции, вырезающие свой блок координат в каждой голове."""
        dq = dim // heads
        eye = np.eye(dim)
        w = np.stack([eye[j * dq:(j + 1) * dq] for j in range(heads)])
        return cls(heads, w.copy(), w.copy(), w.copy())


@dataclass
class PredictorParams:
    """Три аффинных слоя d_k -> h1 -> h2 -> 1 с ReLU и логистическим выходом."""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    dropout: float = 0.0


@dataclass
class BranchNet:
    """
    Параметры одной ветви (трубочной или временной).

    Attributes:
        branch: 'tube' или 'temporal'
        params: Тензоры по именам (wq, wk, wv, w1, b1, w2, b2, w3, b3)
        heads: Число голов внимания
        dropout: Доля выключаемых нейронов скрытых слоев при обучении
        use_attention: Использовать ли модуль отношений
    """
    branch: str
    params: Dict[str, np.ndarray]
    heads: int = ATTENTION_HEADS
    dropout: float = DROPOUT_RATE
    use_attention: bool = USE_ATTENTION

    def __post_init__(self):
        if self.branch not in (BRANCH_TUBE, BRANCH_TEMPORAL):
            raise ValueError(f"Неизвестная ветвь: {self.branch}")
        missing = [k for k in PARAM_KEYS if k not in self.params]
        if missing:
            raise ValueError(f"Нет параметров: {missing}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"Доля dropout вне [0, 1): {self.dropout}")
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"Параметр {name} содержит нечисловые значения")
        # Проверка согласованности форм
        self.attention

    @property
    def dim(self) -> int:
        return self.params['w1'].shape[1]

    @property
    def hidden(self) -> Tuple[int, int]:
        return self.params['w1'].shape[0], self.params['w2'].shape[0]

    @property
    def attention(self) -> AttentionParams:
        return AttentionParams(self.heads, self.params['wq'], self.params['wk'], self.params['wv'])

    @property
    def predictor(self) -> PredictorParams:
        p = self.params
        return PredictorParams(p['w1'], p['b1'], p['w2'], p['b2'], p['w3'], p['b3'], self.dropout)

    def copy(self) -> 'BranchNet':
        return BranchNet(self.branch, {k: v.copy() for k, v in self.params.items()},
                         self.heads, self.dropout, self.use_attention)

    @classmethod
    def initialize(
        cls,
        branch: str,
        dim: int,
        rng: np.random.Generator,
        heads: int = ATTENTION_HEADS,
        hidden1: int = PREDICTOR_HIDDEN1,
        hidden2: int = PREDICTOR_HIDDEN2,
        dropout: float = DROPOUT_RATE,
        use_attention: bool = USE_ATTENTION,
    ) -> 'BranchNet':
        """
        Создает ветвь со случайными весами: равномерно в ±sqrt(6 / (fan_in + fan_out)),
        смещения нулевые.

        Args:
            branch: 'tube' или 'temporal'
            dim: Размерность признака d_k
            rng: Генератор случайных чисел
            heads: Число голов
            hidden1, hidden2: Размеры скрытых слоев
            dropout: Доля dropout
            use_attention: Использовать ли самовнимание

        Returns:
            Новая ветвь
        """
        if dim % heads != 0:
            raise ValueError(f"d_k={dim} не делится на H={heads}")
        dq = dim // heads

        def glorot(shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=shape)

        params = {
            'wq': glorot((heads, dq, dim), dim, dq),
            'wk': glorot((heads, dq, dim), dim, dq),
            'wv': glorot((heads, dq, dim), dim, dq),
            'w1': glorot((hidden1, dim), dim, hidden1),
            'b1': np.zeros(hidden1),
            'w2': glorot((hidden2, hidden1), hidden1, hidden2),
            'b2': np.zeros(hidden2),
            'w3': glorot((1, hidden2), hidden2, 1),
            'b3': np.zeros(1),
        }
        return cls(branch, params, heads, dropout, use_attention)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Softmax по строкам с вычитанием максимума."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _attention_weights(Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    return softmax_rows(Q.T @ K / np.sqrt(Q.shape[0]))


def scaled_dot_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray) -> np.ndarray:
    """
    Масштабированное скалярное внимание.

    Args:
        Q, K, V: Матрицы формы (d_q, n)

    Returns:
        Softmax(Q^T K / sqrt(d_q)) V^T формы (n, d_q)
    """
    if Q.shape != K.shape or Q.shape != V.shape:
        raise ValueError(f"Формы Q, K, V не совпадают: {Q.shape}, {K.shape}, {V.shape}")
    if Q.shape[1] < 1:
        raise ValueError("Нужен хотя бы один экземпляр")
    return _attention_weights(Q, K) @ V.T


def multi_head_self_attention(F: np.ndarray, params: AttentionParams) -> np.ndarray:
    """
    Многоголовое самовнимание: головы h_j^T складываются по строкам.

    Args:
        F: Признаки формы (d_k, n)
        params: Проекции голов

    Returns:
        Матрица формы (d_k, n)
    """
    if F.ndim != 2 or F.shape[0] != params.wq.shape[2]:
        raise ValueError(f"Форма признаков {F.shape} не согласована с d_k={params.wq.shape[2]}")
    blocks = [
        scaled_dot_attention(params.wq[j] @ F, params.wk[j] @ F, params.wv[j] @ F).T
        for j in range(params.heads)
    ]
    return np.concatenate(blocks, axis=0)


def self_attentive_features(F: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Самовнимание с остаточной связью: g_ma(F, F, F) + F."""
    return multi_head_self_attention(F, params) + F


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ForwardCache:
    """Промежуточные значения прямого прохода для обратного."""
    F: np.ndarray
    heads: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    Ft: Optional[np.ndarray] = None
    z1: Optional[np.ndarray] = None
    a1: Optional[np.ndarray] = None
    z2: Optional[np.ndarray] = None
    a2: Optional[np.ndarray] = None
    mask1: Optional[np.ndarray] = None
    mask2: Optional[np.ndarray] = None
    raw: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None

    @property
    def masks(self) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        return self.mask1, self.mask2


def _dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    # обратный dropout: в режиме eval масштабировать не нужно
    return (rng.random(shape) >= rate).astype(np.float64) / (1.0 - rate)


def forward(
    F: np.ndarray,
    net: BranchNet,
    mode: str = MODE_EVAL,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[Tuple[Optional[np.ndarray], Optional[np.ndarray]]] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Прямой проход ветви с сохранением промежуточных значений.

    Args:
        F: Признаки формы (d_k, n)
        net: Ветвь
        mode: 'train' (с dropout) или 'eval'
        rng: Генератор масок dropout для режима train
        masks: Готовые маски dropout (имеют приоритет над rng)

    Returns:
        Оценки формы (n,) и кэш для обратного прохода
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != net.dim or F.shape[1] < 1:
        raise ValueError(f"Ожидались признаки формы ({net.dim}, n>=1), получено {F.shape}")
    p = net.params
    cache = ForwardCache(F=F)

    if net.use_attention:
        blocks = []
        for j in range(net.heads):
            Q, K, V = p['wq'][j] @ F, p['wk'][j] @ F, p['wv'][j] @ F
            A = _attention_weights(Q, K)
            cache.heads.append((Q, K, V, A))
            blocks.append((A @ V.T).T)
        cache.Ft = np.concatenate(blocks, axis=0) + F
    else:
        cache.Ft = F

    cache.z1 = p['w1'] @ cache.Ft + p['b1'][:, None]
    cache.a1 = np.maximum(cache.z1, 0.0)
    if mode == MODE_TRAIN and net.dropout > 0.0:
        rng = rng if rng is not None else np.random.default_rng()
        if masks is not None:
            cache.mask1, cache.mask2 = masks
        else:
            cache.mask1 = _dropout_mask(cache.a1.shape, net.dropout, rng)
    if cache.mask1 is not None:
        cache.a1 = cache.a1 * cache.mask1

    cache.z2 = p['w2'] @ cache.a1 + p['b2'][:, None]
    cache.a2 = np.maximum(cache.z2, 0.0)
    if mode == MODE_TRAIN and net.dropout > 0.0 and cache.mask2 is None:
        cache.mask2 = _dropout_mask(cache.a2.shape, net.dropout, rng)
    if cache.mask2 is not None:
        cache.a2 = cache.a2 * cache.mask2

    z3 = p['w3'] @ cache.a2 + p['b3'][:, None]
    cache.raw = _sigmoid(z3)[0]
    cache.scores = np.clip(cache.raw, SCORE_EPSILON, 1.0 - SCORE_EPSILON)
    return cache.scores, cache


def predict_scores(
    F: np.ndarray,
    net: BranchNet,
    mode: str = MODE_EVAL,
    rng_seed: Optional[Union[int, np.random.Generator]] = None,
) -> np.ndarray:
    """
    Оценки аномальности экземпляров видео.

    Args:
        F: Признаки формы (d_k, n)
        net: Ветвь
        mode: 'train' или 'eval'
        rng_seed: Зерно или генератор масок dropout (только для train)

    Returns:
        Вектор n оценок строго внутри (0, 1)
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    scores, _ = forward(F, net, mode, rng=rng)
    return scores


def backward(
    F: np.ndarray,
    net: BranchNet,
    upstream: np.ndarray,
    cache: Optional[ForwardCache] = None,
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Точные градиенты скалярной потери по всем параметрам ветви и по F.

    Args:
        F: Признаки формы (d_k, n)
        net: Ветвь
        upstream: Градиент потери по вектору оценок, форма (n,)
        cache: Кэш прямого прохода; без него выполняется проход в режиме eval

    Returns:
        Градиенты параметров по именам и градиент по F
    """
    if cache is None:
        _, cache = forward(F, net, MODE_EVAL)
    p = net.params
    g = np.asarray(upstream, dtype=np.float64).reshape(1, -1)

    # производная отсечения [eps, 1 - eps] равна нулю вне интервала
    inside = ((cache.raw > SCORE_EPSILON) & (cache.raw < 1.0 - SCORE_EPSILON)).astype(np.float64)
    dz3 = g * (cache.raw * (1.0 - cache.raw) * inside)[None, :]

    grads: Dict[str, np.ndarray] = {}
    grads['w3'] = dz3 @ cache.a2.T
    grads['b3'] = dz3.sum(axis=1)

    da2 = p['w3'].T @ dz3
    if cache.mask2 is not None:
        da2 = da2 * cache.mask2
    dz2 = da2 * (cache.z2 > 0.0)
    grads['w2'] = dz2 @ cache.a1.T
    grads['b2'] = dz2.sum(axis=1)

    da1 = p['w2'].T @ dz2
    if cache.mask1 is not None:
        da1 = da1 * cache.mask1
    dz1 = da1 * (cache.z1 > 0.0)
    grads['w1'] = dz1 @ cache.Ft.T
    grads['b1'] = dz1.sum(axis=1)

    dFt = p['w1'].T @ dz1
    dF = dFt.copy()
    for key in ATTENTION_KEYS:
        grads[key] = np.zeros_like(p[key])

    if net.use_attention:
        dq = p['wq'].shape[1]
        scale = np.sqrt(dq)
        for j, (Q, K, V, A) in enumerate(cache.heads):
            dh = dFt[j * dq:(j + 1) * dq].T
            dA = dh @ V
            dV = dh.T @ A
            dS = A * (dA - (dA * A).sum(axis=1, keepdims=True))
            dQ = K @ dS.T / scale
            dK = Q @ dS / scale
            grads['wq'][j] = dQ @ cache.F.T
            grads['wk'][j] = dK @ cache.F.T
            grads['wv'][j] = dV @ cache.F.T
            dF += p['wq'][j].T @ dQ + p['wk'][j].T @ dK + p['wv'][j].T @ dV

    return grads, dF
