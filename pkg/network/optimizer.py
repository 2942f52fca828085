"""
Оптимизатор адаптивных моментов с поправкой смещения.

У каждой ветви свой экземпляр: состояния ветвей не пересекаются.
"""
from typing import Dict

import numpy as np


class Adam:
    """Adam над словарем параметров; параметры обновляются на месте."""

    def __init__(self, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8, weight_decay: float = 0.0):
        """
        Args:
            lr: Шаг обучения
            beta1, beta2: Коэффициенты затухания первого и второго моментов
            epsilon: Добавка в знаменатель
            weight_decay: L2-коэффициент, добавляемый к градиенту
        """
        if lr < 0:
            raise ValueError(f"Шаг обучения не может быть отрицательным: {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """
        Выполняет один шаг оптимизации.

        Args:
            params: Параметры по именам (изменяются на месте)
            grads: Градиенты по тем же именам
        """
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        for key in sorted(params):
            g = grads[key]
            if self.weight_decay:
                g = g + self.weight_decay * params[key]

            if key not in self.m:
                self.m[key] = np.zeros_like(params[key])
                self.v[key] = np.zeros_like(params[key])

            self.m[key] *= self.beta1
            self.m[key] += (1.0 - self.beta1) * g
            self.v[key] *= self.beta2
            self.v[key] += (1.0 - self.beta2) * (g * g)

            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
