"""
Настройки конвейера по умолчанию из переменных окружения и файла .env.

Все переменные имеют префикс STAD_ (кроме LOG_LEVEL и LOG_FILE).
Некорректное значение не останавливает запуск: берется значение по
умолчанию, а в лог пишется предупреждение с именем переменной.
"""
import logging
import os
from typing import Callable, Optional, TypeVar

from dotenv import load_dotenv

# Загружаем переменные окружения
load_dotenv()

logger = logging.getLogger(__name__)

T = TypeVar('T')

_TRUE = ('true', '1', 'yes', 'on')
_FALSE = ('false', '0', 'no', 'off')


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"ожидалось одно из {_TRUE + _FALSE}")


def read_env(key: str, default: T, parse: Callable[[str], T]) -> T:
    """
    Значение переменной окружения, приведенное функцией parse.

    Пустая или отсутствующая переменная дает default; значение, которое
    parse не принимает, тоже дает default с предупреждением в лог.
    """
    value = os.getenv(key)
    if value is None or not value.strip():
        return default
    try:
        return parse(value.strip())
    except (ValueError, TypeError) as e:
        logger.warning(f"[CONFIG] ⚠️ {key}={value!r} не разобрано ({e}), используется {default!r}")
        return default


def get_env_int(key: str, default: int) -> int:
    return read_env(key, default, int)


def get_env_float(key: str, default: float) -> float:
    return read_env(key, default, float)


def get_env_bool(key: str, default: bool) -> bool:
    return read_env(key, default, _parse_bool)


# Логирование
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
LOG_FILE: Optional[str] = os.getenv('LOG_FILE') or None

# Воспроизводимость и параллелизм
DEFAULT_SEED = get_env_int('STAD_SEED', 7)
DEFAULT_THREADS = get_env_int('STAD_THREADS', 4)

# Признаки и экземпляры
FEATURE_DIM = get_env_int('STAD_FEATURE_DIM', 4096)
CLIP_LENGTH = get_env_int('STAD_CLIP_LENGTH', 16)
VIDEOLET_SEGMENTS = get_env_int('STAD_VIDEOLET_SEGMENTS', 32)
BAG_CAP = get_env_int('STAD_BAG_CAP', 200)

# Связывание трубок
LINK_LAMBDA = get_env_float('STAD_LINK_LAMBDA', 0.1)
LINK_ETA = get_env_float('STAD_LINK_ETA', 2.0)
LINK_ZETA1 = get_env_int('STAD_LINK_ZETA1', 100)
LINK_ZETA2 = get_env_int('STAD_LINK_ZETA2', 50)

# Сеть ветви
ATTENTION_HEADS = get_env_int('STAD_ATTENTION_HEADS', 8)
PREDICTOR_HIDDEN1 = get_env_int('STAD_PREDICTOR_HIDDEN1', 512)
PREDICTOR_HIDDEN2 = get_env_int('STAD_PREDICTOR_HIDDEN2', 32)
DROPOUT_RATE = get_env_float('STAD_DROPOUT_RATE', 0.6)

# Обучение
LEARNING_RATE = get_env_float('STAD_LEARNING_RATE', 5e-4)
BATCH_POSITIVE = get_env_int('STAD_BATCH_POSITIVE', 30)
BATCH_NEGATIVE = get_env_int('STAD_BATCH_NEGATIVE', 30)
TRAIN_ITERATIONS = get_env_int('STAD_TRAIN_ITERATIONS', 500)
LOG_EVERY = get_env_int('STAD_LOG_EVERY', 50)

# Вывод и оценка
INFERENCE_M = get_env_int('STAD_INFERENCE_M', 5)
# трубочная ветвь обучается на тех же частях трубок, что оцениваются при выводе
TRAIN_ON_SUBTUBES = get_env_bool('STAD_TRAIN_ON_SUBTUBES', True)
FAR_THRESHOLD = get_env_float('STAD_FAR_THRESHOLD', 0.2)
USE_MULTIVARIATE = get_env_bool('STAD_USE_MULTIVARIATE', True)
USE_ATTENTION = get_env_bool('STAD_USE_ATTENTION', True)
