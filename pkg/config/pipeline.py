"""
Конфигурация запуска: один JSON-документ поверх значений по умолчанию
из окружения, поверх него флаги командной строки.

Документ:
    {
        "paths": {"detections": ..., "tubes": ..., "features": ..., ...},
        "link": {"lambda_": 0.1, "eta": 2.0, "zeta1": 100, "zeta2": 50},
        "train": {"iterations": 500, "learning_rate": 0.0005, ...},
        "synth": {"positive_videos": 40, ...},
        "seed": 7, "threads": 4, "feature_dim": 4096, ...
    }
"""
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

from config.constants import DEFAULT_EPS_THRESHOLDS, SCORING_DUAL, SCORING_MODES
from config.settings import (
    CLIP_LENGTH, DEFAULT_SEED, DEFAULT_THREADS, FAR_THRESHOLD, FEATURE_DIM, INFERENCE_M, LINK_ETA,
    LINK_LAMBDA, LINK_ZETA1, LINK_ZETA2, TRAIN_ON_SUBTUBES, USE_MULTIVARIATE, VIDEOLET_SEGMENTS,
)
from synthetic.generator import SyntheticSpec
from training.trainer import TrainConfig
from tubes.builder import LinkParams
from utils.exceptions import UsageError

logger = logging.getLogger(__name__)


@dataclass
class PathsConfig:
    """Пути входных и выходных файлов."""
    detections: Optional[str] = None
    tubes: Optional[str] = None
    features: Optional[str] = None
    ground_truth: Optional[str] = None
    scene: Optional[str] = None
    checkpoint: Optional[str] = None
    predictions: Optional[str] = None
    out: Optional[str] = None


@dataclass
class PipelineConfig:
    """Полная конфигурация конвейера."""
    paths: PathsConfig = field(default_factory=PathsConfig)
    link: LinkParams = field(default_factory=lambda: LinkParams(LINK_LAMBDA, LINK_ETA, LINK_ZETA1, LINK_ZETA2))
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    feature_dim: int = FEATURE_DIM
    clip_length: int = CLIP_LENGTH
    videolet_segments: int = VIDEOLET_SEGMENTS
    inference_m: int = INFERENCE_M
    train_on_subtubes: bool = TRAIN_ON_SUBTUBES
    thresholds: Tuple[float, ...] = DEFAULT_EPS_THRESHOLDS
    far_threshold: float = FAR_THRESHOLD
    scoring: str = SCORING_DUAL
    use_multivariate: bool = USE_MULTIVARIATE
    seed: int = DEFAULT_SEED
    threads: int = DEFAULT_THREADS

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['thresholds'] = list(self.thresholds)
        return data

    def validate(self, required: Iterable[str] = ()) -> None:
        """
        Проверяет значения и существование входных файлов.

        Args:
            required: Имена полей paths, которые должны существовать

        Raises:
            UsageError: Неверное значение или отсутствующий путь
        """
        if self.scoring not in SCORING_MODES:
            raise UsageError(f"Неизвестный режим оценки: {self.scoring}")
        if self.threads < 1:
            raise UsageError(f"Число потоков должно быть положительным: {self.threads}")
        if self.inference_m < 1 or self.videolet_segments < 1 or self.clip_length < 1:
            raise UsageError("M, число видеолетов и длина клипа должны быть положительными")
        if any(not 0.0 <= eps < 1.0 for eps in self.thresholds):
            raise UsageError(f"Пороги eps вне [0, 1): {self.thresholds}")
        for name in required:
            value = getattr(self.paths, name)
            if value is None:
                raise UsageError(f"Не задан путь: --{name.replace('_', '-')}")
            if not Path(value).exists():
                raise UsageError(f"Файл не найден: {value}")


_SECTIONS = {'paths': PathsConfig, 'link': LinkParams, 'train': TrainConfig, 'synth': SyntheticSpec}


def _section(cls, current, values: Mapping[str, Any], name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"Неизвестные ключи в разделе '{name}': {sorted(unknown)}")
    try:
        return replace(current, **values)
    except (TypeError, ValueError) as e:
        raise UsageError(f"Некорректный раздел '{name}': {e}") from e


def apply_overrides(config: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """
    Применяет переопределения; ключи вида 'section.key' или 'key'.
    Значения None пропускаются.

    Returns:
        Новая конфигурация
    """
    grouped: Dict[str, Dict[str, Any]] = {}
    top: Dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if '.' in key:
            section, name = key.split('.', 1)
            grouped.setdefault(section, {})[name] = value
        else:
            top[key] = value

    updates: Dict[str, Any] = {}
    for section, values in grouped.items():
        if section not in _SECTIONS:
            raise UsageError(f"Неизвестный раздел конфигурации: {section}")
        updates[section] = _section(_SECTIONS[section], getattr(config, section), values, section)

    known = {f.name for f in fields(PipelineConfig)} - set(_SECTIONS)
    unknown = set(top) - known
    if unknown:
        raise UsageError(f"Неизвестные ключи конфигурации: {sorted(unknown)}")
    if 'thresholds' in top:
        top['thresholds'] = tuple(float(v) for v in top['thresholds'])
    updates.update(top)

    result = replace(config, **updates)
    if 'seed' in top:
        # общее зерно управляет всей случайностью
        result = replace(result,
                         train=replace(result.train, seed=top['seed']),
                         synth=replace(result.synth, seed=top['seed']))
    return result


def flatten(document: Mapping[str, Any]) -> Dict[str, Any]:
    """Документ конфигурации в плоский словарь переопределений."""
    flat: Dict[str, Any] = {}
    for key, value in document.items():
        if key in _SECTIONS:
            if not isinstance(value, Mapping):
                raise UsageError(f"Раздел '{key}' должен быть объектом")
            for name, inner in value.items():
                flat[f"{key}.{name}"] = inner
        else:
            flat[key] = value
    return flat


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """
    Читает конфигурацию из JSON поверх значений по умолчанию.

    Raises:
        UsageError: Файл не найден или содержит неизвестные ключи
    """
    config = PipelineConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise UsageError(f"Файл конфигурации не найден: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}: некорректный JSON: {e.msg}") from e
    if not isinstance(document, dict):
        raise UsageError(f"{path}: конфигурация должна быть JSON-объектом")
    logger.debug(f"[CONFIG] Загружена конфигурация {path}")
    return apply_overrides(config, flatten(document))
