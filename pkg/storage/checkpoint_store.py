"""
Контрольная точка STCK с параметрами обеих ветвей.

Раскладка файла (little-endian):
    4 байта   magic b'STCK'
    u32       version = 1
    u32       длина заголовка в байтах
    заголовок JSON (utf-8): seed, iteration, branches -> {heads, dropout,
              use_attention, tensors: [{name, shape}, ...]}
    тензоры float64 в порядке заголовка: ветвь tube, затем temporal
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from config.constants import BRANCH_TEMPORAL, BRANCH_TUBE, CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from network.relation_net import PARAM_KEYS, BranchNet
from utils.exceptions import DataFormatError

logger = logging.getLogger(__name__)

PREFIX_DTYPE = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('header_len', '<u4'),
])
BRANCH_ORDER = (BRANCH_TUBE, BRANCH_TEMPORAL)


@dataclass
class Checkpoint:
    """Обе ветви вместе с зерном и числом выполненных итераций."""
    nets: Dict[str, BranchNet]
    seed: int
    iteration: int = 0
    extra: Dict = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    """Сохраняет контрольную точку в формате STCK."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        'seed': checkpoint.seed,
        'iteration': checkpoint.iteration,
        'extra': checkpoint.extra,
        'branches': {},
    }
    payload = []
    for name in BRANCH_ORDER:
        net = checkpoint.nets[name]
        header['branches'][name] = {
            'heads': net.heads,
            'dropout': net.dropout,
            'use_attention': net.use_attention,
            'tensors': [{'name': k, 'shape': list(net.params[k].shape)} for k in PARAM_KEYS],
        }
        payload.extend(np.ascontiguousarray(net.params[k], dtype='<f8').tobytes() for k in PARAM_KEYS)

    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    prefix = np.zeros(1, dtype=PREFIX_DTYPE)
    prefix['magic'] = CHECKPOINT_MAGIC
    prefix['version'] = CHECKPOINT_VERSION
    prefix['header_len'] = len(header_bytes)
    with path.open('wb') as fh:
        fh.write(prefix.tobytes())
        fh.write(header_bytes)
        for chunk in payload:
            fh.write(chunk)
    logger.info(f"[IO] Контрольная точка (итерация {checkpoint.iteration}) сохранена в {path}")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Загружает контрольную точку.

    Raises:
        DataFormatError: При неверной сигнатуре, версии или усеченном файле
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < PREFIX_DTYPE.itemsize:
        raise DataFormatError("файл короче заголовка", path=str(path))
    prefix = np.frombuffer(raw[:PREFIX_DTYPE.itemsize], dtype=PREFIX_DTYPE)[0]
    if prefix['magic'] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"неверная сигнатура {prefix['magic']!r}", path=str(path))
    if int(prefix['version']) != CHECKPOINT_VERSION:
        raise DataFormatError(f"неподдерживаемая версия {int(prefix['version'])}", path=str(path))

    offset = PREFIX_DTYPE.itemsize
    header_len = int(prefix['header_len'])
    try:
        header = json.loads(raw[offset:offset + header_len].decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise DataFormatError(f"поврежденный заголовок: {e}", path=str(path)) from e
    offset += header_len

    nets: Dict[str, BranchNet] = {}
    try:
        for name in BRANCH_ORDER:
            spec = header['branches'][name]
            params = {}
            for tensor in spec['tensors']:
                shape = tuple(tensor['shape'])
                size = int(np.prod(shape)) * 8
                if offset + size > len(raw):
                    raise ValueError(f"тензор {name}.{tensor['name']} обрезан")
                params[tensor['name']] = np.frombuffer(raw[offset:offset + size], dtype='<f8').reshape(shape).copy()
                offset += size
            nets[name] = BranchNet(name, params, spec['heads'], spec['dropout'], spec['use_attention'])
    except (KeyError, ValueError, TypeError) as e:
        raise DataFormatError(f"некорректная контрольная точка: {e}", path=str(path)) from e

    if offset != len(raw):
        raise DataFormatError(f"лишние {len(raw) - offset} байт в конце", path=str(path))
    return Checkpoint(nets=nets, seed=int(header['seed']), iteration=int(header['iteration']),
                      extra=header.get('extra', {}))
