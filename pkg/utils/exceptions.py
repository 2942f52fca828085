"""
Ошибки конвейера и их соответствие кодам выхода CLI.
"""
from typing import Optional


class PipelineError(Exception):
    """Базовая ошибка конвейера."""

    exit_code = 2


class UsageError(PipelineError):
    """Неверные аргументы командной строки или конфигурации."""

    exit_code = 1


class DataFormatError(PipelineError):
    """
    Некорректный входной файл.

    Attributes:
        path: Путь к файлу
        line: Номер строки (с единицы), если ошибка привязана к строке
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class MissingFeatureError(DataFormatError):
    """Для экземпляра нет обязательной дорожки признаков."""


class EmptyInputError(PipelineError):
    """Вход пуст там, где требуется хотя бы один элемент."""
