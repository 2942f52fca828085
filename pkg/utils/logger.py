"""
Настройка логирования для конвейера обнаружения аномалий.

Каждая строка лога помечается подкомандой конвейера (synth, tubes,
extract, train, infer, eval), чтобы в общем файле логов было видно,
какая стадия ее записала.
"""
import logging
import sys
from typing import Optional

LOG_FORMAT = '%(asctime)s - [%(command)s] %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class CommandFilter(logging.Filter):
    """Добавляет в каждую запись имя подкоманды конвейера."""

    def __init__(self, command: str):
        super().__init__()
        self.command = command.upper()

    def filter(self, record: logging.LogRecord) -> bool:
        record.command = self.command
        return True


def setup_logging(level: str = "INFO", log_file: Optional[str] = None, command: str = "stad") -> None:
    """
    Настраивает логирование для всех стадий конвейера.

    Args:
        level: Уровень логирования (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Путь к файлу логов (если указан)
        command: Подкоманда, которой помечаются записи
    """
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    command_filter = CommandFilter(command)

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    # повторный вызов из тестов не дублирует вывод
    root_logger.handlers.clear()

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(command_filter)
        root_logger.addHandler(handler)

    # предупреждения numpy о переполнении попадают в тот же лог
    logging.captureWarnings(True)

    root_logger.debug(f"Логирование настроено на уровень {level}")
