"""
Менеджер статистики стадий конвейера и сводок метрик.
"""
import logging
from datetime import datetime
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)


class StatisticsManager:
    """Собирает статистику стадий и печатает отчеты фиксированной ширины."""

    def __init__(self, command: str):
        """
        Args:
            command: Подкоманда, для которой собирается отчет
        """
        self.command = command
        self.workers: List = []
        self.counters: Dict[str, float] = {}

    def register_worker(self, worker):
        """
        Регистрирует воркер стадии для отчета.

        Args:
            worker: Экземпляр VideoStageWorker
        """
        self.workers.append(worker)
        logger.debug(f"Зарегистрирован воркер стадии {worker.stage}")

    def add_counter(self, name: str, value: float):
        self.counters[name] = value

    def print_status_report(self):
        """Выводит отчет о стадиях и счетчиках."""
        current_time = datetime.now().strftime('%Y-%m-%d %H:%M:%S')

        print(f"\n{'=' * 80}")
        print(f"ОТЧЕТ: {self.command.upper()} | Время: {current_time}")
        print(f"{'=' * 80}")

        if self.workers:
            print(f"{'Стадия':>12} | {'Видео':>8} | {'Ошибок':>8} | {'Потоков':>8} | {'Время, с':>10} | {'Статус':>12}")
            print(f"{'-' * 80}")
            for worker in self.workers:
                stats = worker.get_stats()
                status = "🔴 Ошибки" if stats['items_failed'] else "🟢 Готово"
                print(f"{stats['stage'].upper():>12} | "
                      f"{stats['items_done']:>8} | "
                      f"{stats['items_failed']:>8} | "
                      f"{stats['threads']:>8} | "
                      f"{stats['duration']:>10.2f} | "
                      f"{status:>12}")

        if self.counters:
            print(f"\n{'Показатель':>24} | {'Значение':>14}")
            print(f"{'-' * 42}")
            for name, value in self.counters.items():
                print(f"{name:>24} | {_format_value(value):>14}")

        print(f"{'=' * 80}\n")

    def print_metrics_report(self, metrics: Dict[str, Optional[float]], iou_at: Dict[str, float]):
        """Выводит таблицу метрик оценки."""
        print(f"\n{'=' * 60}")
        print(f"{'Метрика':>24} | {'Значение':>14}")
        print(f"{'-' * 60}")
        for name, value in metrics.items():
            print(f"{name:>24} | {_format_value(value):>14}")
        for eps, pct in iou_at.items():
            print(f"{'IoU@' + eps:>24} | {pct:>13.2f}%")
        print(f"{'=' * 60}\n")


def _format_value(value: Optional[float]) -> str:
    if value is None:
        return '—'
    if isinstance(value, int):
        return f"{value:,}"
    return f"{value:.4f}"
