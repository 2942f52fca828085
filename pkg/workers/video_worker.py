"""
Воркер стадии конвейера: параллельная обработка видео.

Каждое видео обрабатывается в отдельном потоке через asyncio.to_thread,
число одновременных задач ограничено семафором. Результаты возвращаются
в порядке входа, поэтому вывод не зависит от числа потоков.
"""
import asyncio
import logging
import time
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

from config.settings import DEFAULT_THREADS

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


class VideoStageWorker:
    """Воркер одной стадии (трубки, признаки, вывод) над списком видео."""

    def __init__(self, stage: str, fn: Callable[[T], R], threads: int = DEFAULT_THREADS,
                 describe: Optional[Callable[[T], str]] = None):
        """
        Args:
            stage: Название стадии для логов и отчета
            fn: Обработка одного элемента
            threads: Предельное число одновременных задач
            describe: Подпись элемента для сообщений об ошибках
        """
        if threads < 1:
            raise ValueError(f"Число потоков должно быть положительным: {threads}")
        self.stage = stage
        self.fn = fn
        self.threads = threads
        self.describe = describe or str
        self.semaphore: Optional[asyncio.Semaphore] = None
        self.items_done = 0
        self.items_failed = 0
        self.duration = 0.0
        self.is_running = False

    async def process_item(self, item: T) -> R:
        """Обрабатывает один элемент под семафором."""
        async with self.semaphore:
            return await asyncio.to_thread(self.fn, item)

    async def run_async(self, items: Sequence[T]) -> List[R]:
        self.semaphore = asyncio.Semaphore(self.threads)
        tasks = [self.process_item(item) for item in items]
        results = await asyncio.gather(*tasks, return_exceptions=True)

        first_error: Optional[BaseException] = None
        output: List[R] = []
        for item, result in zip(items, results):
            if isinstance(result, BaseException):
                self.items_failed += 1
                logger.error(f"[{self.stage.upper()}] ❌ Ошибка обработки {self.describe(item)}: {result}")
                if first_error is None:
                    first_error = result
                continue
            self.items_done += 1
            output.append(result)
        if first_error is not None:
            raise first_error
        return output

    def run(self, items: Sequence[T]) -> List[R]:
        """
        Обрабатывает все элементы и возвращает результаты в порядке входа.

        Raises:
            Exception: Первая ошибка среди элементов (после обработки всех)
        """
        self.is_running = True
        start = time.monotonic()
        logger.info(f"[{self.stage.upper()}] 🔄 {len(items)} видео, потоков {self.threads}")
        try:
            if self.threads == 1:
                output = []
                for item in items:
                    try:
                        output.append(self.fn(item))
                    except Exception as e:
                        self.items_failed += 1
                        logger.error(f"[{self.stage.upper()}] ❌ Ошибка обработки {self.describe(item)}: {e}")
                        raise
                    self.items_done += 1
                return output
            return asyncio.run(self.run_async(items))
        finally:
            self.duration = time.monotonic() - start
            self.is_running = False
            logger.info(f"[{self.stage.upper()}] ✅ Готово за {self.duration:.1f}с | "
                        f"успешно: {self.items_done} | ошибок: {self.items_failed}")

    def get_stats(self) -> Dict:
        return {
            'stage': self.stage,
            'items_done': self.items_done,
            'items_failed': self.items_failed,
            'threads': self.threads,
            'duration': self.duration,
            'is_running': self.is_running,
        }
