"""Модуль воркеров для параллельной обработки видео по стадиям."""
from .statistics_manager import StatisticsManager
from .video_worker import VideoStageWorker

__all__ = ['StatisticsManager', 'VideoStageWorker']
