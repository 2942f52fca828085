"""Вывод лучшей трубки и метрики оценки."""
