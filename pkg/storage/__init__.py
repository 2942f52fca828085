"""Модели данных и файловые форматы конвейера."""
