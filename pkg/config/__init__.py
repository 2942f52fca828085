"""Модуль конфигурации конвейера."""
