"""Вспомогательные утилиты: логирование и иерархия ошибок."""
