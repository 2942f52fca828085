"""Синтетический корпус с заложенной аномалией и извлекатель признаков для него."""
