"""Сеть ветви: самовнимание, предсказатель оценки, оптимизатор."""
