"""Геометрия рамок и построение пространственно-временных трубок."""
