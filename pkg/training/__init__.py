"""Обучение двух ветвей со взаимно направляемыми ранжирующими потерями."""
