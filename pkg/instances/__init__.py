"""Экземпляры MIL и сборка мешков."""
