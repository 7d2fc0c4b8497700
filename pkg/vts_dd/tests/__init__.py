"""Тесты пакета vts_dd."""
