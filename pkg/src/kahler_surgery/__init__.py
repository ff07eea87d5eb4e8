"""Minimal-model schedules for surfaces and the U(n)-symmetric Kahler-Ricci flow through a surgical contraction."""

__version__ = "0.1.0"
