"""Simulator of idle-only GC thread scheduling policies and their evaluation."""

__version__ = "0.1.0"
