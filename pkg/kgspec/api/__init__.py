"""HTTP API for the kgspec lab."""

from .main import app

__all__ = ['app']
