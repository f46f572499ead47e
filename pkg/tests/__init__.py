"""Test package for kgspec."""
