"""Experiment runner: configs, seed matrices, CSV traces and SVG plots."""
from .cli import main

__all__ = ["main"]
