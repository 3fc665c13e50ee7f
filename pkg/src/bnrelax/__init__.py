"""Stiff relaxation sources for the seven-equation two-phase flow model."""

__version__ = "0.1.0"
