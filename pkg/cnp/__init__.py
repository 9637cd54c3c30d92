"""
Convolutional Neural Pyramid Toolkit

Multi-level image-to-image regression networks with adaptive per-level
depth and progressive upsampling, together with receptive-field and cost
analysis, a small reverse-mode autodiff engine and desk-scale training
experiments.
"""

__version__ = "1.0.0"

# Main entry point
from .main import main

__all__ = ['main']
