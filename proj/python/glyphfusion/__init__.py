"""Font style interpolation with a conditional diffusion model."""

import torch  # noqa: F401  loads libtorch for the extension

from ._core import (
    DiffusionModel,
    GlyphfusionError,
    StyleEncoder,
    cosine_schedule,
    derive_seed,
    improved_precision_recall,
    ink_fraction,
    interpolate,
    or_blend,
    run_cli,
)

__all__ = [
    "DiffusionModel",
    "GlyphfusionError",
    "StyleEncoder",
    "cosine_schedule",
    "derive_seed",
    "improved_precision_recall",
    "ink_fraction",
    "interpolate",
    "or_blend",
    "run_cli",
]
