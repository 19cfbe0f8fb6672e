"""Compressed-sensing photoacoustic tomography on a circular detector."""
from .expander import MeasurementMatrix, expansion_constants, sample_matrix
from .phantom import DetectorGeometry, Disc, ImageGrid, Phantom, Sinogram, forward_sinogram
from .recon import backproject, compare
from .transforms import apply_filter

__version__ = "0.1.0"

__all__ = [
    "DetectorGeometry",
    "Disc",
    "ImageGrid",
    "MeasurementMatrix",
    "Phantom",
    "Sinogram",
    "apply_filter",
    "backproject",
    "compare",
    "expansion_constants",
    "forward_sinogram",
    "sample_matrix",
]
