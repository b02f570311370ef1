"""Single-image 3D human digitization: double-sided orthographic normal,
shade-free color and depth prediction, fused into a colored mesh."""

__version__ = "0.1.0"
