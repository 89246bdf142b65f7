"""Field-level simulation-based inference with wavelet scattering summaries."""

__version__ = "0.1.0"
