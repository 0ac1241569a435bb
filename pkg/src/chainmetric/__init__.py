"""Chain metrics d_eps, discrete length metrics and iterates on finite metric samples."""

__version__ = "0.1.0"
