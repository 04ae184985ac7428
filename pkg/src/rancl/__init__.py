"""Learning interaction graphs from time series and detecting agent conflicts."""

from rancl.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
