"""ossslab: exact checks and Monte Carlo estimation for decision-tree
variance inequalities on monotonic measures and random-cluster sharpness."""

__version__ = "0.1.0"

from .kernels import backend_name

__all__ = ["backend_name", "__version__"]
