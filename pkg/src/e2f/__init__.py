"""Event-to-frame diffusion toolkit.

Converts asynchronous event streams into 3-channel conditioning volumes,
runs deterministic variance-exploding reverse diffusion with inter-frame
residual guidance and zero-shot interpolation/prediction hooks, and ships a
simulator plus analytic oracles so every formula and the reconstruction
error bound can be verified in closed loop.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
