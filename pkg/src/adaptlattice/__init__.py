"""Adaptive lattice-based motion planning.

Modules:

- ``paramspace``: parameter matrices, polytopes, diameter and projection
- ``dynamics``: models linear in their parameters, RK4, bundled systems
- ``identifier``: multi-model adaptive estimator whose model set only shrinks
- ``tube``: feedback that keeps the true state near a nominal trajectory
- ``primitives``: motion primitive generation and libraries
- ``planner``: tightening, nominal selection and A* over the lattice
- ``scenario``, ``harness``, ``cli``: campaigns on a simulated quadrotor
"""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
