"""
Simulation core: potentials, integrators, propagators and experiment wiring
"""

__version__ = "0.3.0"
