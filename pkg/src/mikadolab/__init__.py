"""Numerical laboratory for a two-branch construction on the periodic 3-torus.

Pipeline: build-data -> build-branches -> verify-residual -> evolve -> report.
"""

__version__ = "0.1.0"
