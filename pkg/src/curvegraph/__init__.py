"""
Curvature-dimension inequalities, heat kernels and derived geometric
estimates on finite weighted graphs.

Submodules: ``graph``, ``operators``, ``curvature``, ``heat``,
``estimates``, ``positive`` and ``cli``. The package root stays free of
heavy imports so the command line can cap thread pools first.
"""

__version__ = "0.1.0"
