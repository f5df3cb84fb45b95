"""Numerical laboratory for self-shrinking solutions of mean curvature flow.

Subpackages cover the sphere and Grassmannian target geometries of the Gauss
map, immersed-submanifold bookkeeping (second fundamental form, weighted
tension, Gaussian-weighted quadrature), a relaxation solver for the graphic
shrinker system, and certification machinery for the slope-rigidity
inequality with its explicit constants.
"""

__version__ = "0.1.0"
