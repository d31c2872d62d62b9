"""Certified enclosures of conditioned Lyapunov exponents for the
stochastically perturbed Hopf normal form on an annulus.

The package validates eigenpairs of the backward and forward Kolmogorov
operators with interval arithmetic and a Newton-Kantorovich argument, then
evaluates the modified Furstenberg-Khasminskii average with certified error
bounds.
"""

from .interval import Interval, ComplexInterval

__version__ = "0.1.0"

__all__ = ["Interval", "ComplexInterval", "__version__"]
