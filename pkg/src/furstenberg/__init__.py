"""Numerical laboratory for SL(2) random walks on the projective line.

Submodules: proj2 (exact geometry), model (generator measures), walk
(trajectory Monte Carlo), transfer (circle-grid operator spectra), smoothing
(Fourier-analytic utilities), renewal (level-crossing operators), fourier
(stationary-measure coefficients and phase analysis), cli (front end).
"""

__version__ = "0.1.0"

from . import fourier, model, proj2, renewal, smoothing, transfer, walk  # noqa: F401,E402

__all__ = [
    "__version__", "proj2", "model", "walk", "transfer", "smoothing",
    "renewal", "fourier",
]
