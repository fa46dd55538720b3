"""Standard normal CDF and quantiles.

Everything here works in tail form so that ``1 - Phi(x)`` is never formed by
subtraction. Quantile naming follows two conventions used side by side:

* ``norm_ppf(p)`` is the lower quantile, ``Phi^{-1}(p)``.
* ``upper_quantile(p)`` is ``z`` with ``P(Z > z) = p``, i.e. ``Phi^{-1}(1 - p)``.
"""

import numpy as np
from scipy.special import ndtr, ndtri


def norm_cdf(x):
    return ndtr(x)


def norm_sf(x):
    """``1 - Phi(x)`` without cancellation."""
    return ndtr(np.negative(x))


def norm_ppf(p):
    return ndtri(p)


def upper_quantile(p):
    """Upper-tail quantile ``Phi^{-1}(1 - p)``, accurate for tiny ``p``."""
    return -ndtri(p)
