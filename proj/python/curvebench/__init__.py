"""Decision-boundary curvature analysis for small image classifiers."""

from curvebench._core import *  # noqa: F401,F403
from curvebench._core import __doc__  # noqa: F401

__version__ = "0.1.0"
