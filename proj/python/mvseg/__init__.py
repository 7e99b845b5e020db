"""Multi-view consistent RGB-D semantic segmentation primitives."""

from ._mvseg import *  # noqa: F401,F403
from ._mvseg import __doc__  # noqa: F401
