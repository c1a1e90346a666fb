"""Hierarchical steering networks on a simulated five-zone track."""

from ._hiersteer import *  # noqa: F401,F403
from ._hiersteer import __doc__  # noqa: F401
