"""Hawkes processes near criticality and their scaling limits."""

from ._core import *  # noqa: F401,F403
