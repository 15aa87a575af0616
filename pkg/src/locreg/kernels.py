"""Kernel functions for the local-polynomial smoother.

A kernel carries, next to its point evaluation, the two functionals that the
plug-in bandwidth constant needs: the squared L2 norm and the absolute moment
s -> integral |K(v)| |v|^s dv.  Supports must be contained in [-1, 1].
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Kernel:
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    l2_norm_sq: float
    abs_moment: Callable[[float], float]

    def __post_init__(self):
        # spot-check the declared support and nonnegativity on a coarse grid
        outside = self.evaluate(np.array([-1.5, 1.5, -1.0001, 1.0001, 2.0]))
        if np.any(outside != 0.0):
            raise DataError(f"kernel {self.name!r} has support outside [-1, 1]")
        inside = self.evaluate(np.linspace(-1, 1, 41))
        if np.any(inside < 0.0):
            raise DataError(f"kernel {self.name!r} takes negative values")


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def epanechnikov() -> Kernel:
    """K(t) = (3/4)(1 - t^2) on [-1, 1]; ||K||^2 = 3/5, moment(s) = 3/((s+1)(s+3))."""
    return Kernel(
        name="epanechnikov",
        evaluate=_epanechnikov,
        l2_norm_sq=0.6,
        abs_moment=lambda s: 3.0 / ((s + 1.0) * (s + 3.0)),
    )


EPANECHNIKOV = epanechnikov()


def get_kernel(name: str) -> Kernel:
    if name == "epanechnikov":
        return EPANECHNIKOV
    raise DataError(f"unknown kernel {name!r}")
