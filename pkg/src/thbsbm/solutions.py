"""Manufactured solutions with hand-derived gradients and forcing terms.

Each solution provides ``u``, ``grad`` and ``f = -laplace(u)`` as numpy
ufunc-compatible callables; correctness of the hard-coded derivatives is
pinned by finite-difference tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: Callable
    grad: Callable  # returns (ux, uy)
    f: Callable     # -laplace(u)
    note: str = ""

    def flux(self, x, y, normal):
        ux, uy = self.grad(x, y)
        return ux * normal[..., 0] + uy * normal[..., 1]


def _coshsin_u(x, y):
    return x * y * np.cosh(x) * np.sin(y)


def _coshsin_grad(x, y):
    ux = y * np.sin(y) * (np.cosh(x) + x * np.sinh(x))
    uy = x * np.cosh(x) * (np.sin(y) + y * np.cos(y))
    return ux, uy


def _coshsin_f(x, y):
    uxx = y * np.sin(y) * (2.0 * np.sinh(x) + x * np.cosh(x))
    uyy = x * np.cosh(x) * (2.0 * np.cos(y) - y * np.sin(y))
    return -(uxx + uyy)


def _peaks_parts(x, y):
    s1 = np.sinh(10.0 * (1 - x) * (1 - y))
    s2 = np.sinh(10.0 * x * y)
    c1 = np.cosh(10.0 * (1 - x) * (1 - y))
    c2 = np.cosh(10.0 * x * y)
    a = x * (1 - x)
    b = y * (1 - y)
    return s1, s2, c1, c2, a, b


def _peaks_u(x, y):
    s1, s2, _, _, a, b = _peaks_parts(x, y)
    return a * b * (s1 + s2) + 10.0 * ((1 - x) ** 2 * (1 - y) ** 2 + x ** 2 * y ** 2)


def _peaks_grad(x, y):
    s1, s2, c1, c2, a, b = _peaks_parts(x, y)
    ux = ((1 - 2 * x) * b * (s1 + s2)
          + a * b * (-10.0 * (1 - y) * c1 + 10.0 * y * c2)
          + 20.0 * (x * y ** 2 - (1 - x) * (1 - y) ** 2))
    uy = ((1 - 2 * y) * a * (s1 + s2)
          + a * b * (-10.0 * (1 - x) * c1 + 10.0 * x * c2)
          + 20.0 * (x ** 2 * y - (1 - x) ** 2 * (1 - y)))
    return ux, uy


def _peaks_f(x, y):
    s1, s2, c1, c2, a, b = _peaks_parts(x, y)
    uxx = (-2.0 * b * (s1 + s2)
           + 2.0 * (1 - 2 * x) * b * (-10.0 * (1 - y) * c1 + 10.0 * y * c2)
           + a * b * (100.0 * (1 - y) ** 2 * s1 + 100.0 * y ** 2 * s2)
           + 20.0 * (y ** 2 + (1 - y) ** 2))
    uyy = (-2.0 * a * (s1 + s2)
           + 2.0 * (1 - 2 * y) * a * (-10.0 * (1 - x) * c1 + 10.0 * x * c2)
           + a * b * (100.0 * (1 - x) ** 2 * s1 + 100.0 * x ** 2 * s2)
           + 20.0 * (x ** 2 + (1 - x) ** 2))
    return -(uxx + uyy)


def _linear_u(x, y):
    return x + 0.0 * y


def _linear_grad(x, y):
    one = np.ones_like(np.asarray(x, dtype=float))
    return one, 0.0 * one


def _linear_f(x, y):
    return 0.0 * np.asarray(x, dtype=float)


SOLUTIONS = {
    "coshsin": ManufacturedSolution(
        "coshsin", _coshsin_u, _coshsin_grad, _coshsin_f,
        note="smooth product of hyperbolic and trigonometric factors"),
    "corner_peaks": ManufacturedSolution(
        "corner_peaks", _peaks_u, _peaks_grad, _peaks_f,
        note="symmetric solution with sharp corner peaks on the unit square"),
    "linear_x": ManufacturedSolution(
        "linear_x", _linear_u, _linear_grad, _linear_f,
        note="harmonic patch-test solution u = x"),
}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise KeyError(f"unknown manufactured solution {name!r}; "
                       f"available: {sorted(SOLUTIONS)}") from None
