"""Compact matrix groups in Euler-angle charts.

Each group exposes ``element(x)`` mapping a list of coordinate jets (or
arrays) to a nested list of matrix entries, so left-invariant forms can be
differentiated exactly.  SU(2) also has an inverse chart, used to push
tangent vectors through left translations.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dual
from .errors import ArgumentError
from .geometry import Chart, ChartAtlas

__all__ = ["MatrixGroup", "GROUPS", "group_from_name", "su2", "u1", "so3"]


@dataclass(frozen=True)
class MatrixGroup:
    """A matrix group with one chart.

    ``element(x)`` returns a nested ``n x n`` list of entries; ``inverse``
    (optional) maps a batch of group matrices back to chart coordinates,
    accepting jets entrywise.
    """

    name: str
    atlas: ChartAtlas
    size: int
    element: Callable = field(compare=False)
    inverse: Optional[Callable] = field(default=None, compare=False)

    @property
    def dim(self):
        return self.atlas.dim

    def matrix(self, points):
        """Group elements for a batch of chart points, shape (B, n, n)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(dual.assemble(self.element(list(pts.T)), (len(pts),)), dtype=complex)

    def jet(self, points, order=2):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x = dual.variables(pts, order=order)
        g = dual.assemble(self.element(x), (len(pts),))
        if not isinstance(g, dual.Jet):
            g = dual.const(np.asarray(g, dtype=complex), pts.shape[1], order)
        return g


def _su2_element(x):
    theta, phi, psi = x
    c, s = dual.cos(0.5 * theta), dual.sin(0.5 * theta)
    ep = dual.exp(0.5j * (phi + psi))
    em = dual.exp(0.5j * (phi - psi))
    return [[ep * c, em * s], [-dual.conj(em) * s, dual.conj(ep) * c]]


def _su2_inverse(g00, g01):
    """Euler coordinates of [[g00, g01], [., .]] (entries may be jets)."""
    r00 = dual.sqrt(dual.real(g00) ** 2 + dual.imag(g00) ** 2)
    r01 = dual.sqrt(dual.real(g01) ** 2 + dual.imag(g01) ** 2)
    theta = 2.0 * dual.arctan2(r01, r00)
    a = dual.arctan2(dual.imag(g00), dual.real(g00))
    b = dual.arctan2(dual.imag(g01), dual.real(g01))
    phi0, psi0 = a + b, a - b
    # (phi, psi) is defined modulo the lattice spanned by (2pi, 2pi), (2pi, -2pi)
    shift = -2 * np.pi * np.floor(dual.value(phi0) / (2 * np.pi))
    phi = phi0 + shift
    psi = psi0 + shift
    psi = psi - 4 * np.pi * np.floor(dual.value(psi) / (4 * np.pi))
    return [theta, phi, psi]


def su2():
    """SU(2) with g = exp(i phi s3/2) exp(i theta s2/2) exp(i psi s3/2)."""
    atlas = ChartAtlas("su2", (Chart("euler", ((0.0, np.pi), (0.0, 2 * np.pi),
                                               (0.0, 4 * np.pi))),))
    return MatrixGroup("SU(2)", atlas, 2, _su2_element, _su2_inverse)


def u1():
    atlas = ChartAtlas("u1", (Chart("angle", ((0.0, 2 * np.pi),)),))
    return MatrixGroup("U(1)", atlas, 1, lambda x: [[dual.exp(1j * x[0])]])


def _rot(axis, a):
    c, s = dual.cos(a), dual.sin(a)
    if axis == "z":
        return [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    return [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]


def _matmul(a, b):
    n = len(a)
    return [[sum((a[i][k] * b[k][j] for k in range(n)), 0.0) for j in range(n)]
            for i in range(n)]


def so3():
    """SO(3) with zyz Euler angles R = Rz(phi) Ry(theta) Rz(psi)."""
    atlas = ChartAtlas("so3", (Chart("euler", ((0.0, np.pi), (0.0, 2 * np.pi),
                                               (0.0, 2 * np.pi))),))

    def element(x):
        theta, phi, psi = x
        return _matmul(_matmul(_rot("z", phi), _rot("y", theta)), _rot("z", psi))

    return MatrixGroup("SO(3)", atlas, 3, element)


GROUPS = {"SU(2)": su2, "su2": su2, "U(1)": u1, "u1": u1, "SO(3)": so3, "so3": so3}


def group_from_name(name):
    try:
        return GROUPS[name]()
    except KeyError:
        raise ArgumentError(f"unknown group {name!r}; known: SU(2), U(1), SO(3)") from None
