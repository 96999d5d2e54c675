"""Quadrature helpers: midpoint sums of derivative fields and exact box
integrals of vertex-interpolated densities.

Derivative fields are sampled at cell midpoints, so summing value * volume is
the midpoint rule on the field's own partition.

:class:`SurrogateIntegral` integrates the piecewise-multilinear interpolant of
a density sampled once at grid vertices.  Along each axis the interpolant is
piecewise linear in the hat basis, so the integral from the left edge up to
any point is a weight vector over that axis' vertices; a box integral is the
tensor contraction of the vertex values with per-axis weight *differences*.
Two properties make this the right construction for differentiating integral
functions numerically: the weights of fully covered cells cancel exactly in
the difference (no accumulation of rounding as the box shrinks), and the
surrogate integral is *exact* whenever the density is multilinear on every
cell -- constants, linear forms, and indicators whose boundary lies on grid
lines.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .differentiation import DerivativeField
from .errors import DomainError
from .geometry import GridPartition
from .increment import FuncSource, vertex_values

FILL_LOWER = "lower"
FILL_ZERO = "zero"


def field_quadrature(
    field: DerivativeField,
    *,
    absolute: bool = False,
    fill: str = FILL_LOWER,
) -> float:
    """Midpoint-rule integral of a derivative field over its partition.

    Non-convergent cells contribute according to ``fill``: ``"lower"``
    substitutes the best available lower bound from the Dini brackets (for
    ``absolute=True`` that is ``max(dini_lower, -dini_upper, 0)``), which
    keeps upper-bounding inequalities conservative; ``"zero"`` drops the
    cells entirely (callers doing equality comparisons should exclude the
    same cells from the other side).
    """
    if fill not in (FILL_LOWER, FILL_ZERO):
        raise DomainError(f"unknown fill policy {fill!r}")
    vols = field.cell_volumes
    conv = field.converged
    vals = np.where(conv, field.values, 0.0)
    if absolute:
        vals = np.abs(vals)
    total = math.fsum((vols * vals).ravel(order="C").tolist())
    if fill == FILL_LOWER and field.failed_count:
        lo = field.dini_lower[~conv]
        hi = field.dini_upper[~conv]
        if absolute:
            fills = np.maximum(np.maximum(lo, -hi), 0.0)
        else:
            fills = lo
        total += math.fsum((vols[~conv] * fills).ravel(order="C").tolist())
    return total


class SurrogateIntegral:
    """Exact box integrals of the multilinear interpolant of a density."""

    def __init__(self, density: FuncSource, partition: GridPartition):
        self.partition = partition
        self.density = density
        self.values = vertex_values(density, partition)
        self._axes = [np.asarray(ax, dtype=float) for ax in partition.axes]
        self._widths = [np.diff(ax) for ax in self._axes]
        # _full[d][i] = per-vertex weights of "the first i cells fully
        # covered"; row i extends row i-1, so shared entries are identical
        # floats and cancel exactly in differences.
        self._full = []
        for ax, w in zip(self._axes, self._widths):
            k = len(ax)
            L = np.zeros((k, k))
            for i in range(1, k):
                L[i] = L[i - 1]
                L[i, i - 1] += 0.5 * w[i - 1]
                L[i, i] += 0.5 * w[i - 1]
            self._full.append(L)

    def _axis_weights(self, d: int, x: np.ndarray) -> np.ndarray:
        """Weights turning vertex values into the 1-D integral on [axis lo, x]."""
        ax, w, L = self._axes[d], self._widths[d], self._full[d]
        lo, hi = ax[0], ax[-1]
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        if np.any(x < lo - slack) or np.any(x > hi + slack):
            i = int(np.argmax((x < lo - slack) | (x > hi + slack)))
            raise DomainError(
                f"integration limit {x[i]} outside sampled axis {d} [{lo}, {hi}]"
            )
        xc = np.clip(x, lo, hi)
        i = np.searchsorted(ax, xc, side="right") - 1
        i = np.clip(i, 0, len(ax) - 2)
        lam = np.clip((xc - ax[i]) / w[i], 0.0, 1.0)
        W = L[i].copy()
        rows = np.arange(len(xc))
        W[rows, i] += w[i] * (lam - 0.5 * lam * lam)
        W[rows, i + 1] += w[i] * (0.5 * lam * lam)
        return W

    def box_integral_many(self, a, b, chunk: int = 2048) -> np.ndarray:
        """Integrals of the interpolant over ``[a_j, b_j]`` for row pairs.

        Orientation is signed per axis: a reversed axis flips the sign, so
        the result matches the signed box semantics of increments.
        """
        A = np.atleast_2d(np.asarray(a, dtype=float))
        B = np.atleast_2d(np.asarray(b, dtype=float))
        if A.shape != B.shape or A.shape[1] != self.partition.n:
            raise DomainError("endpoint arrays must both be (m, n)")
        m = A.shape[0]
        out = np.empty(m)
        for s in range(0, m, chunk):
            sl = slice(s, min(m, s + chunk))
            T = None
            for d in range(self.partition.n):
                Wd = self._axis_weights(d, B[sl, d]) - self._axis_weights(d, A[sl, d])
                if T is None:
                    T = np.tensordot(Wd, self.values, axes=(1, 0))
                else:
                    T = np.einsum("mk...,mk->m...", T, Wd)
            out[sl] = T
        return out

    def box_integral(self, a: Sequence[float], b: Sequence[float]) -> float:
        return float(self.box_integral_many([list(a)], [list(b)])[0])

    def cdf_source(self, origin: Sequence[float] | None = None, name: str | None = None) -> FuncSource:
        """The integral function x -> integral of the interpolant on [origin, x]."""
        org = tuple(origin) if origin is not None else self.partition.rect.lo
        if len(org) != self.partition.n:
            raise DomainError("origin dimension does not match the grid")
        return _SurrogateCdf(self, org, name or f"int[{self.density.name}]")


class _SurrogateCdf(FuncSource):
    def __init__(self, surrogate: SurrogateIntegral, origin: tuple[float, ...], name: str):
        self.surrogate = surrogate
        self.origin = np.asarray(origin, dtype=float)
        self.domain = surrogate.partition.rect
        self.name = name

    def __call__(self, point) -> float:
        pts = np.asarray(point, dtype=float)[None, :]
        return float(self.eval_many(pts)[0])

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        A = np.broadcast_to(self.origin, pts.shape)
        return self.surrogate.box_integral_many(A, pts)
