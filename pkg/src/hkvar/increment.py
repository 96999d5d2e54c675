"""Function sources and joint increments over rectangles.

The joint increment of ``f`` over ``[a, b]`` is the alternating sum of f over
the box corners,

    sum over masks e in {0,1}^n of (-1)**(n + sum(e)) * f(a + e*(b - a)),

equivalently the n-fold nested difference obtained by differencing one
coordinate at a time.  Both forms are implemented; the nested form exists as
an independent cross-check and is deliberately not shared with the corner-sum
code path.

Any degenerate side makes every corner pair off exactly, so the increment of
a rect with ``lo[i] == hi[i]`` is returned as exact ``0.0`` without touching
the function.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EvaluationError
from .geometry import GridPartition, GridSample, Rect, corners


class FuncSource:
    """A real-valued function of n real variables.

    Subclasses provide scalar evaluation via ``__call__`` and may override
    ``eval_many`` with a vectorized implementation.  ``domain`` is advisory:
    derivative probes use it to fit step sizes, but evaluation itself is not
    gated on it (many sources are global formulas).
    """

    name: str = "f"
    domain: Rect | None = None

    def __call__(self, point: Sequence[float]) -> float:  # pragma: no cover
        raise NotImplementedError

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an ``(m, n)`` array of points; default is a loop."""
        pts = np.asarray(points, dtype=float)
        return np.array([self(tuple(p)) for p in pts], dtype=float)


class Oracle(FuncSource):
    """Wraps a plain callable ``fn(x1, ..., xn) -> float``.

    ``batch`` may supply a vectorized form taking an ``(m, n)`` array and
    returning ``(m,)``; grid sweeps use it when present.
    """

    def __init__(
        self,
        fn: Callable[..., float],
        *,
        domain: Rect | None = None,
        batch: Callable[[np.ndarray], np.ndarray] | None = None,
        name: str = "oracle",
    ):
        self._fn = fn
        self._batch = batch
        self.domain = domain
        self.name = name

    def __call__(self, point: Sequence[float]) -> float:
        return float(self._fn(*point))

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self._batch is not None:
            out = np.asarray(self._batch(pts), dtype=float)
            return out.reshape(pts.shape[0])
        return np.array([float(self._fn(*p)) for p in pts], dtype=float)


class Sampled(FuncSource):
    """A function known only through a :class:`GridSample`.

    ``policy="nearest"`` (the default) answers every query with the value at
    the nearest grid vertex, so corner queries are effectively restricted to
    vertices.  ``policy="multilinear"`` opts into multilinear interpolation
    inside cells.  Queries outside the sampled rect raise
    :class:`DomainError`.
    """

    POLICIES = ("nearest", "multilinear")

    def __init__(self, sample: GridSample, policy: str = "nearest", name: str = "sampled"):
        if policy not in self.POLICIES:
            raise DomainError(f"unknown interpolation policy {policy!r}")
        self.sample = sample
        self.policy = policy
        self.domain = sample.partition.rect
        self.name = name

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.eval_many(np.asarray(point, dtype=float)[None, :])[0])

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        part = self.sample.partition
        rect = part.rect
        for d in range(part.n):
            lo, hi = rect.lo[d], rect.hi[d]
            slack = 1e-9 * max(1.0, abs(lo), abs(hi))
            bad = (pts[:, d] < lo - slack) | (pts[:, d] > hi + slack)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise DomainError(
                    f"query point {tuple(pts[i])} outside sampled grid on axis {d}"
                )
        tensor = self.sample.tensor
        if self.policy == "nearest":
            idx = []
            for d in range(part.n):
                ax = np.asarray(part.axes[d])
                j = np.searchsorted(ax, pts[:, d], side="left")
                j = np.clip(j, 0, len(ax) - 1)
                jm = np.clip(j - 1, 0, len(ax) - 1)
                # pick the closer of the two bracketing vertices; ties go low
                pick_lo = np.abs(pts[:, d] - ax[jm]) <= np.abs(ax[j] - pts[:, d])
                idx.append(np.where(pick_lo, jm, j))
            return tensor[tuple(idx)].astype(float)
        # multilinear
        out = np.zeros(pts.shape[0])
        lows, fracs = [], []
        for d in range(part.n):
            ax = np.asarray(part.axes[d])
            j = np.searchsorted(ax, pts[:, d], side="right") - 1
            j = np.clip(j, 0, len(ax) - 2)
            w = ax[j + 1] - ax[j]
            t = np.clip((pts[:, d] - ax[j]) / w, 0.0, 1.0)
            lows.append(j)
            fracs.append(t)
        for mask in range(1 << part.n):
            weight = np.ones(pts.shape[0])
            idx = []
            for d in range(part.n):
                if (mask >> d) & 1:
                    weight = weight * fracs[d]
                    idx.append(lows[d] + 1)
                else:
                    weight = weight * (1.0 - fracs[d])
                    idx.append(lows[d])
            out += weight * tensor[tuple(idx)]
        return out


def corner_values(f: FuncSource, rect: Rect) -> list[tuple[int, tuple[float, ...], float]]:
    """Signed corner evaluations ``(sign, point, value)``; checks finiteness."""
    out = []
    for mask, point in corners(rect):
        v = f(point)
        if not math.isfinite(v):
            raise EvaluationError(
                f"{f.name} returned non-finite value {v!r} at corner {point}", point
            )
        out.append((mask.sign, point, v))
    return out


def joint_increment(f: FuncSource, rect: Rect) -> float:
    """Alternating corner sum of ``f`` over ``rect`` (compensated summation).

    Exact 0.0 on any degenerate rect.
    """
    if rect.is_degenerate():
        return 0.0
    return math.fsum(s * v for s, _, v in corner_values(f, rect))


def joint_increment_recursive(f: FuncSource, rect: Rect) -> float:
    """Nested one-coordinate-at-a-time differences; independent cross-check."""
    if rect.is_degenerate():
        return 0.0
    n = rect.n
    coords: list[float] = [0.0] * n

    def diff(axis: int) -> float:
        if axis < 0:
            v = f(tuple(coords))
            if not math.isfinite(v):
                raise EvaluationError(
                    f"{f.name} returned non-finite value {v!r} at corner {tuple(coords)}",
                    tuple(coords),
                )
            return v
        coords[axis] = rect.hi[axis]
        upper = diff(axis - 1)
        coords[axis] = rect.lo[axis]
        lower = diff(axis - 1)
        return upper - lower

    return diff(n - 1)


def signed_box_increment(f: FuncSource, a: Sequence[float], x: Sequence[float]) -> float:
    """Increment over the oriented box from ``a`` to ``x``.

    Coordinates with ``x[i] < a[i]`` flip the orientation of that axis, which
    flips the sign of the increment once per flipped axis.
    """
    a = tuple(float(t) for t in a)
    x = tuple(float(t) for t in x)
    sign = 1
    lo, hi = [], []
    for ai, xi in zip(a, x):
        if xi >= ai:
            lo.append(ai)
            hi.append(xi)
        else:
            lo.append(xi)
            hi.append(ai)
            sign = -sign
    val = joint_increment(f, Rect(tuple(lo), tuple(hi)))
    return sign * val


class _TildeSource(FuncSource):
    def __init__(self, f: FuncSource, origin: tuple[float, ...]):
        self._f = f
        self.origin = origin
        self.domain = f.domain
        self.name = f"tilde({f.name})"

    def __call__(self, point: Sequence[float]) -> float:
        return signed_box_increment(self._f, self.origin, point)

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[1]
        origin = np.asarray(self.origin, dtype=float)
        if np.any(pts < origin - 1e-15 * np.maximum(1.0, np.abs(origin))):
            return super().eval_many(pts)  # general signed case, scalar path
        total = np.zeros(pts.shape[0])
        for mask in range(1 << n):
            corner = pts.copy()
            bits = 0
            for d in range(n):
                if not (mask >> d) & 1:
                    corner[:, d] = origin[d]
                else:
                    bits += 1
            sign = -1.0 if (n + bits) % 2 else 1.0
            total += sign * self._f.eval_many(corner)
        # a degenerate box has increment exactly 0 regardless of rounding
        degenerate = np.zeros(pts.shape[0], dtype=bool)
        for d in range(n):
            degenerate |= pts[:, d] == origin[d]
        total[degenerate] = 0.0
        return total


def tilde_transform(f: FuncSource, origin: Sequence[float]) -> FuncSource:
    """Anchored-increment transform: ``g(x) = increment of f over [origin, x]``.

    If ``f`` is jointly monotone, ``g`` is monotone in each coordinate
    separately, and ``g`` has the same joint increments as ``f`` over boxes
    anchored at ``origin``.  Values are recomputed per query (no memoization).
    """
    return _TildeSource(f, tuple(float(t) for t in origin))


class _ClampSource(FuncSource):
    def __init__(self, f: FuncSource, rect: Rect):
        self._f = f
        self._rect = rect
        self.domain = None  # defined on all of R^n by construction
        self.name = f"clamp({f.name})"

    def __call__(self, point: Sequence[float]) -> float:
        q = tuple(
            min(max(x, a), b) for x, a, b in zip(point, self._rect.lo, self._rect.hi)
        )
        return self._f(q)

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self._rect.lo)
        hi = np.asarray(self._rect.hi)
        return self._f.eval_many(np.clip(pts, lo, hi))


def clamp_extension(f: FuncSource, rect: Rect) -> FuncSource:
    """Extend ``f`` from ``rect`` to all of R^n by clamping coordinates.

    Points already inside evaluate unchanged (clamping at the boundary is the
    identity, so the <= / < distinction at the edges is immaterial).  The
    extension preserves joint monotonicity and adds no variation.
    """
    return _ClampSource(f, rect)


def vertex_values(f: FuncSource, partition: GridPartition) -> np.ndarray:
    """``f`` on all partition vertices, shaped like the vertex lattice."""
    vals = f.eval_many(partition.vertices())
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(np.asarray(vals))))
        pt = tuple(partition.vertices()[bad])
        raise EvaluationError(f"{f.name} returned non-finite value at {pt}", pt)
    return np.asarray(vals, dtype=float).reshape(partition.shape)


def cell_increments(values: np.ndarray) -> np.ndarray:
    """Per-cell joint increments from a vertex-value tensor.

    Returns an array shaped like the cell lattice.  Equivalent to running
    :func:`joint_increment` on every cell of the partition the values were
    tabulated on (up to last-ulp rounding; the scalar path uses fsum).
    """
    n = values.ndim
    out = np.zeros(tuple(s - 1 for s in values.shape))
    for mask in range(1 << n):
        sl = []
        bits = 0
        for d in range(n):
            if (mask >> d) & 1:
                sl.append(slice(1, None))
                bits += 1
            else:
                sl.append(slice(None, -1))
        sign = -1.0 if (n + bits) % 2 else 1.0
        out += sign * values[tuple(sl)]
    return out


def sample_function(f: FuncSource, partition: GridPartition) -> GridSample:
    """Tabulate ``f`` on a partition's vertices as a :class:`GridSample`."""
    return GridSample(partition, vertex_values(f, partition).ravel(order="C"))
