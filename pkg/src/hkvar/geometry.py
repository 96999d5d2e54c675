"""Axis-aligned rectangles, grid partitions, and corner bookkeeping.

Everything downstream (increments, variation, derivative fields) is built on
three small value types:

* :class:`Rect` -- a closed axis-aligned box ``[lo, hi]`` in n dimensions,
* :class:`GridPartition` -- a tensor-product partition of a rect into cells,
* :class:`GridSample` -- function values tabulated on a partition's vertices.

Corner enumeration follows binary counting order with the *first* axis as the
least significant bit, so in 2-D the corners of ``[a, b]`` come out as
``(a1,a2), (b1,a2), (a1,b2), (b1,b2)``.  Grid vertices and sub-rectangles use
row-major (C) order instead: the *last* axis varies fastest.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

#: Hard limit on dimension; an increment costs 2**n corner evaluations.
MAX_DIM = 12


def _as_float_tuple(xs) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class Rect:
    """Closed box ``[lo1,hi1] x ... x [lon,hin]``.  Degenerate sides allowed."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_float_tuple(self.lo))
        object.__setattr__(self, "hi", _as_float_tuple(self.hi))
        if len(self.lo) != len(self.hi):
            raise DomainError("lo and hi must have the same length")
        n = len(self.lo)
        if n < 1:
            raise DomainError("rectangle needs at least one dimension")
        if n > MAX_DIM:
            raise DomainError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
        for a, b in zip(self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise DomainError("rectangle bounds must be finite")
            if a > b:
                raise DomainError(f"lower bound {a} exceeds upper bound {b}")

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return math.prod(self.sides)

    def is_degenerate(self) -> bool:
        """True when some side has zero length."""
        return any(a == b for a, b in zip(self.lo, self.hi))

    def contains(self, point, *, eps: float = 0.0) -> bool:
        if len(point) != self.n:
            return False
        for x, a, b in zip(point, self.lo, self.hi):
            slack = eps * max(1.0, abs(a), abs(b))
            if x < a - slack or x > b + slack:
                return False
        return True

    def corner(self, bits) -> tuple[float, ...]:
        """Corner selected by a 0/1 mask (1 picks ``hi`` on that axis)."""
        return tuple(b if s else a for s, a, b in zip(bits, self.lo, self.hi))


@dataclass(frozen=True)
class CornerMask:
    """Selects one corner of a rect: ``bits[i] == 1`` means the upper end."""

    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if not self.bits:
            raise DomainError("corner mask needs at least one bit")
        if any(b not in (0, 1) for b in self.bits):
            raise DomainError("corner mask bits must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def sign(self) -> int:
        """Alternating-sum sign ``(-1)**(n + sum(bits))``."""
        return -1 if (self.n + sum(self.bits)) % 2 else 1


@dataclass(frozen=True)
class QuadrantSign:
    """Direction pattern for a one-sided derivative probe, entries +-1."""

    dirs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dirs", tuple(int(d) for d in self.dirs))
        if not self.dirs:
            raise DomainError("quadrant needs at least one direction")
        if any(d not in (-1, 1) for d in self.dirs):
            raise DomainError("quadrant directions must be -1 or +1")

    @property
    def n(self) -> int:
        return len(self.dirs)

    @classmethod
    def positive(cls, n: int) -> "QuadrantSign":
        return cls((1,) * n)

    @classmethod
    def from_string(cls, text: str) -> "QuadrantSign":
        """Parse forms like ``"+-"``, ``"+,-"`` or ``"pm"``."""
        dirs = []
        for ch in text.replace(",", "").strip():
            if ch in "+pP":
                dirs.append(1)
            elif ch in "-mM":
                dirs.append(-1)
            else:
                raise DomainError(f"bad quadrant character {ch!r}")
        return cls(tuple(dirs))

    def __str__(self) -> str:
        return "".join("+" if d > 0 else "-" for d in self.dirs)


def corners(rect: Rect) -> list[tuple[CornerMask, tuple[float, ...]]]:
    """All 2**n corners of ``rect`` with their alternating-sum signs.

    Binary counting order, first axis least significant.  The signs sum to
    zero, which is what makes increments of additively separable functions
    vanish identically.
    """
    out = []
    n = rect.n
    for m in range(1 << n):
        bits = tuple((m >> i) & 1 for i in range(n))
        mask = CornerMask(bits)
        out.append((mask, rect.corner(bits)))
    return out


@dataclass(frozen=True)
class GridPartition:
    """Tensor-product partition given by strictly increasing breakpoints."""

    axes: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        axes = tuple(_as_float_tuple(ax) for ax in self.axes)
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise DomainError("partition needs at least one axis")
        if len(axes) > MAX_DIM:
            raise DomainError(f"dimension {len(axes)} exceeds supported maximum {MAX_DIM}")
        for ax in axes:
            if len(ax) < 2:
                raise DomainError("each axis needs at least two breakpoints")
            if any(not math.isfinite(t) for t in ax):
                raise DomainError("breakpoints must be finite")
            if any(u >= v for u, v in zip(ax, ax[1:])):
                raise DomainError("breakpoints must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def rect(self) -> Rect:
        return Rect(tuple(ax[0] for ax in self.axes), tuple(ax[-1] for ax in self.axes))

    @property
    def shape(self) -> tuple[int, ...]:
        """Vertex counts per axis."""
        return tuple(len(ax) for ax in self.axes)

    @property
    def cells_shape(self) -> tuple[int, ...]:
        return tuple(len(ax) - 1 for ax in self.axes)

    @property
    def cell_count(self) -> int:
        return math.prod(self.cells_shape)

    @property
    def vertex_count(self) -> int:
        return math.prod(self.shape)

    @classmethod
    def uniform(cls, rect: Rect, cells) -> "GridPartition":
        """Uniform partition with ``cells`` cells per axis (int or per-axis)."""
        if isinstance(cells, int):
            cells = (cells,) * rect.n
        cells = tuple(int(c) for c in cells)
        if len(cells) != rect.n:
            raise DomainError("one cell count per axis required")
        if any(c < 1 for c in cells):
            raise DomainError("cell counts must be >= 1")
        axes = []
        for a, b, c in zip(rect.lo, rect.hi, cells):
            if a == b:
                raise DomainError("cannot partition a degenerate side")
            ax = np.linspace(a, b, c + 1)
            ax[0], ax[-1] = a, b  # endpoints exact
            axes.append(tuple(float(t) for t in ax))
        return cls(tuple(axes))

    def cell(self, index: tuple[int, ...]) -> Rect:
        lo = tuple(ax[i] for ax, i in zip(self.axes, index))
        hi = tuple(ax[i + 1] for ax, i in zip(self.axes, index))
        return Rect(lo, hi)

    def vertices(self) -> np.ndarray:
        """All vertices as an ``(vertex_count, n)`` array in row-major order."""
        grids = np.meshgrid(*[np.asarray(ax) for ax in self.axes], indexing="ij")
        return np.stack([g.ravel(order="C") for g in grids], axis=-1)


def refine(partition: GridPartition, point) -> GridPartition:
    """Insert ``point``'s coordinates as breakpoints (no-op where present).

    Raises :class:`DomainError` if the point lies outside the partition's
    rect.  Inserting an existing breakpoint is idempotent.
    """
    point = _as_float_tuple(point)
    if len(point) != partition.n:
        raise DomainError("point dimension does not match partition")
    rect = partition.rect
    if not rect.contains(point):
        raise DomainError(f"refinement point {point} outside {rect.lo}..{rect.hi}")
    new_axes = []
    for x, ax in zip(point, partition.axes):
        pos = bisect.bisect_left(ax, x)
        if pos < len(ax) and ax[pos] == x:
            new_axes.append(ax)
        else:
            new_axes.append(ax[:pos] + (x,) + ax[pos:])
    return GridPartition(tuple(new_axes))


def subrects(partition: GridPartition):
    """Iterate the partition's cells as Rects in row-major order."""
    for index in itertools.product(*[range(c) for c in partition.cells_shape]):
        yield partition.cell(index)


@dataclass(frozen=True)
class GridSample:
    """Finite function values at every vertex of a partition (row-major)."""

    partition: GridPartition
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel(order="C")
        if vals.size != self.partition.vertex_count:
            raise DomainError(
                f"expected {self.partition.vertex_count} values, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid sample values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def tensor(self) -> np.ndarray:
        """Values reshaped to the vertex lattice."""
        return self.values.reshape(self.partition.shape)

    def value_at(self, index: tuple[int, ...]) -> float:
        return float(self.tensor[index])
