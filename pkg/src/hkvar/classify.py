"""Monotonicity certificates and absolute-continuity classification.

Joint monotonicity only needs to be checked on the cells of a grid: by
additivity, the increment of any vertex-aligned box is a sum of cell
increments, so nonnegativity on adjacent cells certifies it for all boxes of
the grid.  Componentwise monotonicity likewise reduces to consecutive-vertex
differences along grid lines.

The absolute-continuity classifier compares the integral of the estimated
absolute joint derivative against a variation lower bound: equality (within
tolerance) characterizes functions whose increment "mass" has a density,
while a positive gap exposes a singular part, as with the Cantor-type
staircases whose derivative vanishes almost everywhere but whose variation
is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .differentiation import HSchedule, derivative_field
from .errors import DomainError
from .geometry import GridPartition, Rect
from .increment import FuncSource, cell_increments, vertex_values
from .variation import STOP_CONVERGED, RefinePolicy, total_variation

VERDICT_PASS = "Pass"
VERDICT_FAIL = "Fail"

AC = "AbsolutelyContinuous"
SINGULAR = "SingularPartDetected"
INCONCLUSIVE = "Inconclusive"

#: A classification is Inconclusive when more than this fraction of
#: derivative cells fails to converge.
MAX_FAILED_CELL_FRACTION = 0.05


@dataclass(frozen=True)
class MonotonicityReport:
    """Verdict plus the worst offending cell (present only on Fail)."""

    verdict: str
    tolerance: float
    witness: tuple[Rect, float] | None = None
    kind: str = "joint"

    @property
    def passed(self) -> bool:
        return self.verdict == VERDICT_PASS


def _as_partition(grid, rect: Rect | None) -> GridPartition:
    if isinstance(grid, GridPartition):
        return grid
    if rect is None:
        raise DomainError("a rect is required when grid is given as cell counts")
    return GridPartition.uniform(rect, grid)


def is_jointly_monotone(
    f: FuncSource,
    partition: GridPartition,
    tol: float = 1e-9,
) -> MonotonicityReport:
    """Certify nonnegative joint increments on (hence across) grid cells."""
    values = vertex_values(f, partition)
    incs = cell_increments(values)
    flat = int(np.argmin(incs))
    worst = float(incs.ravel(order="C")[flat])
    if worst >= -tol:
        return MonotonicityReport(VERDICT_PASS, tol, None, "joint")
    index = np.unravel_index(flat, incs.shape)
    cell = partition.cell(tuple(int(i) for i in index))
    return MonotonicityReport(VERDICT_FAIL, tol, (cell, worst), "joint")


def is_componentwise_monotone(
    f: FuncSource,
    partition: GridPartition,
    tol: float = 1e-9,
) -> MonotonicityReport:
    """Check one-coordinate monotonicity along every grid line.

    The witness for a failure is the offending grid edge, reported as a
    degenerate rect spanning just that edge, together with the (negative)
    difference across it.
    """
    values = vertex_values(f, partition)
    worst = math.inf
    witness = None
    for axis in range(partition.n):
        diffs = np.diff(values, axis=axis)
        flat = int(np.argmin(diffs))
        val = float(diffs.ravel(order="C")[flat])
        if val < worst:
            worst = val
            index = np.unravel_index(flat, diffs.shape)
            lo = [partition.axes[d][i] for d, i in enumerate(index)]
            hi = list(lo)
            hi[axis] = partition.axes[axis][index[axis] + 1]
            witness = (Rect(tuple(lo), tuple(hi)), val)
    if worst >= -tol:
        return MonotonicityReport(VERDICT_PASS, tol, None, "componentwise")
    return MonotonicityReport(VERDICT_FAIL, tol, witness, "componentwise")


@dataclass(frozen=True)
class ACVerdict:
    """Outcome of the derivative-mass versus variation comparison."""

    verdict: str
    integral_of_abs_derivative: float
    variation_lower_bound: float
    gap: float
    tolerance: float
    details: dict

    @property
    def passed(self) -> bool:
        return self.verdict == AC


def classify_ac(
    f: FuncSource,
    rect: Rect,
    grid=None,
    sched: HSchedule | None = None,
    policy: RefinePolicy | None = None,
    tol: float = 1e-3,
) -> ACVerdict:
    """Classify ``f`` on ``rect`` as absolutely continuous or singular.

    ``tol`` is relative: the verdict is AbsolutelyContinuous when
    ``|variation - integral| <= tol * max(1, variation)``, and
    SingularPartDetected when the variation exceeds the integral by more
    than that.  The result is Inconclusive when the variation refinement did
    not converge or too many derivative cells failed.
    """
    from .verify import default_grid  # local import to avoid a cycle

    if grid is None:
        grid = default_grid(rect.n)
    partition = _as_partition(grid, rect)
    sched = sched or HSchedule.for_rect(rect)

    var = total_variation(f, rect, policy)
    field = derivative_field(f, partition, sched)

    vols = field.cell_volumes
    conv = field.converged
    vals = field.values
    terms = (vols[conv] * np.abs(vals[conv])).ravel()
    # non-convergent cells contribute the best available lower bound on |f']
    lo, hi = field.dini_lower[~conv], field.dini_upper[~conv]
    fill = np.where(lo > 0, lo, np.where(hi < 0, -hi, 0.0))
    integral = math.fsum(terms.tolist()) + math.fsum((vols[~conv] * fill).ravel().tolist())

    V = var.lower_bound
    gap = V - integral
    failed_frac = field.failed_count / max(1, conv.size)
    details = {
        "variation_stopped": var.stopped,
        "variation_rounds": var.rounds,
        "failed_cells": field.failed_count,
        "total_cells": int(conv.size),
        "failed_fraction": failed_frac,
    }

    threshold = tol * max(1.0, V)
    if var.stopped != STOP_CONVERGED or failed_frac > MAX_FAILED_CELL_FRACTION:
        verdict = INCONCLUSIVE
    elif abs(gap) <= threshold:
        verdict = AC
    elif gap > threshold:
        verdict = SINGULAR
    else:
        # the integral exceeded a converged variation bound by more than the
        # tolerance; numbers disagree with theory, so refuse to classify
        verdict = INCONCLUSIVE
    return ACVerdict(verdict, integral, V, gap, tol, details)
