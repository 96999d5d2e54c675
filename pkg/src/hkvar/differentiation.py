"""One-sided joint derivatives estimated from shrinking box quotients.

For a quadrant pattern ``e`` of +-1 directions, the estimator evaluates

    q(h) = increment of f over the (reoriented) box [x, x + h*e]  /  h**n

along a geometric schedule of h values.  Raw quotients carry an O(h) bias
*and* a rounding floor of roughly ``2**n * ulp(f) / h**n``, which in double
precision leaves no h where three consecutive raw quotients can agree to a
1e-6 relative tolerance for generic smooth functions -- worse, the raw
sequence can flatline on the rounding plateau and fake agreement at a wrong
value.  Convergence is therefore judged on the first-order extrapolated
sequence

    r_k = (q_k - ratio * q_{k-1}) / (1 - ratio),

which cancels the O(h) term, together with a noise-floor guard so that
agreement is never demanded below what double precision can resolve.  The
trace keeps the raw quotients; Dini-style brackets are the min/max of the
trailing half of that trace (widened to contain the extrapolated value when
it lands just outside, which happens when the quotients approach their limit
one-sidedly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EvaluationError
from .geometry import GridPartition, GridSample, QuadrantSign, Rect
from .increment import FuncSource

#: Smallest usable h as a fraction of the domain's shortest side.
H_FLOOR_FACTOR = 2.0**-20
#: Safety factor on the estimated rounding floor of a quotient.
NOISE_FACTOR = 2.0
#: The noise floor may only stand in for the tolerance while it stays this
#: small relative to the value being reported.
NOISE_CAP_REL = 1e-2

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class HSchedule:
    """Geometric step schedule with convergence tolerances."""

    h0: float = 0.125
    ratio: float = 0.5
    max_steps: int = 24
    rtol: float = 1e-6
    atol: float = 1e-9

    def __post_init__(self):
        if not (self.h0 > 0 and math.isfinite(self.h0)):
            raise DomainError("h0 must be positive and finite")
        if not (0.0 < self.ratio < 1.0):
            raise DomainError("ratio must lie in (0, 1)")
        if self.max_steps < 3:
            raise DomainError("max_steps must be at least 3")
        if self.rtol <= 0 or self.atol <= 0:
            raise DomainError("rtol and atol must be positive")

    @classmethod
    def for_rect(cls, rect: Rect, **overrides) -> "HSchedule":
        """Default schedule: h0 is an eighth of the shortest side."""
        side = min(rect.sides)
        if side <= 0:
            raise DomainError("cannot build a schedule for a degenerate rect")
        params = {"h0": side / 8.0}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class DerivativeEstimate:
    """Result of one quotient run.  ``value is None`` means non-convergent."""

    value: float | None
    converged: bool
    dini_lower: float
    dini_upper: float
    trace: tuple[tuple[float, float], ...]
    quadrant: QuadrantSign
    point: tuple[float, ...]

    def __post_init__(self):
        if self.converged and self.value is None:
            raise DomainError("converged estimate must carry a value")


def _fit_h0(point, quadrant: QuadrantSign, domain: Rect | None, sched: HSchedule) -> float:
    """Shrink h0 so the probe box stays inside ``domain`` (if any)."""
    if domain is None:
        return sched.h0
    room = math.inf
    for x, d, lo, hi in zip(point, quadrant.dirs, domain.lo, domain.hi):
        room = min(room, (hi - x) if d > 0 else (x - lo))
    floor = H_FLOOR_FACTOR * min(domain.sides)
    if room < floor:
        raise DomainError(
            f"no room for a derivative probe at {tuple(point)} toward {quadrant}"
        )
    return min(sched.h0, room)


def _scan_convergence(qs, hs, cmaxes, n, sched):
    """First step where the extrapolated sequence triple-agrees.

    Returns ``(step, value)`` or ``(None, None)``.  ``qs`` etc. are aligned
    lists; the scan is causal, so feeding it a longer trace never changes an
    earlier hit.
    """
    ratio = sched.ratio
    rs = [qs[0]]
    for k in range(1, len(qs)):
        rs.append((qs[k] - ratio * qs[k - 1]) / (1.0 - ratio))
    for k in range(3, len(qs)):
        r0, r1, r2 = rs[k - 2], rs[k - 1], rs[k]
        tol = max(sched.rtol * abs(r2), sched.atol)
        noise = NOISE_FACTOR * (1 << n) * _EPS * cmaxes[k] / hs[k] ** n
        if noise <= NOISE_CAP_REL * abs(r2):
            tol = max(tol, noise)
        if abs(r2 - r1) <= tol and abs(r1 - r0) <= tol and abs(r2 - r0) <= tol:
            return k, sorted((r0, r1, r2))[1]
    return None, None


def _trailing_bracket(qs, value=None):
    window = qs[len(qs) // 2 :]
    lo, hi = min(window), max(window)
    if value is not None:
        lo, hi = min(lo, value), max(hi, value)
    return lo, hi


def joint_derivative(
    f: FuncSource,
    point,
    sched: HSchedule | None = None,
    quadrant: QuadrantSign | None = None,
) -> DerivativeEstimate:
    """Estimate the joint (mixed) derivative of ``f`` at ``point``.

    Non-convergence is reported, not raised: the returned estimate has
    ``value None`` and brackets taken from the trailing half of the trace.
    """
    point = tuple(float(x) for x in point)
    n = len(point)
    if quadrant is None:
        quadrant = QuadrantSign.positive(n)
    if quadrant.n != n:
        raise DomainError("quadrant dimension does not match point")
    if sched is None:
        sched = HSchedule.for_rect(f.domain) if f.domain is not None else HSchedule()
    h0 = _fit_h0(point, quadrant, f.domain, sched)

    qs: list[float] = []
    hs: list[float] = []
    cmaxes: list[float] = []
    running_max = 0.0
    h = h0
    step = value = None
    for k in range(sched.max_steps):
        total = []
        for mask in range(1 << n):
            corner = tuple(
                x + h * d if (mask >> i) & 1 else x
                for i, (x, d) in enumerate(zip(point, quadrant.dirs))
            )
            v = f(corner)
            if not math.isfinite(v):
                raise EvaluationError(
                    f"{f.name} returned non-finite value at corner {corner}", corner
                )
            bits = bin(mask).count("1")
            total.append((v if (n + bits) % 2 == 0 else -v))
            running_max = max(running_max, abs(v))
        orient = 1.0
        for d in quadrant.dirs:
            orient *= d
        qs.append(orient * math.fsum(total) / h**n)
        hs.append(h)
        cmaxes.append(running_max)
        step, value = _scan_convergence(qs, hs, cmaxes, n, sched)
        if step is not None:
            break
        h *= sched.ratio

    converged = step is not None
    lo, hi = _trailing_bracket(qs, value if converged else None)
    return DerivativeEstimate(
        value=value if converged else None,
        converged=converged,
        dini_lower=lo,
        dini_upper=hi,
        trace=tuple(zip(hs, qs)),
        quadrant=quadrant,
        point=point,
    )


def dini_bracket(f: FuncSource, point, sched: HSchedule | None = None) -> tuple[float, float]:
    """Lower/upper quotient brackets at ``point`` for the all-plus quadrant.

    Convergence is not required; the brackets always exist.
    """
    est = joint_derivative(f, point, sched=sched)
    return est.dini_lower, est.dini_upper


@dataclass(frozen=True)
class DerivativeField:
    """Per-cell derivative estimates over a partition.

    Cell anchors are the cell midpoints (the lower corner offset inward by
    half the cell), so midpoint quadrature of the field is a Riemann sum of
    the estimated derivative.  Non-convergent cells hold NaN in ``values``
    and are counted in ``failed_count``; their brackets are still filled in.
    """

    partition: GridPartition
    quadrant: QuadrantSign
    schedule: HSchedule
    values: np.ndarray = field(repr=False)
    converged: np.ndarray = field(repr=False)
    dini_lower: np.ndarray = field(repr=False)
    dini_upper: np.ndarray = field(repr=False)

    @property
    def failed_count(self) -> int:
        return int(self.converged.size - np.count_nonzero(self.converged))

    @property
    def anchor_axes(self) -> tuple[tuple[float, ...], ...]:
        return tuple(
            tuple((np.asarray(ax[:-1]) + np.asarray(ax[1:])) / 2.0)
            for ax in self.partition.axes
        )

    @property
    def cell_volumes(self) -> np.ndarray:
        vols = np.ones(self.partition.cells_shape)
        for d, ax in enumerate(self.partition.axes):
            w = np.diff(np.asarray(ax))
            shape = [1] * self.partition.n
            shape[d] = len(w)
            vols = vols * w.reshape(shape)
        return vols

    def sample(self) -> GridSample:
        """Converged values as a GridSample over the anchor lattice."""
        if self.failed_count:
            raise DomainError(
                f"field has {self.failed_count} non-convergent cells; no finite sample"
            )
        part = GridPartition(self.anchor_axes)
        return GridSample(part, self.values.ravel(order="C"))


def derivative_field(
    f: FuncSource,
    partition: GridPartition,
    sched: HSchedule | None = None,
    quadrant: QuadrantSign | None = None,
) -> DerivativeField:
    """Estimate the joint derivative at every cell midpoint of ``partition``.

    The whole sweep is evaluated in vectorized batches; results are
    deterministic and identical to running the cells one at a time with the
    same arithmetic.
    """
    n = partition.n
    if quadrant is None:
        quadrant = QuadrantSign.positive(n)
    if quadrant.n != n:
        raise DomainError("quadrant dimension does not match partition")
    if sched is None:
        sched = HSchedule.for_rect(partition.rect)

    mids = [
        (np.asarray(ax[:-1]) + np.asarray(ax[1:])) / 2.0 for ax in partition.axes
    ]
    lattice = np.meshgrid(*mids, indexing="ij")
    anchors = np.stack([g.ravel(order="C") for g in lattice], axis=-1)
    m = anchors.shape[0]
    dirs = np.asarray(quadrant.dirs, dtype=float)

    # per-anchor h0, shrunk to keep probes inside the advisory domain
    h0 = np.full(m, sched.h0)
    if f.domain is not None:
        lo = np.asarray(f.domain.lo)
        hi = np.asarray(f.domain.hi)
        room = np.full(m, np.inf)
        for d in range(n):
            r = (hi[d] - anchors[:, d]) if dirs[d] > 0 else (anchors[:, d] - lo[d])
            room = np.minimum(room, r)
        floor = H_FLOOR_FACTOR * min(f.domain.sides)
        if np.any(room < floor):
            i = int(np.argmax(room < floor))
            raise DomainError(
                f"no room for a derivative probe at {tuple(anchors[i])} toward {quadrant}"
            )
        h0 = np.minimum(h0, room)

    orient = float(np.prod(dirs))
    ratio = sched.ratio
    steps = sched.max_steps

    q_rows: list[np.ndarray] = []
    h_rows: list[np.ndarray] = []
    running_max = np.zeros(m)
    cmax_rows: list[np.ndarray] = []

    conv_step = np.full(m, -1, dtype=int)
    conv_value = np.full(m, np.nan)

    r_prev2 = r_prev1 = None
    q_prev = None
    for k in range(steps):
        h = h0 * (ratio**k)
        total = np.zeros(m)
        for mask in range(1 << n):
            pts = anchors.copy()
            bits = 0
            for d in range(n):
                if (mask >> d) & 1:
                    pts[:, d] = pts[:, d] + h * dirs[d]
                    bits += 1
            vals = np.asarray(f.eval_many(pts), dtype=float)
            if not np.all(np.isfinite(vals)):
                i = int(np.argmax(~np.isfinite(vals)))
                raise EvaluationError(
                    f"{f.name} returned non-finite value at corner {tuple(pts[i])}",
                    tuple(pts[i]),
                )
            running_max = np.maximum(running_max, np.abs(vals))
            total = total + (vals if (n + bits) % 2 == 0 else -vals)
        q = orient * total / h**n
        q_rows.append(q)
        h_rows.append(h)
        cmax_rows.append(running_max.copy())

        if q_prev is not None:
            r = (q - ratio * q_prev) / (1.0 - ratio)
            if r_prev2 is not None and k >= 3:
                tol = np.maximum(sched.rtol * np.abs(r), sched.atol)
                noise = NOISE_FACTOR * (1 << n) * _EPS * running_max / h**n
                use_noise = noise <= NOISE_CAP_REL * np.abs(r)
                tol = np.where(use_noise, np.maximum(tol, noise), tol)
                agree = (
                    (np.abs(r - r_prev1) <= tol)
                    & (np.abs(r_prev1 - r_prev2) <= tol)
                    & (np.abs(r - r_prev2) <= tol)
                )
                hit = agree & (conv_step < 0)
                if np.any(hit):
                    conv_step[hit] = k
                    triple = np.stack([r_prev2[hit], r_prev1[hit], r[hit]])
                    conv_value[hit] = np.median(triple, axis=0)
            r_prev2, r_prev1 = r_prev1, r
        q_prev = q
        if np.all(conv_step >= 0):
            break

    Q = np.stack(q_rows)  # (steps_run, m)
    steps_run = Q.shape[0]
    cells = partition.cells_shape

    values = conv_value.copy()
    converged = conv_step >= 0
    values[~converged] = np.nan

    lower = np.empty(m)
    upper = np.empty(m)
    for i in range(m):
        L = conv_step[i] + 1 if converged[i] else steps_run
        window = Q[L // 2 : L, i]
        lo_i, hi_i = float(window.min()), float(window.max())
        if converged[i]:
            lo_i = min(lo_i, values[i])
            hi_i = max(hi_i, values[i])
        lower[i], upper[i] = lo_i, hi_i

    return DerivativeField(
        partition=partition,
        quadrant=quadrant,
        schedule=sched,
        values=values.reshape(cells),
        converged=converged.reshape(cells),
        dini_lower=lower.reshape(cells),
        dini_upper=upper.reshape(cells),
    )
