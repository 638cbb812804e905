"""Brute-force ground truth on the original power-coordinate formulation.

Enumerates a uniform grid over the power box, keeps the points that are
feasible for the nonconvex power set, and minimizes the raw cost over them.
Deliberately independent of the energy-coordinate reformulation it is used
to validate: everything here runs through `in_power_set` semantics and
`evaluate_power_cost`, never through the polytope.

Grids include the axis endpoints and the exact zero level (zero power and
bound-saturating profiles are the natural optimum candidates), and ties are
broken lexicographically so oracle output is deterministic regardless of
enumeration chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .costs import (
    CostSpec,
    EnergyArbitrage,
    LoadBalancing,
    PeakShaving,
    PowerRegulation,
    PowerSmoothing,
    instance_digest,
    power_cost_batch,
)
from .errors import (
    GridTooLarge,
    HorizonTooLarge,
    InstanceMismatch,
    NoFeasiblePoint,
)
from .model import Bounds, StorageParams, build_dynamics
from .transform import power_feasibility_mask

__all__ = [
    "GridSpec",
    "OracleResult",
    "GapReport",
    "enumerate_feasible",
    "brute_force_solve",
    "compare",
]

GRID_SIZE_GUARD = 10**8
FEASIBILITY_TOL = 1e-9
_CHUNK = 1 << 15


@dataclass(frozen=True)
class GridSpec:
    """points_per_axis must be odd (so symmetric boxes hit zero exactly) and
    at least 3; horizon_cap limits the enumeration to desk scale."""

    points_per_axis: int
    horizon_cap: int = 3

    def __post_init__(self):
        if self.points_per_axis < 3:
            raise ValueError("points_per_axis must be >= 3")
        if self.points_per_axis % 2 == 0:
            raise ValueError("points_per_axis must be odd")
        if self.horizon_cap < 1:
            raise ValueError("horizon_cap must be >= 1")


@dataclass(frozen=True, eq=False)
class OracleResult:
    u_best: np.ndarray
    cost_best: float
    feasible_count: int
    instance_digest: str
    grid: GridSpec
    max_spacing: float
    params: StorageParams
    bounds: Bounds
    cost: CostSpec


@dataclass(frozen=True)
class GapReport:
    """Solver-vs-oracle comparison.

    gap is solver objective minus oracle objective.  The discretization
    bound is a Lipschitz-style estimate (grid spacing times a per-family
    Lipschitz constant over the power box), None for custom costs.  verdict
    is "pass"/"fail" against the caller tolerance, or "no-guarantee" when
    the solution was best-effort only.
    """

    gap: float
    discretization_bound: Optional[float]
    tolerance: float
    verdict: str


def _axis_levels(lo: float, hi: float, points: int) -> np.ndarray:
    levels = np.linspace(lo, hi, points)
    nearest = int(np.argmin(np.abs(levels)))
    if abs(levels[nearest]) <= 1e-12 * max(1.0, hi - lo):
        levels[nearest] = 0.0
    if not np.any(levels == 0.0):
        levels = np.append(levels, 0.0)
    return np.unique(levels)


def _grid_axes(params: StorageParams, bounds: Bounds, grid: GridSpec) -> list[np.ndarray]:
    if params.horizon > grid.horizon_cap:
        raise HorizonTooLarge(
            f"horizon {params.horizon} exceeds grid cap {grid.horizon_cap}"
        )
    if grid.points_per_axis ** params.horizon > GRID_SIZE_GUARD:
        raise GridTooLarge(
            f"{grid.points_per_axis}^{params.horizon} grid points exceed the "
            f"{GRID_SIZE_GUARD:.0e} guard"
        )
    return [
        _axis_levels(-bounds.u_min_mag[t], bounds.u_max[t], grid.points_per_axis)
        for t in range(params.horizon)
    ]


def _feasible_chunks(
    params: StorageParams, bounds: Bounds, grid: GridSpec
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yields (chunk of grid rows, feasibility mask) in lexicographic order."""
    axes = _grid_axes(params, bounds, grid)
    dyn = build_dynamics(params)
    shape = tuple(len(axis) for axis in axes)
    total = int(np.prod(shape))
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        multi = np.unravel_index(flat, shape)
        chunk = np.column_stack([axes[d][multi[d]] for d in range(len(axes))])
        mask = power_feasibility_mask(chunk, params, bounds, dyn, tol=FEASIBILITY_TOL)
        yield chunk, mask


def enumerate_feasible(
    params: StorageParams, bounds: Bounds, grid: GridSpec
) -> Iterator[np.ndarray]:
    """Yield every feasible grid point of the power box, ascending
    lexicographically."""
    for chunk, mask in _feasible_chunks(params, bounds, grid):
        for row in chunk[mask]:
            yield row


def brute_force_solve(
    params: StorageParams, bounds: Bounds, cost: CostSpec, grid: GridSpec
) -> OracleResult:
    """Minimum-cost feasible grid point; ties broken lexicographically by u."""
    best_cost = math.inf
    best_u: Optional[np.ndarray] = None
    count = 0
    for chunk, mask in _feasible_chunks(params, bounds, grid):
        feasible = chunk[mask]
        if feasible.shape[0] == 0:
            continue
        count += feasible.shape[0]
        values = power_cost_batch(cost, feasible)
        local_min = float(values.min())
        if local_min > best_cost:
            continue
        candidate = feasible[int(np.argmax(values == local_min))]
        if local_min < best_cost or (
            best_u is not None and tuple(candidate) < tuple(best_u)
        ):
            best_cost = local_min
            best_u = candidate.copy()
    if best_u is None:
        raise NoFeasiblePoint(
            "no grid point was feasible; the set may be empty or the grid too coarse"
        )
    spacing = max(
        (bounds.u_max[t] + bounds.u_min_mag[t]) / (grid.points_per_axis - 1)
        for t in range(params.horizon)
    )
    return OracleResult(
        u_best=best_u,
        cost_best=best_cost,
        feasible_count=count,
        instance_digest=instance_digest(params, bounds, cost),
        grid=grid,
        max_spacing=float(spacing),
        params=params,
        bounds=bounds,
        cost=cost,
    )


def _lipschitz_estimate(cost: CostSpec, bounds: Bounds) -> Optional[float]:
    """Lipschitz constant of the family w.r.t. the max norm, over the power box."""
    lo, hi = -bounds.u_min_mag, bounds.u_max
    t = lo.shape[0]
    if isinstance(cost, PeakShaving):
        return 1.0
    if isinstance(cost, LoadBalancing):
        return float(
            np.sum(2.0 * np.maximum(np.abs(lo + cost.load), np.abs(hi + cost.load)))
        )
    if isinstance(cost, PowerRegulation):
        return float(t)
    if isinstance(cost, EnergyArbitrage):
        return float(np.sum(np.maximum(np.abs(cost.p_buy), np.abs(cost.p_sell))))
    if isinstance(cost, PowerSmoothing):
        return 2.0 * (t - 1)
    return None


def compare(solution, oracle_result: OracleResult, tolerance: float = 1e-3) -> GapReport:
    """Gap report between a solver Solution and an oracle run on the same
    instance; refuses mismatched instances via the digest guard."""
    if solution.instance_digest != oracle_result.instance_digest:
        raise InstanceMismatch(
            "solution and oracle result come from different instances: "
            f"{solution.instance_digest} vs {oracle_result.instance_digest}"
        )
    gap = float(solution.objective - oracle_result.cost_best)
    lipschitz = _lipschitz_estimate(oracle_result.cost, oracle_result.bounds)
    bound = None if lipschitz is None else lipschitz * oracle_result.max_spacing
    if solution.guarantee_flag != "global-optimum-claimed":
        verdict = "no-guarantee"
    else:
        verdict = "pass" if abs(gap) <= tolerance else "fail"
    return GapReport(
        gap=gap, discretization_bound=bound, tolerance=tolerance, verdict=verdict
    )
