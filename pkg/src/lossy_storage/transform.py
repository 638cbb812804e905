"""Power/energy change of variables and the two feasible sets.

The per-period loss map f(u) = eta_c * u+ + (1/eta_d) * u- converts signed
power into an effective energy rate; it is concave, strictly increasing and
invertible because 0 < eta_c <= 1/eta_d.  Composing with the dynamics gives
the bijection

    power_to_energy(u) = A f(u) + b             (concave per component)
    energy_to_power(x) = f_inv(A^{-1} (x - b))  (convex per component)

The set of feasible power profiles

    U = { u in the power box : x_min <= power_to_energy(u) <= x_max }

is generally nonconvex for lossy storage, while its image under the map is
the convex polytope

    X = { x : x_min <= x <= x_max,
              -(1/eta_d) u_min_mag <= A^{-1}(x - b) <= eta_c u_max }.

`find_nonconvexity_witness` searches for a certificate of the former fact:
two members of U whose mixture leaves U.

All maps accept a single profile (shape (T,)) or a batch of profiles stacked
as rows (shape (n, T)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LengthMismatch
from .model import Bounds, DynamicsMatrices, StorageParams, build_dynamics

__all__ = [
    "Violation",
    "MembershipVerdict",
    "EnergyPolytope",
    "Witness",
    "loss_map",
    "inverse_loss_map",
    "power_to_energy",
    "energy_to_power",
    "velocity",
    "in_power_set",
    "power_feasibility_mask",
    "build_energy_polytope",
    "in_energy_polytope",
    "energy_membership_mask",
    "find_nonconvexity_witness",
]

#: Absolute per-constraint tolerance for membership tests.
MEMBERSHIP_TOL = 1e-9

#: Default seed for the randomized witness search.
WITNESS_SEED = 1234


@dataclass(frozen=True)
class Violation:
    """One violated box constraint: which face, which period, by how much."""

    constraint: str  # power_lower | power_upper | energy_lower | energy_upper | x_* | v_*
    index: int
    amount: float


@dataclass(frozen=True)
class MembershipVerdict:
    is_member: bool
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return self.is_member


@dataclass(frozen=True, eq=False)
class EnergyPolytope:
    """Half-space form of the feasible energy set: two boxes, one of them in
    the velocity coordinate v = A^{-1}(x - b)."""

    v_lower: np.ndarray
    v_upper: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    dynamics: DynamicsMatrices


@dataclass(frozen=True, eq=False)
class Witness:
    """Nonconvexity certificate: u_a, u_b feasible, their mixture is not."""

    u_a: np.ndarray
    u_b: np.ndarray
    theta: float
    midpoint: np.ndarray
    violation: Violation


def _check_length(vec: np.ndarray, horizon: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape[-1] != horizon:
        raise LengthMismatch(
            f"{name} has trailing dimension {vec.shape[-1]}, expected horizon {horizon}"
        )
    return vec


def loss_map(u, params: StorageParams) -> np.ndarray:
    """Effective energy rate eta_c * u+ + (1/eta_d) * u-, elementwise."""
    u = _check_length(u, params.horizon, "u")
    return params.eta_c * np.maximum(u, 0.0) + (1.0 / params.eta_d) * np.minimum(u, 0.0)


def inverse_loss_map(v, params: StorageParams) -> np.ndarray:
    """Exact inverse of `loss_map`: (1/eta_c) * v+ + eta_d * v-."""
    v = _check_length(v, params.horizon, "v")
    return (1.0 / params.eta_c) * np.maximum(v, 0.0) + params.eta_d * np.minimum(v, 0.0)


def power_to_energy(u, params: StorageParams, dyn: DynamicsMatrices) -> np.ndarray:
    """Energy profile induced by a power profile: A f(u) + b."""
    return loss_map(u, params) @ dyn.a_matrix.T + dyn.b_offset


def velocity(x, params: StorageParams, dyn: DynamicsMatrices) -> np.ndarray:
    """The intermediate v = A^{-1}(x - b), the natural coordinate of the
    polytope's second box.  Exposed for diagnostics."""
    x = _check_length(x, params.horizon, "x")
    return (x - dyn.b_offset) @ dyn.a_inverse.T


def energy_to_power(x, params: StorageParams, dyn: DynamicsMatrices) -> np.ndarray:
    """Power profile recovering a given energy profile: f_inv(A^{-1}(x - b))."""
    return inverse_loss_map(velocity(x, params, dyn), params)


def _box_violations(
    values: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    tol: float,
    lower_name: str,
    upper_name: str,
) -> list[Violation]:
    out = []
    for i in np.nonzero(values < lower - tol)[0]:
        out.append(Violation(lower_name, int(i), float(lower[i] - values[i])))
    for i in np.nonzero(values > upper + tol)[0]:
        out.append(Violation(upper_name, int(i), float(values[i] - upper[i])))
    return out


def in_power_set(
    u,
    params: StorageParams,
    bounds: Bounds,
    tol: float = MEMBERSHIP_TOL,
    dyn: Optional[DynamicsMatrices] = None,
) -> MembershipVerdict:
    """Membership of u in the (generally nonconvex) feasible power set."""
    u = _check_length(u, params.horizon, "u")
    if dyn is None:
        dyn = build_dynamics(params)
    violations = _box_violations(
        u, -bounds.u_min_mag, bounds.u_max, tol, "power_lower", "power_upper"
    )
    x = power_to_energy(u, params, dyn)
    violations += _box_violations(
        x, bounds.x_min, bounds.x_max, tol, "energy_lower", "energy_upper"
    )
    return MembershipVerdict(is_member=not violations, violations=tuple(violations))


def power_feasibility_mask(
    profiles: np.ndarray,
    params: StorageParams,
    bounds: Bounds,
    dyn: DynamicsMatrices,
    tol: float = MEMBERSHIP_TOL,
) -> np.ndarray:
    """Vectorized `in_power_set` over rows of an (n, T) array; returns bools."""
    profiles = np.atleast_2d(np.asarray(profiles, dtype=float))
    ok = np.all(profiles >= -bounds.u_min_mag - tol, axis=1)
    ok &= np.all(profiles <= bounds.u_max + tol, axis=1)
    x = power_to_energy(profiles, params, dyn)
    ok &= np.all(x >= bounds.x_min - tol, axis=1)
    ok &= np.all(x <= bounds.x_max + tol, axis=1)
    return ok


def build_energy_polytope(
    params: StorageParams, bounds: Bounds, dyn: DynamicsMatrices
) -> EnergyPolytope:
    """Assemble the half-space form of the feasible energy set.

    Emptiness is not checked here; the solver detects it when projecting.
    """
    return EnergyPolytope(
        v_lower=-(1.0 / params.eta_d) * bounds.u_min_mag,
        v_upper=params.eta_c * bounds.u_max,
        x_lower=bounds.x_min.copy(),
        x_upper=bounds.x_max.copy(),
        dynamics=dyn,
    )


def in_energy_polytope(
    x, polytope: EnergyPolytope, tol: float = MEMBERSHIP_TOL
) -> MembershipVerdict:
    """Membership of x in the energy polytope (both boxes, within tol)."""
    x = np.asarray(x, dtype=float)
    violations = _box_violations(
        x, polytope.x_lower, polytope.x_upper, tol, "x_lower", "x_upper"
    )
    v = (x - polytope.dynamics.b_offset) @ polytope.dynamics.a_inverse.T
    violations += _box_violations(
        v, polytope.v_lower, polytope.v_upper, tol, "v_lower", "v_upper"
    )
    return MembershipVerdict(is_member=not violations, violations=tuple(violations))


def energy_membership_mask(
    profiles: np.ndarray, polytope: EnergyPolytope, tol: float = MEMBERSHIP_TOL
) -> np.ndarray:
    """Vectorized `in_energy_polytope` over rows of an (n, T) array."""
    profiles = np.atleast_2d(np.asarray(profiles, dtype=float))
    ok = np.all(profiles >= polytope.x_lower - tol, axis=1)
    ok &= np.all(profiles <= polytope.x_upper + tol, axis=1)
    v = (profiles - polytope.dynamics.b_offset) @ polytope.dynamics.a_inverse.T
    ok &= np.all(v >= polytope.v_lower - tol, axis=1)
    ok &= np.all(v <= polytope.v_upper + tol, axis=1)
    return ok


def _worst_violation(verdict: MembershipVerdict) -> Violation:
    return max(verdict.violations, key=lambda viol: viol.amount)


def _scaled_pattern_candidates(
    params: StorageParams, bounds: Bounds, dyn: DynamicsMatrices
):
    """Charge-early vs discharge-then-charge pairs, scaled to the instance.

    Constructed in velocity coordinates on the first two periods: u_a
    saturates the period-1 energy cap, u_b discharges first and then charges
    up to the period-2 cap.  Mirrors the canonical two-period picture of a
    lossy feasible set.
    """
    t = params.horizon
    if t < 2:
        return
    delta = params.delta
    a, b = dyn.a_matrix, dyn.b_offset
    v_up = params.eta_c * bounds.u_max
    v_lo = -(1.0 / params.eta_d) * bounds.u_min_mag

    v0a = min(v_up[0], (bounds.x_max[0] - b[0]) / delta)
    if v0a <= 0.0:
        return
    for frac in (1.0, 0.5, 0.25):
        for d in (-frac * v0a, frac * v_lo[0]):
            if not (v_lo[0] <= d < 0.0):
                continue
            v1b = min(v_up[1], (bounds.x_max[1] - b[1] - a[1, 0] * d) / a[1, 1])
            if v1b <= 0.0:
                continue
            va = np.zeros(t)
            va[0] = v0a
            vb = np.zeros(t)
            vb[0], vb[1] = d, v1b
            yield inverse_loss_map(va, params), inverse_loss_map(vb, params)


def find_nonconvexity_witness(
    params: StorageParams,
    bounds: Bounds,
    attempts: int = 2000,
    seed: int = WITNESS_SEED,
) -> Optional[Witness]:
    """Search for two feasible power profiles whose midpoint is infeasible.

    Random feasible pairs with at least one opposite-sign coordinate are
    tried first; if the budget runs out, a deterministic list of scaled
    charge/discharge patterns is tried.  Returns None when nothing is found,
    which is the correct outcome for lossless or sign-restricted instances
    (there the feasible power set is a polytope).
    """
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    dyn = build_dynamics(params)
    rng = np.random.default_rng(seed)
    lo, hi = -bounds.u_min_mag, bounds.u_max
    theta = 0.5

    def as_witness(u_a: np.ndarray, u_b: np.ndarray) -> Optional[Witness]:
        mid = theta * u_a + (1.0 - theta) * u_b
        verdict = in_power_set(mid, params, bounds, dyn=dyn)
        if verdict or _worst_violation(verdict).amount <= 1e-7:
            return None
        return Witness(
            u_a=u_a,
            u_b=u_b,
            theta=theta,
            midpoint=mid,
            violation=_worst_violation(verdict),
        )

    chunk = 256
    remaining = attempts
    while remaining > 0:
        n = min(chunk, remaining)
        remaining -= n
        pair_a = rng.uniform(lo, hi, size=(n, params.horizon))
        pair_b = rng.uniform(lo, hi, size=(n, params.horizon))
        feasible = power_feasibility_mask(pair_a, params, bounds, dyn)
        feasible &= power_feasibility_mask(pair_b, params, bounds, dyn)
        feasible &= np.any(pair_a * pair_b < 0.0, axis=1)
        for i in np.nonzero(feasible)[0]:
            found = as_witness(pair_a[i], pair_b[i])
            if found is not None:
                return found

    for u_a, u_b in _scaled_pattern_candidates(params, bounds, dyn):
        if not in_power_set(u_a, params, bounds, dyn=dyn):
            continue
        if not in_power_set(u_b, params, bounds, dyn=dyn):
            continue
        found = as_witness(u_a, u_b)
        if found is not None:
            return found
    return None
