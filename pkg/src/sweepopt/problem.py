"""Bookkeeping for the discretised free-time problem: costs and feasibility."""
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import IncompatibleReference
from .sweeping import DiscreteTrajectory


@dataclass(frozen=True)
class DiscretizationConfig:
    """k: steps; eps_locality: radius of the proximity constraints (None disables them);
    delta_endpoint: inflation of the endpoint sets; reference: the trajectory the
    proximity terms are measured against (None = self-referenced)."""

    k: int = 1000
    eps_locality: float = None
    delta_endpoint: float = 0.0
    reference: DiscreteTrajectory = None
    endpoint_tol: float = None  # None -> 5 h of the trajectory checked

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError("k must be at least 1")
        if self.eps_locality is not None and self.eps_locality <= 0:
            raise ValueError("eps_locality must be positive when given")
        if self.delta_endpoint < 0:
            raise ValueError("delta_endpoint must be nonnegative")


@dataclass
class FeasibilityReport:
    state_feasible: bool
    endpoint_x_ok: bool
    endpoint_T_ok: bool
    locality_ok: bool
    velocity_cap_ok: bool
    max_violation: float
    controls_ok: bool = True
    worst_step: int = None  # grid index of the largest state violation
    violations: dict = field(default_factory=dict)

    @property
    def ok(self):
        return (
            self.state_feasible
            and self.endpoint_x_ok
            and self.endpoint_T_ok
            and self.locality_ok
            and self.velocity_cap_ok
            and self.controls_ok
        )


def mayer_cost(P, traj):
    return P.phi(traj.states[-1], traj.T)


def _check_reference(P, ref):
    if ref.states.shape[1] != P.n or ref.controls.shape[1] != P.d:
        raise IncompatibleReference(
            f"reference has dims ({ref.states.shape[1]}, {ref.controls.shape[1]}), problem has ({P.n}, {P.d})"
        )


def proximity_integral(traj, ref):
    """int_0^T |(v - v_ref, u - u_ref)|^2 dt with both sides piecewise constant.

    The reference is held at rest with its last control after its horizon.
    The integrand is constant between consecutive points of the merged grid,
    so the sum below is exact.
    """
    cand = traj.times
    knots = np.union1d(cand, ref.times[ref.times < traj.T])
    mids = 0.5 * (knots[:-1] + knots[1:])
    lengths = np.diff(knots)
    ic = np.clip(np.searchsorted(cand, mids, side="right") - 1, 0, traj.k - 1)
    ir = np.searchsorted(ref.times, mids, side="right") - 1
    beyond = ir >= ref.k
    ir = np.clip(ir, 0, ref.k - 1)
    v_ref = np.where(beyond[:, None], 0.0, ref.velocities[ir])
    dv = traj.velocities[ic] - v_ref
    du = traj.controls[ic] - ref.controls[ir]
    return float(np.sum(lengths * (np.sum(dv * dv, axis=1) + np.sum(du * du, axis=1))))


def pk_cost(P, traj, cfg=None):
    """phi(x_k, T) + (T - Tref)^2 + proximity integral; plain Mayer cost without a reference."""
    J = mayer_cost(P, traj)
    ref = None if cfg is None else cfg.reference
    if ref is None:
        return J
    _check_reference(P, ref)
    return J + (traj.T - ref.T) ** 2 + proximity_integral(traj, ref)


def reference_at(ref, times):
    """Reference state (linear interpolation, frozen after its horizon) and control (left-continuous samples)."""
    xs = np.column_stack([np.interp(times, ref.times, ref.states[:, c]) for c in range(ref.states.shape[1])])
    iu = np.clip(np.searchsorted(ref.times, times, side="right") - 1, 0, ref.k - 1)
    return xs, ref.controls[iu]


def _affine_distance(E, e, x):
    if E.shape[0] == 0:
        return 0.0
    corr, *_ = np.linalg.lstsq(E, E @ x - e, rcond=None)
    return float(np.linalg.norm(corr))


def feasibility(P, traj, cfg=None):
    cfg = cfg or DiscretizationConfig(k=traj.k)
    delta = cfg.delta_endpoint
    tol_end = 5.0 * traj.h if cfg.endpoint_tol is None else cfg.endpoint_tol
    viol = {}

    # states inside C(t_i), with the index of the worst grid point
    worst_r, worst_i = -np.inf, None
    state_ok = True
    for i, x in enumerate(traj.states):
        r = float(geo.eval_constraints(P.C, i * traj.h, x).max())
        if r > geo.default_tol(x):
            state_ok = False
        if r > worst_r:
            worst_r, worst_i = r, i
    viol["state"] = max(0.0, worst_r)

    u_excess = np.maximum(traj.controls - P.U_hi, P.U_lo - traj.controls)
    viol["controls"] = max(0.0, float(u_excess.max()))
    controls_ok = viol["controls"] <= 1e-12

    viol["endpoint_x"] = max(0.0, _affine_distance(P.omega_x_E, P.omega_x_e, traj.states[-1]) - delta)
    lo, hi = P.omega_T
    viol["endpoint_T"] = max(0.0, lo - delta - traj.T, traj.T - hi - delta)
    endpoint_x_ok = viol["endpoint_x"] <= tol_end
    endpoint_T_ok = viol["endpoint_T"] <= 1e-12

    locality_ok = True
    ref = cfg.reference
    if ref is not None and cfg.eps_locality is not None:
        _check_reference(P, ref)
        eps = cfg.eps_locality
        viol["proximity_L2"] = max(0.0, proximity_integral(traj, ref) - eps)
        xr, ur = reference_at(ref, traj.times[:-1])
        gap = np.sqrt(np.sum((traj.states[:-1] - xr) ** 2, axis=1) + np.sum((traj.controls - ur) ** 2, axis=1))
        viol["proximity_sup"] = max(0.0, float(gap.max()) - eps)
        viol["horizon"] = max(0.0, abs(traj.T - ref.T) - eps)
        locality_ok = max(viol["proximity_L2"], viol["proximity_sup"], viol["horizon"]) <= 1e-12

    velocity_ok = True
    if P.lipschitz is not None:
        speed = float(np.linalg.norm(traj.velocities, axis=1).max())
        viol["velocity_cap"] = max(0.0, speed - (P.lipschitz + 1.0))
        velocity_ok = viol["velocity_cap"] <= 1e-12

    return FeasibilityReport(
        state_feasible=state_ok,
        endpoint_x_ok=endpoint_x_ok,
        endpoint_T_ok=endpoint_T_ok,
        locality_ok=locality_ok,
        velocity_cap_ok=velocity_ok,
        max_violation=max(viol.values()),
        controls_ok=controls_ok,
        worst_step=worst_i if not state_ok else None,
        violations=viol,
    )
