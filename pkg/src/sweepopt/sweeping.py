"""Controlled sweeping process  x' in -N(x; C(t)) + g(x, u)  and its
catching-up discretisation  x+ = proj_{C(t+h)}(x + h g(x, u)).
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import geometry as geo
from .errors import DecompositionFailed, DimensionMismatch, InfeasiblePoint


def _vec(v, n, name):
    v = np.atleast_1d(np.asarray(v, dtype=float)).copy()
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got shape {v.shape}")
    v.setflags(write=False)
    return v


def _mat(M, shape, name):
    M = np.asarray(M, dtype=float).reshape(shape) if np.size(M) == shape[0] * shape[1] else None
    if M is None:
        raise DimensionMismatch(f"{name} must have shape {shape}")
    M = M.copy()
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class SweepingProblem:
    """g(x,u) = g_A x + g_B u + g_c,  phi(x,T) = phi_wT T + 1/2 sum phi_W_i (x_i - phi_xref_i)^2,
    endpoint rows omega_x_E x = omega_x_e and T in omega_T = (lo, hi)."""

    n: int
    d: int
    C: geo.MovingPolyhedron
    g_A: np.ndarray
    g_B: np.ndarray
    g_c: np.ndarray
    U_lo: np.ndarray
    U_hi: np.ndarray
    x0: np.ndarray
    phi_wT: float = 0.0
    phi_W: np.ndarray = None
    phi_xref: np.ndarray = None
    omega_x_E: np.ndarray = None
    omega_x_e: np.ndarray = None
    omega_T: tuple = (0.0, np.inf)
    lipschitz: float = None
    name: str = "problem"

    def __post_init__(self):
        n, d = int(self.n), int(self.d)
        if n < 1 or d < 1:
            raise ValueError("dimensions must be positive")
        if self.C.dim != n:
            raise DimensionMismatch("polyhedron dimension differs from n")
        put = lambda k, v: object.__setattr__(self, k, v)
        put("g_A", _mat(self.g_A, (n, n), "g_A"))
        put("g_B", _mat(self.g_B, (n, d), "g_B"))
        put("g_c", _vec(self.g_c, n, "g_c"))
        put("U_lo", _vec(self.U_lo, d, "U_lo"))
        put("U_hi", _vec(self.U_hi, d, "U_hi"))
        put("x0", _vec(self.x0, n, "x0"))
        put("phi_wT", float(self.phi_wT))
        put("phi_W", _vec(np.zeros(n) if self.phi_W is None else self.phi_W, n, "phi_W"))
        put("phi_xref", _vec(np.zeros(n) if self.phi_xref is None else self.phi_xref, n, "phi_xref"))
        E = np.zeros((0, n)) if self.omega_x_E is None else np.atleast_2d(np.asarray(self.omega_x_E, dtype=float))
        if E.size == 0:
            E = np.zeros((0, n))
        if E.shape[1] != n:
            raise DimensionMismatch("omega_x_E must have n columns")
        e = np.zeros(0) if self.omega_x_e is None else np.atleast_1d(np.asarray(self.omega_x_e, dtype=float))
        if e.shape != (E.shape[0],):
            raise DimensionMismatch("omega_x_e must have one entry per row of omega_x_E")
        E.setflags(write=False)
        e.setflags(write=False)
        put("omega_x_E", E)
        put("omega_x_e", e)
        lo, hi = (float(v) for v in self.omega_T)
        put("omega_T", (lo, hi))
        if np.any(self.U_lo > self.U_hi):
            raise ValueError("U_lo must not exceed U_hi")
        if lo > hi:
            raise ValueError("omega_T is empty")
        if np.any(self.phi_W < 0):
            raise ValueError("phi_W must be nonnegative")
        r = geo.eval_constraints(self.C, 0.0, self.x0)
        if r.max() > geo.default_tol(self.x0):
            raise InfeasiblePoint(f"x0 is outside C(0) (row {int(np.argmax(r)) + 1})")

    def g(self, x, u):
        return self.g_A @ x + self.g_B @ np.atleast_1d(u) + self.g_c

    def phi(self, x, T):
        dx = np.asarray(x) - self.phi_xref
        return self.phi_wT * T + 0.5 * float(np.sum(self.phi_W * dx * dx))

    def phi_grad_x(self, x):
        return self.phi_W * (np.asarray(x) - self.phi_xref)

    def endpoint_violation(self, x):
        if self.omega_x_E.shape[0] == 0:
            return 0.0
        return float(np.linalg.norm(self.omega_x_E @ x - self.omega_x_e))

    def with_xref(self, xref):
        return self.replace(phi_xref=np.asarray(xref, dtype=float))

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return SweepingProblem(**fields)

    def __eq__(self, other):
        if not isinstance(other, SweepingProblem):
            return NotImplemented
        for k in self.__dataclass_fields__:
            a, b = getattr(self, k), getattr(other, k)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if np.shape(a) != np.shape(b) or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ControlLaw:
    """Piecewise-constant control: levels[j] on [breakpoints[j], breakpoints[j+1])."""

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float).copy()
        L = np.asarray(self.levels, dtype=float)
        if L.ndim == 1:
            L = L.reshape(-1, 1)
        L = L.copy()
        if b.ndim != 1 or b.size != L.shape[0] + 1:
            raise ValueError("need m+1 breakpoints for m levels")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        b.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", L)

    @classmethod
    def constant(cls, u, T):
        return cls(np.array([0.0, float(T)]), np.atleast_2d(np.asarray(u, dtype=float)))

    @classmethod
    def from_switches(cls, T, switches, levels):
        return cls(np.concatenate([[0.0], np.asarray(switches, dtype=float), [float(T)]]), levels)

    @property
    def T(self):
        return float(self.breakpoints[-1])

    @property
    def m(self):
        return self.levels.shape[0]

    def switch_times(self):
        return self.breakpoints[1:-1].copy()

    def sample(self, times):
        idx = np.searchsorted(self.breakpoints, times, side="right") - 1
        idx = np.clip(idx, 0, self.m - 1)
        return self.levels[idx]

    def inside(self, lo, hi, tol=1e-12):
        return bool(np.all(self.levels >= lo - tol) and np.all(self.levels <= hi + tol))

    def __eq__(self, other):
        return (
            isinstance(other, ControlLaw)
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.levels, other.levels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DiscreteTrajectory:
    T: float
    k: int
    states: np.ndarray  # (k+1, n)
    controls: np.ndarray  # (k, d)
    etas: np.ndarray = None  # (k, s), eta_i lives at (t_{i+1}, x_{i+1})
    h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", float(self.T) / int(self.k))
        if self.states.shape[0] != self.k + 1 or self.controls.shape[0] != self.k:
            raise DimensionMismatch("trajectory arrays do not match k")

    @property
    def times(self):
        return np.arange(self.k + 1) * self.h

    @property
    def velocities(self):
        return np.diff(self.states, axis=0) / self.h

    def with_etas(self, etas):
        return DiscreteTrajectory(self.T, self.k, self.states, self.controls, etas)


def catchup_step(P, t, h, x, u):
    z = np.asarray(x, dtype=float) + h * P.g(x, u)
    return geo.project(P.C, t + h, z)


class _Stepper:
    """Catching-up loop with the problem data unpacked once."""

    def __init__(self, P):
        self.N = P.C.normals
        self.o0 = P.C.offset0
        self.o1 = P.C.offset_slope
        self.A = P.g_A if np.any(P.g_A) else None
        self.B = P.g_B
        self.c = P.g_c
        self.C = P.C

    def run(self, x0, controls, h):
        N, A = self.N, self.A
        k = controls.shape[0]
        step_drift = h * (controls @ self.B.T + self.c)
        offsets = self.o0 + self.o1 * (np.arange(1, k + 1) * h)[:, None]
        xs = np.empty((k + 1, x0.size))
        xs[0] = x0
        if A is None:
            self._run_drift(xs, step_drift, offsets, h)
            return xs
        x = x0.copy()
        for i in range(k):
            z = x + h * (A @ x) + step_drift[i]
            c = offsets[i]
            r = N @ z - c
            if r.max() > 0.0:
                z = self._project(z, r, c, (i + 1) * h, i)
            xs[i + 1] = z
            x = z
        return xs

    def _run_drift(self, xs, step_drift, offsets, h):
        """State-independent drift: free flights and single-row slides are taken in vector chunks.

        Both chunk types reproduce the step-by-step iterates: a free flight is a
        cumulative sum while it stays inside, and a slide along one row keeps the
        tangential part of the summed drift with the normal part pinned to the
        moving offset while the drift keeps pushing outward.
        """
        N = self.N
        k = step_drift.shape[0]
        i, window = 0, 64
        while i < k:
            stop = min(k, i + window)
            path = xs[i] + np.cumsum(step_drift[i:stop], axis=0)
            bad = np.flatnonzero((path @ N.T - offsets[i:stop]).max(axis=1) > 0.0)
            if not bad.size:
                xs[i + 1 : stop + 1] = path
                i = stop
                window *= 2
                continue
            xs[i + 1 : i + 1 + bad[0]] = path[: bad[0]]
            i += int(bad[0])
            window = 64
            z = xs[i] + step_drift[i]
            c = offsets[i]
            r = N @ z - c
            xs[i + 1] = self._project(z, r, c, (i + 1) * h, i)
            i += 1
            hit = np.flatnonzero(r > 0.0)
            if hit.size == 1 and i < k:
                i = self._slide(xs, step_drift, offsets, i, int(hit[0]))

    def _slide(self, xs, step_drift, offsets, i, j):
        N = self.N
        a = N[j]
        k = step_drift.shape[0]
        start = xs[i]
        if abs(a @ start - offsets[i - 1, j]) > 1e-12 * (1.0 + abs(offsets[i - 1, j])):
            return i
        window = 64
        while i < k:
            stop = min(k, i + window)
            d = step_drift[i:stop]
            c = offsets[i:stop]
            prev = np.concatenate([[offsets[i - 1, j]], c[:-1, j]])
            pushing = prev + d @ a - c[:, j] >= 0.0
            tang = start + np.cumsum(d - np.outer(d @ a, a), axis=0)
            y = tang + np.outer(c[:, j] - tang @ a, a)
            scale = 1e-12 * (1.0 + np.abs(c).max(axis=1))
            inside = (y @ N.T - c).max(axis=1) <= scale
            ok = pushing & inside
            bad = np.flatnonzero(~ok)
            run = bad[0] if bad.size else stop - i
            xs[i + 1 : i + 1 + run] = y[:run]
            i += run
            if bad.size:
                return i
            start = xs[i]
            window *= 2
        return i

    def _project(self, z, r, c, t1, i):
        N = self.N
        # if the projection on a single violated halfspace is feasible it is the projection on C
        for j in np.flatnonzero(r > 0.0):
            y = z - r[j] * N[j]
            if (N @ y - c).max() <= 1e-12 * (1.0 + abs(c).max()):
                return y
        try:
            return geo.project(self.C, t1, z)
        except Exception as exc:
            exc.step = i
            raise


def integrate(P, law, k, recover=True):
    """Catching-up trajectory on the grid t_i = i T / k with u_i = law(t_i)."""
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    T = law.T if isinstance(law, ControlLaw) else float(law[0])
    h = T / k
    times = np.arange(k + 1) * h
    if isinstance(law, ControlLaw):
        controls = law.sample(times[:-1])
    else:  # (T, callable) pair: any measurable control sampled at left endpoints
        fn = law[1]
        controls = np.array([np.atleast_1d(fn(t)) for t in times[:-1]], dtype=float)
    if controls.shape[1] != P.d:
        raise DimensionMismatch(f"control has {controls.shape[1]} channels, problem expects {P.d}")
    xs = _Stepper(P).run(P.x0.copy(), controls, h)
    traj = DiscreteTrajectory(T, k, xs, controls)
    if P.lipschitz is not None:
        speed = np.linalg.norm(traj.velocities, axis=1).max()
        if speed > P.lipschitz + 1.0:
            warnings.warn(f"velocity {speed:.4g} exceeds the cap L+1 = {P.lipschitz + 1.0:.4g}")
    if recover:
        traj = traj.with_etas(recover_eta(P, traj))
    return traj


def _normal_part(P, traj):
    g = traj.states[:-1] @ P.g_A.T + traj.controls @ P.g_B.T + P.g_c
    return g, g - traj.velocities


def recover_eta(P, traj):
    """eta_i >= 0 with sum_j eta_ij a_j = g(x_i,u_i) - (x_{i+1}-x_i)/h over rows active at (t_{i+1}, x_{i+1})."""
    g, w = _normal_part(P, traj)
    etas = np.zeros((traj.k, P.C.s))
    gnorm = np.linalg.norm(g, axis=1)
    wnorm = np.linalg.norm(w, axis=1)
    for i in range(traj.k):
        bound = 1e-8 * (1.0 + gnorm[i])
        if wnorm[i] <= bound:
            continue
        t1 = (i + 1) * traj.h
        lam, res = geo.normal_decompose(P.C, t1, traj.states[i + 1], w[i])
        if res > bound:
            raise DecompositionFailed(
                f"step {i}: normal part not in the active normal cone (residual {res:.3e})", step=i, residual=res
            )
        etas[i] = lam
    return etas


def _cone_distance(C, t, x, w):
    r = geo.eval_constraints(C, t, x)
    tol = geo.default_tol(x)
    act = np.flatnonzero(r >= -tol)
    if act.size == 0:
        return float(np.linalg.norm(w)) + max(0.0, float(r.max()))
    _, res = nnls(C.normals[act].T, w)
    return float(res) + max(0.0, float(r.max()) - tol)


def inclusion_residual(P, traj, explicit=False, tau=0.0):
    """max_i dist( (x_i - x_{i+1})/h + g(x_i,u_i), cone of active normals ).

    Implicit form uses activity at (t_{i+1}, x_{i+1}); explicit=True evaluates
    at (t_i, x_i) and subtracts the relaxation radius tau (scalar or per step).
    """
    _, w = _normal_part(P, traj)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (traj.k,))
    worst = 0.0
    for i in range(traj.k):
        if explicit:
            d = _cone_distance(P.C, i * traj.h, traj.states[i], w[i])
            d = max(0.0, d - tau[i])
        else:
            d = _cone_distance(P.C, (i + 1) * traj.h, traj.states[i + 1], w[i])
        worst = max(worst, d)
    return worst


def first_contact_time(P, traj, tol=None):
    """Earliest grid time with a nonempty active set, or None."""
    for i in range(traj.k + 1):
        x = traj.states[i]
        r = geo.eval_constraints(P.C, i * traj.h, x)
        if np.any(np.abs(r) <= (geo.default_tol(x) if tol is None else tol)):
            return i * traj.h
    return None


def trajectory_distance(coarse, fine):
    """Max-norm gap between two trajectories at the coarse grid points (fine.k a multiple of coarse.k)."""
    ratio = fine.k // coarse.k
    if ratio * coarse.k != fine.k or not np.isclose(coarse.T, fine.T):
        raise ValueError("fine grid must refine the coarse grid")
    return float(np.abs(fine.states[::ratio] - coarse.states).max())
