"""Moving polyhedra C(t) = {x : <a_j, x> <= c_j(t)} with constant unit normals
and affine offsets c_j(t) = offset0_j + offset_slope_j * t.

Everything here is pure: projections, tangent/normal cones, activity and
constraint qualifications at a single time instant.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import DimensionMismatch, EmptySet, InfeasiblePoint, NotFound

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Row:
    normal: tuple
    offset0: float
    offset_slope: float = 0.0


@dataclass(frozen=True)
class MovingPolyhedron:
    dim: int
    rows: tuple
    normals: np.ndarray = field(init=False, repr=False, compare=False)
    offset0: np.ndarray = field(init=False, repr=False, compare=False)
    offset_slope: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(r if isinstance(r, Row) else Row(*r) for r in self.rows)
        if len(rows) < 1:
            raise ValueError("a polyhedron needs at least one row")
        normals = np.array([np.asarray(r.normal, dtype=float) for r in rows])
        if normals.shape != (len(rows), self.dim):
            raise DimensionMismatch(f"normals must have length {self.dim}")
        if not np.all(np.isfinite(normals)):
            raise ValueError("normals must be finite")
        lengths = np.linalg.norm(normals, axis=1)
        bad = np.flatnonzero(np.abs(lengths - 1.0) > UNIT_TOL)
        if bad.size:
            raise ValueError(f"row {bad[0] + 1} normal is not unit length (norm {lengths[bad[0]]!r})")
        normals.setflags(write=False)
        o0 = np.array([float(r.offset0) for r in rows])
        o1 = np.array([float(r.offset_slope) for r in rows])
        o0.setflags(write=False)
        o1.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offset0", o0)
        object.__setattr__(self, "offset_slope", o1)

    @classmethod
    def from_arrays(cls, normals, offset0, offset_slope=None):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offset0 = np.atleast_1d(np.asarray(offset0, dtype=float))
        if offset_slope is None:
            offset_slope = np.zeros_like(offset0)
        offset_slope = np.atleast_1d(np.asarray(offset_slope, dtype=float))
        rows = tuple(
            Row(tuple(float(v) for v in a), float(c0), float(c1))
            for a, c0, c1 in zip(normals, offset0, offset_slope)
        )
        return cls(normals.shape[1], rows)

    @property
    def s(self):
        return len(self.rows)

    def offsets(self, t):
        return self.offset0 + self.offset_slope * t


@dataclass(frozen=True)
class ActiveIndexSet:
    indices: tuple  # 0-based, sorted
    tolerance: float

    def __contains__(self, j):
        return j in self.indices

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def one_based(self):
        return tuple(j + 1 for j in self.indices)


def default_tol(x):
    return 1e-8 * (1.0 + float(np.linalg.norm(x)))


def _as_state(C, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (C.dim,):
        raise DimensionMismatch(f"expected a vector of length {C.dim}, got shape {x.shape}")
    return x


def eval_constraints(C, t, x):
    x = _as_state(C, x)
    return C.normals @ x - C.offsets(t)


def active_set(C, t, x, tol=None):
    r = eval_constraints(C, t, x)
    if tol is None:
        tol = default_tol(x)
    worst = int(np.argmax(r))
    if r[worst] > tol:
        raise InfeasiblePoint(
            f"row {worst + 1} violated by {r[worst]:.3e} at t={t}", violation=float(r[worst]), row=worst
        )
    idx = tuple(int(j) for j in np.flatnonzero(np.abs(r) <= tol))
    return ActiveIndexSet(idx, float(tol))


def _project_rows(N, c, z, tol=1e-12, max_iter=None):
    """Euclidean projection of z onto {x : N x <= c}.

    Active-set iteration on the dual  min_{lam>=0} 1/2|N^T lam|^2 - lam.(N z - c),
    with primal x = z - N^T lam. A violated row enters by the lowest-index rule.
    If it depends linearly on the free rows, the dual moves along the null
    direction (-beta, 1) until a free multiplier hits zero; no blocking row
    means the system is infeasible. Returns (x, lam, status) with status
    "ok", "empty" or "stalled".
    """
    s = N.shape[0]
    lam = np.zeros(s)
    free = np.zeros(s, dtype=bool)
    x = z.copy()
    scale = 1.0 + float(np.max(np.abs(z))) + float(np.max(np.abs(c)))
    if max_iter is None:
        max_iter = 50 * s + 50
    for _ in range(max_iter):
        r = N @ x - c
        viol = np.flatnonzero((r > tol * scale) & ~free)
        if viol.size == 0:
            return x, lam, "ok"
        j = int(viol[0])
        P = np.flatnonzero(free)
        if P.size:
            beta, *_ = np.linalg.lstsq(N[P].T, N[j], rcond=None)
            if np.linalg.norm(N[P].T @ beta - N[j]) <= 1e-10:
                pos = beta > 1e-14
                if not pos.any():
                    return x, lam, "empty"
                ratios = np.where(pos, lam[P] / np.where(pos, beta, 1.0), np.inf)
                block = int(np.argmin(ratios))
                theta = float(ratios[block])
                lam[P] -= theta * beta
                lam[j] = theta
                lam[P[block]] = 0.0
                free[P[block]] = False
                free[P[lam[P] <= 0.0]] = False
                lam[~free] = 0.0
                lam[j] = theta
        free[j] = True
        while True:
            P = np.flatnonzero(free)
            NP = N[P]
            trial = np.linalg.solve(NP @ NP.T, NP @ z - c[P])
            if np.all(trial > 0.0):
                lam[:] = 0.0
                lam[P] = trial
                break
            # walk toward the trial multipliers until the first one hits zero
            cur = lam[P]
            neg = trial <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(neg, cur / (cur - trial), np.inf)
            block = int(np.argmin(steps))  # first occurrence = lowest index
            alpha = min(max(float(steps[block]), 0.0), 1.0)
            cur = cur + alpha * (trial - cur)
            leave = cur <= 0.0
            leave[block] = True
            free[P[leave]] = False
            lam[:] = 0.0
            lam[P] = np.where(leave, 0.0, cur)
            if not free.any():
                break
        x = z - N.T @ lam
    return x, lam, "stalled"


def _lp_margin(N, c):
    """Max-margin point: maximise m subject to N x + m <= c, m <= 1."""
    s, n = N.shape
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    A_ub = np.hstack([N, np.ones((s, 1))])
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(obj, A_ub=A_ub, b_ub=c, bounds=bounds, method="highs")
    if res.status == 2:
        return None, -np.inf
    if res.status != 0:
        raise RuntimeError(f"margin LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def project(C, t, z):
    z = _as_state(C, z)
    c = C.offsets(t)
    x, _, status = _project_rows(C.normals, c, z)
    if status == "empty":
        raise EmptySet(f"C({t}) is empty")
    if status != "ok":
        _, margin = _lp_margin(C.normals, c)
        if margin < -1e-12:
            raise EmptySet(f"C({t}) is empty")
        raise RuntimeError("projection active-set iteration did not converge")
    return x


def tangent_project(C, t, x, v, tol=None):
    x = _as_state(C, x)
    v = np.asarray(v, dtype=float)
    act = active_set(C, t, x, tol)
    if not act.indices:
        return v.copy()
    N = C.normals[list(act.indices)]
    w, _, status = _project_rows(N, np.zeros(N.shape[0]), v)
    if status != "ok":
        raise RuntimeError("tangent cone projection failed")
    return w


def normal_decompose(C, t, x, w, tol=None):
    """Coefficients lam >= 0 on active rows minimising |sum lam_j a_j - w|.

    Returns (lam over all s rows, residual norm).
    """
    x = _as_state(C, x)
    w = np.asarray(w, dtype=float)
    act = active_set(C, t, x, tol)
    lam = np.zeros(C.s)
    if not act.indices:
        return lam, float(np.linalg.norm(w))
    idx = list(act.indices)
    coef, resid = nnls(C.normals[idx].T, w)
    lam[idx] = coef
    return lam, float(resid)


def check_licq(C, t, x, tol=None):
    act = active_set(C, t, x, tol)
    if not act.indices:
        return True
    N = C.normals[list(act.indices)]
    return int(np.linalg.matrix_rank(N, tol=1e-10)) == N.shape[0]


def check_plicq(C, t, x, tol=None):
    """True unless some nonzero lam >= 0 gives sum lam_j a_j = 0 over active rows."""
    act = active_set(C, t, x, tol)
    if not act.indices:
        return True
    N = C.normals[list(act.indices)]
    # min |N^T lam| over the simplex; zero means positive dependence
    weight = 1e3
    M = np.vstack([N.T, weight * np.ones((1, N.shape[0]))])
    rhs = np.zeros(M.shape[0])
    rhs[-1] = weight
    _, resid = nnls(M, rhs)
    return resid > 1e-9


def slater_point(C, t):
    """A point strictly inside C(t); NotFound when the maximal margin is not positive."""
    c = C.offsets(t)
    if C.s == 1:
        a = C.normals[0]
        return c[0] * a - a
    x, margin = _lp_margin(C.normals, c)
    if x is None or margin <= 1e-12:
        raise NotFound(f"C({t}) has empty interior (max margin {margin})")
    return x
