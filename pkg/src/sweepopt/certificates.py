"""Discrete multipliers for a computed trajectory and a checker for the optimality system.

The integrator is implicit in the state constraint: eta_i lives at the new
node x_{i+1}.  Differentiating the catching-up relation then puts the
normal-cone coderivative term of step i at node i+1, so in this module

    (p_{i+1} - p_i) / h = -A^T p_{i+1} + sum_j gamma_{i-1,j} a_j      (i >= 1)
    (p_1 - p_0) / h     = -A^T p_1
    psi_i               = B^T p_{i+1}            (density; the step carries h psi_i)
    -p_k - h sum_j gamma_{k-1,j} a_j - sum_j etaT_j a_j  in  mu0 grad phi + range(E^T)
    (1/k) sum_i <p_{i+1}, (x_{i+1} - x_i)/h> - mu0 wT  in  N(T; Omega_T)

gamma_{i-1} is signed by the index sets of y = p_i at x_i, and eta_{i-1,j} > 0
forces <a_j, p_i> = 0.  The last step's gamma acts as an atom at T.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import geometry as geo
from .errors import LICQViolated, SingularAdjointStep
from .sweeping import recover_eta

RIDGE_COND = 1e12


@dataclass
class MultiplierBundle:
    mu0: float
    p: np.ndarray  # (k+1, n)
    gamma: np.ndarray  # (k, s); row i is attached to node i+1
    psi: np.ndarray  # (k, d), densities
    etaT: np.ndarray  # (s,)
    lambdaT: np.ndarray  # (rows of E,)
    q: np.ndarray  # (k+1, n)
    Hbar: float
    rho_k: float = 0.0
    xi_u: np.ndarray = None
    xi_y: np.ndarray = None
    normal_form: bool = True

    def __post_init__(self):
        k = self.p.shape[0] - 1
        if self.xi_u is None:
            self.xi_u = np.zeros((k, self.psi.shape[1]))
        if self.xi_y is None:
            self.xi_y = np.zeros((k, self.p.shape[1]))


@dataclass
class CertificateReport:
    stationarity_resid: float
    dynamics_resid: float
    transversality_resid: float
    complementarity_ok: bool
    sign_ok: bool
    maximization_resid: float
    nontriviality_norm: float
    support_ok: bool
    Hbar_minus_mu: float
    tol: float = 0.0
    index_ambiguity: bool = False  # some <a_j, p_i> lies between the strict and the certificate tolerance
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _y_tol(y):
    return 1e-9 * (1.0 + float(np.linalg.norm(y)))


def _eta_tol(etas):
    return 1e-9 * (1.0 + (float(np.max(etas)) if etas.size else 0.0))


def index_sets(C, t, x, y, tol=None):
    """(I0, Igt): active rows with <a_j, y> = 0 within tol and with <a_j, y> > tol. 0-based."""
    act = geo.active_set(C, t, x)
    if tol is None:
        tol = _y_tol(y)
    dots = C.normals @ np.asarray(y, dtype=float)
    I0 = tuple(j for j in act if abs(dots[j]) <= tol)
    Igt = tuple(j for j in act if dots[j] > tol)
    return I0, Igt


def _span_cone_distance(span_vecs, cone_vecs, r):
    """Distance from r to span(span_vecs) + cone(cone_vecs)."""
    cols = [v for v in span_vecs] + [-v for v in span_vecs] + [v for v in cone_vecs]
    if not cols:
        return float(np.linalg.norm(r))
    _, res = nnls(np.column_stack(cols), r)
    return float(res)


def coderivative_membership(P, t, x, u, w, y, z, check_domain=False, tol=None):
    """Residual of z = (z_x, z_u) against the coderivative upper estimate of
    (x, u) -> -g(x, u) + N(x; C(t)) at (x, u, w) in direction y.

    The x-slot may differ from -A^T y by span{a_j : I0} + cone{a_j : Igt};
    the u-slot must equal -B^T y.  With check_domain, also returns whether y
    satisfies the domain sign pattern: <a_j, y> = 0 where the normal-cone
    coefficient of w + g is positive and <a_j, y> >= 0 where it is zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    n = P.n
    zx, zu = z[:n], z[n:]
    I0, Igt = index_sets(P.C, t, x, y, tol)
    N = P.C.normals
    res_x = _span_cone_distance([N[j] for j in I0], [N[j] for j in Igt], zx + P.g_A.T @ y)
    res_u = float(np.linalg.norm(zu + P.g_B.T @ y))
    residual = res_x + res_u
    if not check_domain:
        return residual
    if not geo.check_licq(P.C, t, x):
        raise LICQViolated(f"active normals at t={t} are linearly dependent")
    v = np.asarray(w, dtype=float) + P.g(x, u)
    lam, dec = geo.normal_decompose(P.C, t, x, v)
    ytol = _y_tol(y) if tol is None else tol
    if dec > 1e-8 * (1.0 + float(np.linalg.norm(v))):
        return residual, False
    act = geo.active_set(P.C, t, x).indices
    dots = N @ y
    lam_tol = 1e-9 * (1.0 + float(np.max(lam)))
    ok = all(abs(dots[j]) <= ytol if lam[j] > lam_tol else dots[j] >= -ytol for j in act)
    return residual, ok


def compute_Hbar(traj, p):
    p = np.asarray(p, dtype=float)
    if p.shape[0] != traj.k + 1:
        raise ValueError("p needs k+1 entries")
    return float(np.sum(p[1:] * traj.velocities)) / traj.k


def _reconstruct_q(p, gamma, normals, h):
    """q_i = p_i + h sum_{l >= max(i-1, 0)} gamma_l-weighted normals; smooth part of the adjoint."""
    k = gamma.shape[0]
    tail = np.cumsum((gamma @ normals)[::-1], axis=0)[::-1] * h  # tail[l] = h sum_{m>=l}
    q = p.copy()
    q[0] += tail[0]
    q[1:] += tail
    return q


def _time_cone(P, T):
    """Sign of the normal ray of Omega_T at T: +1 at the upper end, -1 at the lower, 0 inside."""
    lo, hi = P.omega_T
    scale = 1e-12 * (1.0 + abs(T))
    if abs(T - hi) <= scale and hi > lo:
        return 1.0
    if abs(T - lo) <= scale and hi > lo:
        return -1.0
    return 0.0


def _nonneg_lstsq(M, rhs, nonneg):
    """Minimum-norm least squares with the flagged unknowns kept >= 0 by dropping the most negative one."""
    fixed = np.zeros(M.shape[1], dtype=bool)
    while True:
        sol = np.zeros(M.shape[1])
        free = ~fixed
        if free.any():
            sol[free], *_ = np.linalg.lstsq(M[:, free], rhs, rcond=None)
        neg = np.flatnonzero(nonneg & free & (sol < -1e-12))
        if neg.size == 0:
            return sol
        fixed[neg[np.argmin(sol[neg])]] = True


def solve_multipliers(P, traj, cfg=None, tol=None):
    """Multipliers (normal form first, abnormal fallback) for a self-referenced trajectory."""
    etas = traj.etas if traj.etas is not None else recover_eta(P, traj)
    k, h, n, s = traj.k, traj.h, P.n, P.C.s
    N = P.C.normals
    A, B = P.g_A, P.g_B
    E = P.omega_x_E
    xk = traj.states[-1]
    etol = _eta_tol(etas)

    # unknowns v = [mu0, p_k (n), kappa (active rows at x_k), lambda (rows of E), nu (0 or 1)]
    act_k = list(geo.active_set(P.C, traj.T, xk).indices)
    J_k = [j for j in act_k if etas[k - 1, j] > etol]
    time_sign = _time_cone(P, traj.T)
    n_nu = 1 if time_sign else 0
    i_p = 1
    i_kap = i_p + n
    i_lam = i_kap + len(act_k)
    i_nu = i_lam + E.shape[0]
    nv = i_nu + n_nu

    # backward sweep: p_i = Pmat[i] @ v, gamma_{i-1} = Gam[i] @ v
    Pmat = np.zeros((k + 1, n, nv))
    Pmat[k][:, i_p : i_p + n] = np.eye(n)
    Gam = {}
    step = np.eye(n) + h * A.T
    for i in range(k - 1, -1, -1):
        ptil = step @ Pmat[i + 1]
        if i == 0:
            Pmat[0] = ptil
            break
        J = [j for j in range(s) if etas[i - 1, j] > etol]
        if J:
            aJ = N[J]
            G = aJ @ aJ.T
            if np.linalg.cond(G) > RIDGE_COND:
                raise SingularAdjointStep(f"node {i}: dependent normals among rows {[j + 1 for j in J]}", step=i)
            gam = np.linalg.solve(G, aJ @ ptil) / h
            Gam[i] = (J, gam)
            Pmat[i] = ptil - h * aJ.T @ gam
        else:
            Pmat[i] = ptil

    # equations, homogeneous in v
    rows = []
    trans = np.zeros((n, nv))
    trans[:, 0] = -P.phi_grad_x(xk)
    trans[:, i_p : i_p + n] = -np.eye(n)
    if act_k:
        trans[:, i_kap:i_lam] = -N[act_k].T
    trans[:, i_lam:i_nu] = -E.T
    rows.append(trans)
    for j in J_k:
        rows.append((N[j] @ Pmat[k])[None, :])
    hrow = np.einsum("in,inv->v", traj.velocities, Pmat[1:]) / k
    hrow[0] -= P.phi_wT
    if n_nu:
        hrow[i_nu] = -time_sign
    rows.append(hrow[None, :])
    M = np.vstack(rows)

    nonneg = np.zeros(nv - 1, dtype=bool)
    for c, j in enumerate(act_k):
        nonneg[i_kap - 1 + c] = j not in J_k
    if n_nu:
        nonneg[i_nu - 1] = True

    sol = _nonneg_lstsq(M[:, 1:], -M[:, 0], nonneg)
    v = np.concatenate([[1.0], sol])
    normal = True
    resid = float(np.linalg.norm(M @ v))
    scale = 1.0 + float(np.max(np.abs(v)))
    base_tol = 10.0 * h * scale if tol is None else tol
    if resid > base_tol:
        # abnormal attempt: a direction in the null space of the multiplier part
        _, sv, vt = np.linalg.svd(M[:, 1:])
        if sv.size == M.shape[1] - 1 and sv[-1] > base_tol:
            pass  # no abnormal multiplier either; keep the least-squares normal attempt
        else:
            w = vt[-1]
            if np.sum(w[nonneg]) < 0:
                w = -w
            v = np.concatenate([[0.0], w])
            normal = False

    bundle = _assemble(P, traj, etas, v, Pmat, Gam, act_k, J_k, (i_p, i_kap, i_lam, i_nu))
    bundle.normal_form = normal
    if not normal:
        norm = _nontriviality(bundle, h)
        if norm > 0:
            bundle = _scaled(bundle, 1.0 / norm, traj)
    return bundle


def _assemble(P, traj, etas, v, Pmat, Gam, act_k, J_k, offsets):
    k, h, s = traj.k, traj.h, P.C.s
    i_p, i_kap, i_lam, i_nu = offsets
    p = Pmat @ v
    gamma = np.zeros((k, s))
    for i, (J, gam) in Gam.items():
        gamma[i - 1, J] = gam @ v
    kappa = v[i_kap:i_lam]
    etaT = np.zeros(s)
    for c, j in enumerate(act_k):
        if j in J_k:
            # free-sign part at the last node: positive mass is endpoint multiplier, negative is the atom
            etaT[j] = max(kappa[c], 0.0)
            gamma[k - 1, j] = min(kappa[c], 0.0) / h
        else:
            etaT[j] = max(kappa[c], 0.0)
    psi = p[1:] @ P.g_B
    q = _reconstruct_q(p, gamma, P.C.normals, h)
    return MultiplierBundle(
        mu0=float(v[0]),
        p=p,
        gamma=gamma,
        psi=psi,
        etaT=etaT,
        lambdaT=np.array(v[i_lam:i_nu]),
        q=q,
        Hbar=compute_Hbar(traj, p),
    )


def _scaled(b, c, traj):
    return MultiplierBundle(
        mu0=b.mu0 * c,
        p=b.p * c,
        gamma=b.gamma * c,
        psi=b.psi * c,
        etaT=b.etaT * c,
        lambdaT=b.lambdaT * c,
        q=b.q * c,
        Hbar=compute_Hbar(traj, b.p * c),
        normal_form=b.normal_form,
    )


def _nontriviality(b, h):
    return float(b.mu0 + np.linalg.norm(b.etaT) + np.linalg.norm(b.p[0]) + h * np.sum(np.linalg.norm(b.psi, axis=1)))


def default_tol(traj, bundle):
    return 10.0 * traj.h * (1.0 + float(np.max(np.abs(bundle.p))))


def check_certificate(P, traj, bundle, tol=None):
    """Evaluate every condition of the discrete optimality system for (traj, bundle)."""
    etas = traj.etas if traj.etas is not None else recover_eta(P, traj)
    k, h, s = traj.k, traj.h, P.C.s
    N = P.C.normals
    p, gamma, psi = bundle.p, bundle.gamma, bundle.psi
    if p.shape != (k + 1, P.n) or gamma.shape != (k, s) or psi.shape != (k, P.d):
        raise ValueError("bundle is not shaped for this trajectory")
    if tol is None:
        tol = default_tol(traj, bundle)
    xs, us, times = traj.states, traj.controls, traj.times
    violations = []

    # primal relation: velocity = g - sum eta a
    g = xs[:-1] @ P.g_A.T + us @ P.g_B.T + P.g_c
    dynamics = float(np.max(np.linalg.norm(traj.velocities - g + etas @ N, axis=1)))

    # adjoint relation and u-slot
    adj = (p[1:] - p[:-1]) / h + p[1:] @ P.g_A
    adj[1:] -= gamma[:-1] @ N
    stationarity = float(np.max(np.linalg.norm(adj, axis=1)))
    stationarity = max(stationarity, float(np.max(np.linalg.norm(psi - p[1:] @ P.g_B, axis=1))))

    # transversality in x and in T
    xk = xs[-1]
    tx = -p[-1] - h * gamma[-1] @ N - bundle.etaT @ N - bundle.mu0 * P.phi_grad_x(xk)
    E = P.omega_x_E
    if E.shape[0]:
        tx = tx - E.T @ bundle.lambdaT
    Hbar = compute_Hbar(traj, p)
    gap = Hbar - bundle.mu0 * P.phi_wT
    sign = _time_cone(P, traj.T)
    Hres = abs(gap) if sign == 0 else max(0.0, -sign * gap)
    transversality = max(float(np.linalg.norm(tx)), Hres)

    # complementarity: (eta), (eta1), (94), (96)
    etol = _eta_tol(etas)
    comp = True
    for i in range(k):
        r = geo.eval_constraints(P.C, times[i + 1], xs[i + 1])
        inactive = r < -geo.default_tol(xs[i + 1])
        if np.any(etas[i][inactive] > etol) or np.any(gamma[i][inactive] != 0.0):
            comp = False
        y = p[i + 1]
        for j in np.flatnonzero(etas[i] > etol):
            if abs(N[j] @ y) > tol * (1.0 + np.linalg.norm(y)):
                comp = False
    r = geo.eval_constraints(P.C, traj.T, xk)
    if np.any(bundle.etaT[r < -geo.default_tol(xk)] != 0.0):
        comp = False
    if not comp:
        violations.append("complementarity")

    # signs: mu0 >= 0, etaT >= 0, gamma_{i-1} per index sets of p_i at x_i
    sign_ok = bundle.mu0 >= 0.0 and bool(np.all(bundle.etaT >= 0.0))
    ambiguous = False
    for i in range(1, k + 1):
        row = gamma[i - 1]
        if not np.any(row):
            continue
        I0, Igt = index_sets(P.C, times[i], xs[i], p[i], tol)
        strict0, _ = index_sets(P.C, times[i], xs[i], p[i])
        ambiguous |= set(I0) != set(strict0)
        for j in np.flatnonzero(row):
            if j in Igt and row[j] < 0.0:
                sign_ok = False
            if j not in I0 and j not in Igt:
                sign_ok = False
    if not sign_ok:
        violations.append("sign")

    # maximization over the box: max_U <psi, u> - <psi, u_i>
    best = np.where(psi > 0.0, P.U_hi, P.U_lo)
    maximization = float(np.max(np.sum(psi * (best - us), axis=1)))

    # support: gamma_> must vanish on interior runs where every active row carries eta > 0
    interior = np.zeros(k + 2, dtype=bool)
    for i in range(1, k + 1):
        act = geo.active_set(P.C, times[i], xs[i]).indices
        interior[i] = bool(act) and all(etas[i - 1, j] > etol for j in act)
    support_ok = True
    for i in range(2, k):
        if interior[i - 1] and interior[i] and interior[i + 1]:
            _, Igt = index_sets(P.C, times[i], xs[i], p[i], tol)
            if any(gamma[i - 1, j] > tol for j in Igt):
                support_ok = False
    if not support_ok:
        violations.append("support")

    norm = _nontriviality(bundle, h)
    if norm <= 1e-12:
        violations.append("nontriviality")
    for name, val in (("stationarity", stationarity), ("dynamics", dynamics), ("transversality", transversality),
                      ("maximization", maximization), ("Hbar", Hres)):
        if val > tol:
            violations.append(name)

    return CertificateReport(
        stationarity_resid=stationarity,
        dynamics_resid=dynamics,
        transversality_resid=transversality,
        complementarity_ok=comp,
        sign_ok=bool(sign_ok),
        maximization_resid=max(0.0, maximization),
        nontriviality_norm=norm,
        support_ok=support_ok,
        Hbar_minus_mu=Hres,
        tol=tol,
        index_ambiguity=ambiguous,
        violations=violations,
    )
