"""Derivative-free search over piecewise-constant controls and the horizon.

Decision vector: (m-1 switching fractions of T, m control levels per channel, T).
Objective: Mayer cost + weight * (endpoint violation)^2.  A coarse multi-start
grid on a cheap mesh picks starting points, compass search polishes them,
and the winner is carried up a ladder of meshes to the requested k.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoFeasiblePoint
from .problem import mayer_cost
from .sweeping import ControlLaw, integrate

MAX_DOUBLINGS = 8


@dataclass(frozen=True)
class OptimizerConfig:
    segments: int = 3
    k: int = 4000
    coarse_grid: int = 3
    polish_iters: int = 400
    penalty_weight: float = 10.0
    seed: int = 0
    T_bracket: tuple = None  # defaults to omega_T of the problem
    coarse_k: int = 40  # mesh used by the multi-start stage
    n_starts: int = 12
    random_starts: int = 8
    endpoint_tol: float = 1e-3
    step_tol: float = 1e-4  # final compass step, relative to each variable's range

    def __post_init__(self):
        if self.segments < 1:
            raise ValueError("segments must be at least 1")
        if self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be positive")
        if self.k < 1 or self.coarse_k < 1:
            raise ValueError("step counts must be positive")


@dataclass
class OptimizerResult:
    law: ControlLaw
    T: float
    J: float
    penalty: float  # endpoint violation |E x(T) - e| of the reported law
    history: list
    k: int
    decision: np.ndarray
    weight: float
    evaluations: int = 0
    delta_J: float = None  # set by refine: J(k2) - J(k)

    def main_switch(self):
        """Breakpoint across which the control jumps the most (None for one segment)."""
        b, L = self.law.breakpoints, self.law.levels
        if L.shape[0] < 2:
            return None
        jumps = np.linalg.norm(np.diff(L, axis=0), axis=1)
        return float(b[1 + int(np.argmax(jumps))])


class _Search:
    def __init__(self, P, cfg):
        self.P = P
        self.cfg = cfg
        m, d = cfg.segments, P.d
        lo_T, hi_T = cfg.T_bracket if cfg.T_bracket is not None else P.omega_T
        lo_T = max(float(lo_T), float(P.omega_T[0]))
        hi_T = min(float(hi_T), float(P.omega_T[1]))
        if not np.isfinite(hi_T):
            raise ValueError("the horizon needs a bounded search bracket")
        if hi_T <= 0 or lo_T > hi_T:
            raise ValueError(f"empty horizon bracket ({lo_T}, {hi_T})")
        lo_T = max(lo_T, 1e-6 * hi_T)
        self.m, self.d = m, d
        self.lo = np.concatenate([np.zeros(m - 1), np.tile(P.U_lo, m), [lo_T]])
        self.hi = np.concatenate([np.ones(m - 1), np.tile(P.U_hi, m), [hi_T]])
        self.span = self.hi - self.lo
        self.cache = {}
        self.profiles = {}
        self.evaluations = 0

    def decode(self, v):
        m, d = self.m, self.d
        T = float(v[-1])
        fr = np.sort(v[: m - 1])
        levels = v[m - 1 : m - 1 + m * d].reshape(m, d)
        cuts = np.concatenate([[0.0], fr * T, [T]])
        keep = np.concatenate([np.diff(cuts) > 1e-12 * T, [True]])
        # drop empty segments; a segment survives if it has positive length
        seg_ok = keep[:-1]
        b = np.concatenate([[0.0], cuts[1:][seg_ok]])
        b[-1] = T
        return ControlLaw(b, levels[seg_ok])

    def evaluate(self, v, k):
        key = (v.tobytes(), k)
        hit = self.cache.get(key)
        if hit is None:
            law = self.decode(v)
            traj = integrate(self.P, law, k, recover=False)
            hit = (mayer_cost(self.P, traj), self.P.endpoint_violation(traj.states[-1]))
            self.cache[key] = hit
            self.evaluations += 1
        return hit

    def objective(self, v, k, w):
        J, viol = self.evaluate(v, k)
        return J + w * viol * viol

    # -- horizon profile: best T for fixed fractions and levels ------------
    def scan_T(self, vp, k, w):
        """(objective, T) at the best point of a uniform scan over the horizon bracket."""
        grid = np.linspace(self.lo[-1], self.hi[-1], 4 * max(1, int(self.cfg.coarse_grid)) + 1)
        vals = [self.objective(np.append(vp, T), k, w) for T in grid]
        j = int(np.argmin(vals))
        return vals[j], float(grid[j])

    def profile(self, vp, k, w, T0, width):
        """(objective, T) minimising over T: bracket outward from T0, then golden section."""
        key = (vp.tobytes(), k, w)
        hit = self.profiles.get(key)
        if hit is not None:
            return hit
        lo, hi = self.lo[-1], self.hi[-1]
        full = lambda T: self.objective(np.append(vp, T), k, w)
        tol = max(self.min_steps()[-1], 0.25 / k * self.span[-1])
        T0 = min(max(T0, lo), hi)
        f0 = full(T0)
        left, right = max(T0 - width, lo), min(T0 + width, hi)
        fl, fr = full(left), full(right)
        # walk downhill, doubling the stride, until the minimum is bracketed
        stride = width
        while fl < f0 and left > lo:
            right, T0, f0 = T0, left, fl
            stride *= 2.0
            left = max(T0 - stride, lo)
            fl = full(left)
        while fr < f0 and right < hi:
            left, T0, f0 = T0, right, fr
            stride *= 2.0
            right = min(T0 + stride, hi)
            fr = full(right)
        best = min((fl, left), (f0, T0), (fr, right))
        a, b = left, right
        ratio = 0.5 * (np.sqrt(5.0) - 1.0)
        c, d = b - ratio * (b - a), a + ratio * (b - a)
        fc, fd = full(c), full(d)
        while b - a > tol:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - ratio * (b - a)
                fc = full(c)
            else:
                a, c, fc = c, d, fd
                d = a + ratio * (b - a)
                fd = full(d)
        best = min(best, (fc, c), (fd, d))
        self.profiles[key] = (best[0], float(best[1]))
        return self.profiles[key]

    def start_points(self, rng):
        """Grid over fractions and levels (the horizon is profiled), plus seeded random points."""
        g = max(1, int(self.cfg.coarse_grid))
        axes = []
        for i in range(self.lo.size - 1):
            if i < self.m - 1:
                axes.append(np.linspace(0.0, 1.0, 2 * g + 2)[1:-1])
            elif g == 1:
                axes.append(np.array([0.5 * (self.lo[i] + self.hi[i])]))
            else:
                axes.append(np.linspace(self.lo[i], self.hi[i], g))
        if axes:
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.column_stack([a.ravel() for a in mesh])
        else:
            pts = np.zeros((1, 0))
        lo, span = self.lo[:-1], self.span[:-1]
        extra = lo + rng.random((int(self.cfg.random_starts), lo.size)) * span
        pts = np.vstack([pts, extra])
        # fractions are sorted on decoding, so keep one representative per ordering
        pts[:, : self.m - 1] = np.sort(pts[:, : self.m - 1], axis=1)
        _, first = np.unique(pts, axis=0, return_index=True)
        pts = pts[np.sort(first)]
        return pts[rng.permutation(len(pts))]

    def compass(self, fun, v, lo, hi, steps, min_steps, iters, record):
        """Compass search with a pattern move after each success; steps halve on a failed poll."""
        fv = fun(v)
        for _ in range(iters):
            if np.all(steps <= min_steps):
                break
            moved = False
            for i in range(v.size):
                if steps[i] <= min_steps[i]:
                    continue
                for sgn in (1.0, -1.0):
                    cand = v.copy()
                    cand[i] = min(max(v[i] + sgn * steps[i], lo[i]), hi[i])
                    if cand[i] == v[i]:
                        continue
                    fc = fun(cand)
                    if fc < fv:
                        prev, v, fv, moved = v, cand, fc, True
                        ext = np.minimum(np.maximum(v + (v - prev), lo), hi)
                        fe = fun(ext)
                        if fe < fv:
                            v, fv = ext, fe
                        break
            if moved:
                record(v, fv)
            else:
                steps = np.where(steps > min_steps, 0.5 * steps, steps)
        return v, fv

    def _logger(self, history, stage, k, w, horizon=None):
        def record(v, f):
            full = v if horizon is None else np.append(v, horizon(v))
            J, viol = self.evaluate(full, k)
            history.append({"stage": stage, "k": k, "weight": w, "x": full.tolist(), "J": J,
                            "violation": viol, "objective": f})

        return record

    def min_steps(self):
        return self.cfg.step_tol * np.maximum(self.span, 1e-12)

    def solve_profiled(self, v, k, w, steps, min_steps, history, stage):
        """Compass over fractions and levels with T profiled out; penalty doubles until feasible.

        The profile follows the endpoint valley, which coordinate steps with T
        held fixed cannot do once the penalty is stiff.
        """
        lo, hi = self.lo[:-1], self.hi[:-1]
        iters = int(self.cfg.polish_iters)
        width = max(4.0 / k, 0.01) * self.span[-1]
        vp, current = v[:-1].copy(), {"T": float(v[-1])}
        for doubling in range(MAX_DOUBLINGS + 1):
            fun = lambda u: self.profile(u, k, w, current["T"], width)[0]

            def horizon(u):
                current["T"] = self.profiles[(u.tobytes(), k, w)][1]
                return current["T"]

            fun(vp)
            horizon(vp)
            vp, _ = self.compass(fun, vp, lo, hi, steps, min_steps, iters,
                                 self._logger(history, stage, k, w, horizon))
            full = np.append(vp, horizon(vp))
            if self.evaluate(full, k)[1] <= self.cfg.endpoint_tol or doubling == MAX_DOUBLINGS:
                return full, w
            w *= 2.0
            steps = 16.0 * min_steps

    def solve_at(self, v, k, w, steps, history, stage):
        """Compass over the full decision vector; penalty doubles until the endpoint is met."""
        min_steps = self.min_steps()
        iters = int(self.cfg.polish_iters)
        for doubling in range(MAX_DOUBLINGS + 1):
            fun = lambda u: self.objective(u, k, w)
            v, _ = self.compass(fun, v, self.lo, self.hi, steps, min_steps, iters,
                                self._logger(history, stage, k, w))
            if self.evaluate(v, k)[1] <= self.cfg.endpoint_tol or doubling == MAX_DOUBLINGS:
                return v, w
            w *= 2.0
            steps = 16.0 * min_steps


def _key(f, v):
    return (f, tuple(v))


def optimize(P, cfg):
    S = _Search(P, cfg)
    rng = np.random.default_rng(cfg.seed)
    w = float(cfg.penalty_weight)
    history = []
    scratch = []  # pre-selection iterates are not part of the reported history

    # multi-start on a cheap mesh; each grid point gets its best horizon from a scan
    k_a = min(cfg.k, cfg.coarse_k)
    scored = []
    for vp in S.start_points(rng):
        f, T = S.scan_T(vp, k_a, w)
        scored.append(_key(f, np.append(vp, T)))
    scored.sort()
    by_pattern = {}
    for key in scored:  # one start per control-level pattern
        by_pattern.setdefault(key[1][S.m - 1 : -1], key)
    starts = [np.array(v) for _, v in sorted(by_pattern.values())[: max(1, cfg.n_starts)]]

    coarse_min = np.maximum(S.min_steps(), 0.25 / k_a * S.span)[:-1]
    best = None
    for v in starts:
        full, cw = S.solve_profiled(v, k_a, w, 0.25 * S.span[:-1], coarse_min, scratch, "start")
        key = _key(S.objective(full, k_a, cw), full)
        if best is None or key < best[0]:
            best = (key, full, cw)
    _, v, w = best
    J, viol = S.evaluate(v, k_a)
    history.append({"stage": "select", "k": k_a, "weight": w, "x": v.tolist(), "J": J,
                    "violation": viol, "objective": S.objective(v, k_a, w)})

    # carry the winner up a ladder of meshes
    k_prev = k_a
    while k_prev < cfg.k:
        k_next = 4 * k_prev
        if 2 * k_next > cfg.k:
            k_next = cfg.k
        v, w = _climb(S, v, k_prev, k_next, w, history, f"mesh{k_next}")
        k_prev = k_next
    return _finish(P, S, v, cfg.k, w, history)


def _climb(S, v, k_prev, k_next, w, history, stage):
    """Profiled compass on the new mesh, then a plain compass polish with T free."""
    steps = np.maximum(4.0 / k_prev, 4.0 * S.cfg.step_tol) * S.span
    v, w = S.solve_profiled(v, k_next, w, steps[:-1], S.min_steps()[:-1], history, stage)
    return S.solve_at(v, k_next, w, 16.0 * S.min_steps(), history, stage)


def _finish(P, S, v, k, w, history):
    law = S.decode(v)
    traj = integrate(P, law, k, recover=False)
    J = mayer_cost(P, traj)
    viol = P.endpoint_violation(traj.states[-1])
    if viol > S.cfg.endpoint_tol:
        raise NoFeasiblePoint(
            f"endpoint violation {viol:.3e} exceeds tolerance {S.cfg.endpoint_tol:.1e}", best_penalty=viol
        )
    return OptimizerResult(law=law, T=law.T, J=J, penalty=viol, history=history, k=k,
                           decision=np.array(v), weight=w, evaluations=S.evaluations)


def refine(P, result, k2, cfg=None):
    """Warm-started polish of a result on a finer mesh."""
    if k2 == result.k:
        return result
    if k2 < result.k:
        raise ValueError("refine needs a finer mesh")
    segments = result.decision.size // (P.d + 1)  # decision length is m (d + 1)
    cfg = replace(cfg or OptimizerConfig(), segments=segments, k=k2)
    S = _Search(P, cfg)
    history = list(result.history)
    v, w = _climb(S, np.array(result.decision), result.k, k2, result.weight, history, f"refine{k2}")
    out = _finish(P, S, v, k2, w, history)
    out.delta_J = out.J - result.J
    return out

