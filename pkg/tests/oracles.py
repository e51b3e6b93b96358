"""Independent reference computations used by the tests."""
import itertools

import numpy as np


def projection_by_enumeration(N, c, z):
    """Nearest point of {x : N x <= c} to z, by projecting onto the affine hull of every
    subset of rows and keeping the closest candidate that is feasible.

    The projection lies in the relative interior of some face and is the
    projection onto that face's affine hull, so enumeration finds it.
    """
    s = N.shape[0]
    best, best_d = None, np.inf
    scale = 1.0 + np.abs(c).max() + np.abs(z).max()
    for size in range(0, s + 1):
        for rows in itertools.combinations(range(s), size):
            if rows:
                M = N[list(rows)]
                corr, *_ = np.linalg.lstsq(M, M @ z - c[list(rows)], rcond=None)
                x = z - corr
                if np.abs(M @ x - c[list(rows)]).max() > 1e-9 * scale:
                    continue  # inconsistent equalities
            else:
                x = z.copy()
            if (N @ x - c).max() <= 1e-10 * scale:
                d = np.linalg.norm(x - z)
                if d < best_d:
                    best, best_d = x, d
    return best


def random_polyhedron(rng, n, s, slope=True):
    """Unit normals and offsets with the origin strictly inside at t in [0, 1]."""
    from sweepopt.geometry import MovingPolyhedron

    N = rng.normal(size=(s, n))
    N /= np.linalg.norm(N, axis=1)[:, None]
    c0 = rng.uniform(0.2, 2.0, s)
    c1 = rng.uniform(-0.15, 0.3, s) if slope else np.zeros(s)
    return MovingPolyhedron.from_arrays(N, c0, c1)


def piecewise_integral_by_sampling(fn, T, samples=200000):
    """Midpoint rule on a very fine grid; for piecewise-constant integrands the error is O(1/samples)."""
    t = (np.arange(samples) + 0.5) * (T / samples)
    return float(np.sum(fn(t)) * T / samples)


def random_problem(rng, n, s, with_A=False):
    """Unconstrained-endpoint problem with control = velocity (plus a linear drift if with_A)."""
    from sweepopt.sweeping import SweepingProblem

    C = random_polyhedron(rng, n, s)
    return SweepingProblem(
        n=n,
        d=n,
        C=C,
        g_A=rng.normal(scale=0.5, size=(n, n)) if with_A else np.zeros((n, n)),
        g_B=np.eye(n),
        g_c=np.zeros(n),
        U_lo=-3 * np.ones(n),
        U_hi=3 * np.ones(n),
        x0=np.zeros(n),
        phi_wT=1.0,
        phi_W=np.ones(n),
        phi_xref=np.zeros(n),
        omega_x_E=np.zeros((0, n)),
        omega_x_e=np.zeros(0),
        omega_T=(0.0, 10.0),
    )
