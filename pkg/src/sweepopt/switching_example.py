"""The two-dimensional benchmark family used throughout the package.

State x in R^2, control u in [-2, 2], g(x, u) = (0, u), moving halfspace
x1 + x2 <= 1 - t, start at the origin, endpoint x2(T) = 1, cost
T + 1/2 (x1(T) - alpha)^2.  Four analytic strategies are known in closed form.
"""
import math

import numpy as np

from .geometry import MovingPolyhedron
from .sweeping import ControlLaw, SweepingProblem

INV_SQRT2 = 1.0 / math.sqrt(2.0)

STRATEGIES = ("no_switch", "boundary_ride", "slide_off", "switch_down")


def example_problem(alpha=-3.0, T_interval=(0.0, 10.0)):
    C = MovingPolyhedron.from_arrays([[INV_SQRT2, INV_SQRT2]], [INV_SQRT2], [-INV_SQRT2])
    return SweepingProblem(
        n=2,
        d=1,
        C=C,
        g_A=np.zeros((2, 2)),
        g_B=[[0.0], [1.0]],
        g_c=[0.0, 0.0],
        U_lo=[-2.0],
        U_hi=[2.0],
        x0=[0.0, 0.0],
        phi_wT=1.0,
        phi_W=[1.0, 0.0],
        phi_xref=[float(alpha), 0.0],
        omega_x_E=[[0.0, 1.0]],
        omega_x_e=[1.0],
        omega_T=T_interval,
        name="example61",
    )


# closed-form values; None where the strategy is not admissible for alpha

def cost_no_switch(alpha):
    return 1.0 + 0.5 * (alpha + 1.0) ** 2


def cost_boundary_ride(alpha):
    return -alpha - 3.0 / 8.0 if alpha <= -2.5 else None


def cost_slide_off(alpha):
    return -0.5 - alpha if alpha < -2.0 else None


def switch_down_time(alpha):
    return -2.0 / 9.0 - 2.0 * alpha / 3.0


def cost_switch_down(alpha):
    return -13.0 / 72.0 - 5.0 * alpha / 6.0 if switch_down_time(alpha) > 1.0 else None


CLOSED_FORM = {
    "no_switch": cost_no_switch,
    "boundary_ride": cost_boundary_ride,
    "slide_off": cost_slide_off,
    "switch_down": cost_switch_down,
}


def strategy_law(name, alpha):
    """Piecewise-constant law realising a named strategy, or None if not admissible."""
    if name == "no_switch":
        return ControlLaw.constant([2.0], 1.0)
    if name == "boundary_ride":
        if alpha > -2.5:
            return None
        T = -alpha - 1.5
        if T == 1.0:
            return ControlLaw.constant([2.0], 1.0)
        # u = 2 until contact at 1/3, then the constant facet control reaching x2(T) = 1
        return ControlLaw.from_switches(T, [1.0 / 3.0], [[2.0], [1.0 + 2.0 / (3.0 * T - 1.0)]])
    if name == "slide_off":
        if alpha >= -2.0:
            return None
        tau = (-1.0 - 2.0 * alpha) / 3.0
        return ControlLaw.from_switches(-1.0 - alpha, [tau], [[2.0], [-1.0]])
    if name == "switch_down":
        tau = switch_down_time(alpha)
        if tau <= 1.0:
            return None
        return ControlLaw.from_switches((5.0 * tau - 1.0) / 4.0, [tau], [[2.0], [-2.0]])
    raise KeyError(name)
