"""Simulate the four closed-form strategies of the example family and compare with their formulas."""
import argparse

from sweepopt.problem import feasibility, mayer_cost
from sweepopt.sweeping import first_contact_time, integrate
from sweepopt.switching_example import CLOSED_FORM, STRATEGIES, example_problem, strategy_law


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=-3.0)
    ap.add_argument("--k", type=int, default=4000)
    args = ap.parse_args()

    P = example_problem(args.alpha)
    print(f"alpha = {args.alpha}, k = {args.k}")
    print(f"{'strategy':<14}{'T':>9}{'simulated':>12}{'closed form':>13}{'error':>10}{'contact':>9}  feasible")
    for name in STRATEGIES:
        law = strategy_law(name, args.alpha)
        if law is None:
            print(f"{name:<14}  not admissible")
            continue
        traj = integrate(P, law, args.k)
        J = mayer_cost(P, traj)
        exact = CLOSED_FORM[name](args.alpha)
        hit = first_contact_time(P, traj)
        hit_text = "-" if hit is None else f"{hit:.4f}"
        print(f"{name:<14}{law.T:>9.4f}{J:>12.6f}{exact:>13.6f}{abs(J - exact):>10.1e}{hit_text:>9}  {feasibility(P, traj).ok}")


if __name__ == "__main__":
    main()
