"""Cost error of each closed-form strategy as the mesh is doubled."""
import argparse

from sweepopt.problem import mayer_cost
from sweepopt.sweeping import integrate
from sweepopt.switching_example import CLOSED_FORM, STRATEGIES, example_problem, strategy_law


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=-3.0)
    ap.add_argument("--meshes", default="500,1000,2000,4000,8000")
    args = ap.parse_args()

    meshes = [int(v) for v in args.meshes.split(",")]
    P = example_problem(args.alpha)
    for name in STRATEGIES:
        law = strategy_law(name, args.alpha)
        if law is None:
            continue
        exact = CLOSED_FORM[name](args.alpha)
        errs = [abs(mayer_cost(P, integrate(P, law, k, recover=False)) - exact) for k in meshes]
        print(name)
        for i, (k, err) in enumerate(zip(meshes, errs)):
            ratio = f"{err / errs[i - 1]:.3f}" if i and errs[i - 1] > 0 else "-"
            # the grid phase of the switch time matters: fractional part of tau / h
            print(f"  k={k:<6} error={err:.3e}  ratio={ratio}")


if __name__ == "__main__":
    main()
