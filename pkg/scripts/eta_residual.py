"""Residual of the rank-two eta against pi/2 + 2 pi (V/Omega).

The residual divided by (V/Omega)^2 tends to a constant, which identifies the
leading correction as second order in V/Omega.
"""

import argparse
import math

import numpy as np

from foerster.metrics import eta_of_gate
from foerster.model import TwoEigenstate
from foerster.pulses import rank_two_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001])
    args = ap.parse_args()
    print("V_over_Omega,eta,linear_prediction,residual,residual_over_r2")
    for r in args.ratios:
        eta = eta_of_gate(TwoEigenstate(V=1.0), rank_two_schedule(1.0 / r, 1.0))
        pred = math.pi / 2 + 2 * math.pi * r
        print(f"{r:g},{eta:.9f},{pred:.9f},{eta - pred:.3e},{(eta - pred) / r**2:.4f}")


if __name__ == "__main__":
    main()
