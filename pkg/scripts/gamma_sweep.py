"""Accuracy of the computed density against closed-form laws over a range of aspect ratios"""
import sys
import os
import argparse
import logging

import numpy as np

project_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(project_dir)

from esdmix.closedform import mp_density, two_delta_density
from esdmix.models import TestProblem, build_test_problem
from esdmix.pipeline import compute_esd_batch, mean_absolute_error
from esdmix.solver import SolverConfig


def sweep_gammas():
    base = np.round(np.arange(0.05, 1.0, 0.1), 2).tolist()
    return base + [1.0] + [round(1 / g, 6) for g in base]


def main():
    parser = argparse.ArgumentParser(description="Mean absolute density error over an aspect-ratio sweep")
    parser.add_argument("--problem", choices=["mp", "two_delta"], default="mp")
    parser.add_argument("--levels", type=int, default=1)
    parser.add_argument("--epsilon", type=float, default=1e-5)
    parser.add_argument("--workers", type=int, default=0)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    config = SolverConfig(levels=args.levels, epsilon=args.epsilon)
    gammas = sweep_gammas()
    if args.problem == "mp":
        problems = [TestProblem(kind="mp", gamma=g, dimension=100) for g in gammas]
    else:
        problems = [TestProblem(kind="two_delta", gamma=g, lambdas=[1.0, 8.0], weights=[0.5, 0.5], dimension=100)
                    for g in gammas]
    mixtures = [build_test_problem(p) for p in problems]
    estimates = compute_esd_batch(mixtures, config, workers=args.workers)

    print("gamma,mae,mass,points")
    for mixture, estimate in zip(mixtures, estimates):
        if args.problem == "mp":
            oracle = lambda x, g=mixture.gamma: mp_density(x, g)
        else:
            oracle = lambda x, g=mixture.gamma: two_delta_density(x, g, [1.0, 8.0], [0.5, 0.5])
        error = mean_absolute_error(estimate, oracle)
        print(f"{mixture.gamma:.6g},{error:.3e},{estimate.mass:.6f},{len(estimate.points)}")


if __name__ == "__main__":
    main()
