"""Regenerate the problem files under fixtures/."""
import os

import numpy as np

from ascert.frontends import lp_frontend, mpc_double_integrator
from ascert.io import ProblemFile, serialize_problem
from ascert.model import Region, WorkingSet, as_mpqp, contrived_mpqp

HERE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")


def fixtures():
    yield "contrived.qp", ProblemFile(contrived_mpqp())

    # box constraints far from the unconstrained optimum
    loose = as_mpqp(np.eye(2), np.zeros(2), 0.1 * np.eye(2), np.vstack([np.eye(2), -np.eye(2)]),
                    10 * np.ones(4), np.zeros((4, 2)), Region.box([-1, -1], [1, 1]))
    yield "loose.qp", ProblemFile(loose)

    # min theta x1 + x2 over x >= 0, -x1 + x2 <= 1: unbounded for theta < 0
    lp = lp_frontend([0.0, 1.0], [[1.0], [0.0]], [[-1.0, 0.0], [0.0, -1.0], [-1.0, 1.0]],
                     [0.0, 0.0, 1.0], np.zeros((3, 1)), Region.box([-1.0], [1.0]))
    yield "lp_unbounded.qp", ProblemFile(lp, np.zeros((2, 1)), np.zeros(2), WorkingSet((0, 1)))

    yield "double_integrator.qp", ProblemFile(mpc_double_integrator())


if __name__ == "__main__":
    os.makedirs(HERE, exist_ok=True)
    for name, pf in fixtures():
        with open(os.path.join(HERE, name), "w", encoding="utf-8") as fh:
            fh.write(serialize_problem(pf))
        print("wrote", name)
