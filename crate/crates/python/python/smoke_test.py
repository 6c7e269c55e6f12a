"""Smoke test for the extension module: gallery, oracle, integration, pipeline."""

import math
import sys

import pendyn


def close(a, b, tol):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    assert "strongly-monotone-projection" in pendyn.Problem.names()

    eps0, a, b, c = pendyn.lemma_constants(1.0)
    assert abs(eps0 - (math.sqrt(5.0) - 2.0)) < 1e-12
    assert a < 1.0 - 1.0 / math.sqrt(2.0) and 0.5 < c < 0.75 - math.sqrt(2.0) / 8.0

    problem = pendyn.Problem.gallery("strongly-monotone-projection")
    oracle = problem.oracle()
    assert close(oracle["x_star"], [1.5, -0.5], 1e-12), oracle
    assert problem.hypotheses()["supported_regime"]

    trivial = pendyn.Problem.gallery("unconstrained-forward-backward")
    assert trivial.dim == 2

    traj = pendyn.integrate(problem, 200.0, sample_interval=1.0)
    assert len(traj) == 201
    dist = math.dist(traj.x[-1], oracle["x_star"])
    assert dist < 0.1, dist
    stats = traj.stats()
    assert stats["rhs_evals"] == 11 * (stats["accepted"] + stats["rejected"])

    doc = pendyn.run(problem, 100.0, dt=1e-2, mode="fixed", sample_stride=1)
    assert doc["problem"]["name"] == "strongly-monotone-projection"
    assert {m["inequality"] for m in doc["monitors"]} == {
        "anchor-gap",
        "split-penalty",
        "descent",
        "descent-gap",
    }

    weak = problem.with_overrides(schedules=pendyn.Schedules(lambda_p=-0.3, l_b=2.0))
    assert "h3_l2_not_l1" in weak.hypotheses()["failures"]

    try:
        pendyn.integrate(problem, 1.0, mode="sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("bad mode accepted")

    print("smoke test passed:", pendyn.__version__, f"|x(200) - x*| = {dist:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
