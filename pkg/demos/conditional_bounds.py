"""Cross-fitted conditional bounds on the synthetic confounded SCM.

Fits the dual network for one divergence in both directions and compares
the per-point intervals against the interventional Monte Carlo truth.
"""

import numpy as np

from causalbounds import (
    SyntheticSCM,
    fit_conditional,
    generate,
    get_spec,
    scm_ground_truth,
)


def main():
    scm = SyntheticSCM(d=5, seed=0)
    data = generate(scm, 4000, seed=1)
    spec = get_spec("ChiSq")

    lo_fit = fit_conditional(data, spec, "lower", seed=2)
    up_fit = fit_conditional(data, spec, "upper", seed=2)

    eval_X = np.random.default_rng(3).uniform(-2.0, 2.0, (8, scm.d))
    lo = lo_fit.evaluate(1, eval_X)["value"]
    up = up_fit.evaluate(1, eval_X)["value"]
    truth, se = scm_ground_truth(scm, 1, eval_X, mc_draws=10_000, seed=4)
    e1 = scm.oracle_propensity(eval_X)

    print(f"{'e1(x)':>7} {'lower':>8} {'truth':>8} {'upper':>8} {'covered':>8}")
    for i in np.argsort(e1):
        hit = lo[i] <= truth[i] <= up[i]
        print(f"{e1[i]:>7.3f} {lo[i]:>8.3f} {truth[i]:>8.3f} {up[i]:>8.3f} {str(hit):>8}")
    covered = np.mean((truth >= lo) & (truth <= up))
    print(f"\ncoverage over {len(eval_X)} points: {covered:.2f}")
    print("note: intervals narrow as e1(x) approaches 1 (radius shrinks to 0)")


if __name__ == "__main__":
    main()
