"""Two-group, two-model bandit: how each robust criterion ranks the two arms.

Arm a0 pays 22 in model m0 and nothing elsewhere; arm a1 pays 5 everywhere.
Group z0 mostly draws m0, group z1 never does. With an even belief over
groups the nominal choice is a0, and only the group-level robust criterion
keeps that choice once an adversary can shift the belief by 0.2.
"""
import numpy as np

from gdrmdp.ambiguity import AmbiguityBall, worst_case_belief_exact
from gdrmdp.bandit import bandit_to_scenario, canonical_bandit, group_values, robust_value, solve_all
from gdrmdp.hlmdp import project_belief


def main():
    b = canonical_bandit()
    print("rewards (model x arm):\n", b.reward)
    print("mixing (model x group):\n", b.mixing)
    gv = group_values(b)
    print("group values (group x arm):\n", gv)

    proj = project_belief(bandit_to_scenario(b), b.belief).weights
    print("belief over models implied by the even group belief:", proj)
    _, dr = worst_case_belief_exact(AmbiguityBall(proj, b.xi, level="mdp"), b.reward[:, 0])
    _, gdr = worst_case_belief_exact(AmbiguityBall(b.belief, b.xi), gv[:, 0])
    print(f"worst case of a0 with the ball on models: {dr:.4f}; with the ball on groups: {gdr:.4f}")

    p = np.linspace(0, 1, 6)
    print("\nrobust value of playing a0 with probability p")
    print("p    " + "".join(f"{t:>8}" for t in ("GDR", "GR", "DR", "R")))
    for i, pi in enumerate(p):
        print(f"{pi:.1f}  " + "".join(f"{robust_value(b, t, p)[i]:8.3f}" for t in ("GDR", "GR", "DR", "R")))

    print("\nsolved table (closed form vs brute-force grid):")
    for tag, sol in solve_all(b).items():
        print(f"  {tag:>3}: {sol.policy}  value {sol.value:.4f}  brute {sol.brute_value:.4f}  tol {sol.tolerance:.3g}")


if __name__ == "__main__":
    main()
