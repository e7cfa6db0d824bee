"""How fast the group belief concentrates, and what a noisy group signal does to it.

Prints the mean L1 distance between the filtered belief and the true group
at each step, for several accuracies of the observed group index.
With three groups an accuracy of 1/3 carries no information.
"""
from gdrmdp.belief import LikelihoodModel
from gdrmdp.hlmdp import generate_random_scenario
from gdrmdp.train import belief_error_profile


def main():
    sc = generate_random_scenario(0, 3, 3, 2, 2, 0.9, 10)
    levels = [1.0, 0.8, 0.6, 0.4, 1 / 3]
    rows = belief_error_profile(sc, LikelihoodModel(0.9, 1.0), levels, 500, 0)
    steps = sorted({t for _, t, _ in rows})
    print("step " + "".join(f"{lvl:>8.2f}" for lvl in levels))
    for t in steps:
        errs = {lvl: e for lvl, tt, e in rows if tt == t}
        print(f"{t:>4} " + "".join(f"{errs[lvl]:8.3f}" for lvl in levels))


if __name__ == "__main__":
    main()
