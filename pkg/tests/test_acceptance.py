"""Acceptance gate: one test per criterion, each printing a single pass/fail line.

Run with ``pytest tests/test_acceptance.py -v`` to see the criterion lines
alongside the pytest verdicts.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from gdrmdp.ambiguity import AmbiguityBall, BallSpec, worst_case_belief_exact
from gdrmdp.bandit import bandit_to_scenario, canonical_bandit, group_values
from gdrmdp.cli import main
from gdrmdp.dp import evaluate_formulation
from gdrmdp.hlmdp import generate_random_scenario, project_belief
from gdrmdp.train import TrainConfig, evaluate_robustness, greedy_policy_fn, train
from gdrmdp.verify import (
    check_attack_fidelity,
    check_contraction,
    check_convergence,
    check_exact_oracle,
    check_fixed_policy_ordering,
    check_optimal_ordering,
    check_projection_inclusion,
)


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def check_detail(res) -> str:
    head = f"{res.cases} cases, {len(res.failures)} failures, {res.seconds:.1f}s"
    return head if res.passed else f"{head}; first: {res.failures[0]}"


def test_criterion_01_bandit_table(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "gdrmdp", "bandit"], capture_output=True, text=True)
    seconds = time.perf_counter() - t0
    rows = {line.split(",")[0]: line.split(",") for line in proc.stdout.strip().splitlines()[1:]}
    want = {"GDR": ("a0", 5.28), "GR": ("a1", 5.0), "DR": ("a1", 5.0), "R": ("a1", 5.0)}
    ok = proc.returncode == 0 and seconds < 1.0 and set(rows) == set(want)
    for tag, (policy, value) in want.items():
        r = rows.get(tag)
        ok = ok and r is not None and r[1] == policy and abs(float(r[2]) - value) <= 1e-9
        ok = ok and abs(float(r[2]) - float(r[3])) <= float(r[4]) and r[5] == "1"
    table = " ".join(f"{t}={rows[t][1]}:{float(rows[t][2]):.10g}" for t in want if t in rows)
    report(1, ok, f"{table}; {seconds:.2f}s wall including interpreter start")


def test_criterion_02_intermediate_numbers(report):
    b = canonical_bandit()
    proj = project_belief(bandit_to_scenario(b), b.belief).weights
    _, dr_a0 = worst_case_belief_exact(AmbiguityBall(proj, 0.2, level="mdp"), b.reward[:, 0])
    _, gdr_a0 = worst_case_belief_exact(AmbiguityBall(b.belief, 0.2), group_values(b)[:, 0])
    gv = group_values(b)
    ok = (
        np.allclose(proj, [0.4, 0.6], rtol=0, atol=1e-9)
        and abs(dr_a0 - 4.4) <= 1e-9
        and abs(gdr_a0 - 5.28) <= 1e-9
        and np.allclose(gv, [[17.6, 5.0], [0.0, 5.0]], rtol=0, atol=1e-9)
    )
    report(2, ok, f"projected {proj.tolist()}, DR(a0)={dr_a0!r}, GDR(a0)={gdr_a0!r}, group values {gv.ravel().tolist()}")


def test_criterion_03_fixed_policy_ordering(report):
    res = check_fixed_policy_ordering(range(100))
    report(3, res.passed and res.seconds < 60, check_detail(res))


def test_criterion_04_optimal_ordering(report):
    res = check_optimal_ordering(range(100))
    report(4, res.passed and res.seconds < 300, check_detail(res))


def test_criterion_05_contraction(report):
    res = check_contraction(range(50))
    report(5, res.passed, check_detail(res))


def test_criterion_06_convergence(report):
    res = check_convergence(range(5))
    report(6, res.passed, check_detail(res))


def test_criterion_07_projection_inclusion(report):
    res = check_projection_inclusion(range(100), points=1000, payoffs=20)
    report(7, res.passed, check_detail(res))


def test_criterion_08_attack_fidelity(report):
    res = check_attack_fidelity(range(100))
    report(8, res.passed, check_detail(res))


def test_criterion_09_exact_oracle(report):
    results = [check_exact_oracle(range(100), metric, 1e-3) for metric in ("sup_norm", "tv_positive_part")]
    report(9, all(r.passed for r in results), "; ".join(f"{r.name}: {check_detail(r)}" for r in results))


TRAIN_SEEDS = range(5)
TRAIN_XI = 0.2
NOISE_LEVELS = (1.0, 0.8, 0.6, 0.4)


def test_criterion_10_training_ordering(report):
    t0 = time.perf_counter()
    notes, ok = [], True
    for seed in TRAIN_SEEDS:
        sc = generate_random_scenario(seed, 2, 4, 3, 2, 0.9, 5)
        b0 = np.full(sc.num_groups, 1.0 / sc.num_groups)
        runs = {}
        for xi in (TRAIN_XI, 0.0):
            q = train(sc, TrainConfig(xi=xi, seed=seed, grid_resolution=20, episodes=1500)).q
            pol = greedy_policy_fn(q, sc)
            worst = evaluate_formulation(sc, "GDR", pol, b0, TRAIN_XI)
            runs[xi] = (worst, evaluate_robustness(sc, q, list(NOISE_LEVELS), 300, seed))
        (w_gdr, rob_gdr), (w_nom, rob_nom) = runs[TRAIN_XI], runs[0.0]
        if w_gdr < w_nom:
            ok = False
            notes.append(f"seed {seed}: worst-case value {w_gdr:.4f} < nominal-trained {w_nom:.4f}")
        for (lvl, m1, s1, _), (_, m0, s0, _) in zip(rob_gdr, rob_nom):
            if m1 < m0 - 2 * np.hypot(s1, s0):
                ok = False
                notes.append(f"seed {seed}: noise {lvl}: mean {m1:.4f} < {m0:.4f} - 2 pooled se")
    seconds = time.perf_counter() - t0
    ok = ok and seconds < 600
    report(10, ok, f"{len(TRAIN_SEEDS)} scenarios, {seconds:.0f}s" + ("" if not notes else "; " + "; ".join(notes)))


def cli_outputs(root, capsys):
    """Run every subcommand once under ``root`` and collect stdout plus written files."""
    root.mkdir()
    out = {}
    commands = {
        "gen": ["gen", "--seed", "3", "--horizon", "4", "--out-dir", root, "--out", "rand.json"],
        "gen_bandit": ["gen", "--kind", "bandit", "--out-dir", root, "--out", "bandit.json"],
        "gen_config": ["gen", "--kind", "config"],
        "bandit": ["bandit", "--out-dir", root / "bandit"],
        "solve": ["solve", "--scenario", root / "rand.json", "--resolution", "6", "--out-dir", root / "solve"],
        "verify": ["verify", "--quick", "--out-dir", root / "verify"],
        "train": ["train", "--scenario", root / "rand.json", "--episodes", "40", "--resolution", "4", "--out-dir", root / "train"],
        "eval": ["eval", "--scenario", root / "rand.json", "--q-table", root / "train" / "q_table.csv",
                 "--eval-episodes", "30", "--belief-errors", "--out-dir", root / "eval"],
        "sweep": ["eval", "--scenario", root / "rand.json", "--episodes", "10", "--resolution", "3", "--eval-episodes", "10",
                  "--sweep", "xi=0.05,0.1", "--out-dir", root / "sweep"],
    }
    for name, argv in commands.items():
        code = main([str(a) for a in argv])
        out[name + ":stdout"] = (code, capsys.readouterr().out.replace(str(root), "<root>"))
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


def test_criterion_11_determinism(report, tmp_path, capsys):
    a, b = cli_outputs(tmp_path / "a", capsys), cli_outputs(tmp_path / "b", capsys)
    differ = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    codes = {k: v[0] for k, v in a.items() if k.endswith(":stdout")}
    ok = not differ and all(c == 0 for c in codes.values())
    report(11, ok, f"{len(a)} outputs across {len(codes)} command runs" + (f"; differ: {differ}" if differ else "")
           + ("" if all(c == 0 for c in codes.values()) else f"; exit codes {codes}"))
