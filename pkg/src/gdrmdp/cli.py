"""Command-line front end: ``gdrmdp {solve,bandit,verify,train,eval,gen}``.

Every command is deterministic given its configuration and seed. Output
files land under ``--out-dir``. Exit codes: 0 success, 1 a check failed,
2 value iteration hit ``max_iters``, 3 training diverged, 64 bad config.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ambiguity import METRICS, BallSpec
from .bandit import HierarchicalBandit, bandit_to_scenario, canonical_bandit, solve_all
from .dp import FORMULATIONS, value_iteration
from .grid import BeliefGrid
from .hlmdp import HlmdpScenario, ParameterError, generate_random_scenario
from .io import ConfigError, csv_text, dumps_scenario, load_scenario, read_csv, scenario_from_dict, write_csv
from .train import (
    QTable,
    TrainConfig,
    TrainingDivergence,
    belief_error_profile,
    evaluate_robustness,
    train,
)
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2, 3, 64

CONFIG_KEYS = ("scenario", "ball", "grid", "train", "eval", "sweep", "out_dir", "seed")
BALL_KEYS = ("xi", "metric")
GRID_KEYS = ("resolution", "tol", "max_iters", "likelihood", "formulation")
EVAL_KEYS = ("noise_levels", "episodes", "belief_errors")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# configuration


def _check_keys(block: dict, allowed, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}; allowed: {', '.join(allowed)}")


def load_config(path) -> dict:
    """Read and shape-check an experiment config JSON file."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    _check_keys(cfg, CONFIG_KEYS, str(p))
    for name, keys in (("ball", BALL_KEYS), ("grid", GRID_KEYS), ("eval", EVAL_KEYS)):
        if name in cfg:
            _check_keys(cfg[name], keys, f"{p}: {name}")
    if "sweep" in cfg:
        _check_keys(cfg["sweep"], ("xi",), f"{p}: sweep")
    cfg["_base"] = str(p.parent)
    return cfg


def resolve_seed(cli_seed, cfg: dict) -> int:
    """Explicit ``--seed`` wins, then ``GDR_SEED``, then the config, then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("GDR_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GDR_SEED must be an integer, got {env!r}") from None
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    return seed


def resolve_scenario(cli_path, cfg: dict, required: bool = True) -> HlmdpScenario | None:
    if cli_path is not None:
        return load_scenario(cli_path)
    spec = cfg.get("scenario")
    if spec is None:
        if required:
            raise ConfigError("no scenario given: pass --scenario FILE or set 'scenario' in the config")
        return None
    if isinstance(spec, str):
        p = Path(spec)
        if not p.is_absolute():
            p = Path(cfg.get("_base", ".")) / p
        return load_scenario(p)
    if isinstance(spec, dict):
        return scenario_from_dict(spec)
    raise ConfigError("scenario: expected a file path or an inline object")


def _pick(cli_value, block: dict, key: str, default):
    return cli_value if cli_value is not None else block.get(key, default)


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def parse_sweep(text: str | None, cfg: dict) -> list[float] | None:
    """``xi=0.01,0.05`` -> [0.01, 0.05]; only the ball radius is sweepable."""
    if text is None:
        sweep = cfg.get("sweep")
        return None if sweep is None else [float(x) for x in sweep["xi"]]
    key, sep, values = text.partition("=")
    if not sep or key.strip() != "xi":
        raise ConfigError(f"--sweep: expected 'xi=v1,v2,...', got {text!r}")
    return _float_list(values, "--sweep")


def out_dir(args, cfg: dict) -> Path:
    d = Path(args.out_dir if args.out_dir is not None else cfg.get("out_dir", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


# --------------------------------------------------------------------------
# commands


def cmd_solve(args, cfg: dict) -> int:
    sc = resolve_scenario(args.scenario, cfg)
    ball, grid_cfg = cfg.get("ball", {}), cfg.get("grid", {})
    spec = BallSpec(float(_pick(args.xi, ball, "xi", 0.1)), _pick(args.metric, ball, "metric", "sup_norm"))
    grid = BeliefGrid(sc.num_groups, _pick(args.resolution, grid_cfg, "resolution", None))
    tol = float(_pick(args.tol, grid_cfg, "tol", 1e-8))
    max_iters = int(_pick(args.max_iters, grid_cfg, "max_iters", 1000))
    likelihood = _pick(args.likelihood, grid_cfg, "likelihood", "transition")
    formulation = _pick(args.formulation, grid_cfg, "formulation", "GDR")
    if formulation not in FORMULATIONS:
        raise ConfigError(f"formulation: expected one of {', '.join(FORMULATIONS)}, got {formulation!r}")
    res = value_iteration(sc, spec, grid, tol, max_iters, likelihood, formulation)
    d = out_dir(args, cfg)
    log = [(it, r, wall if args.timing else "") for it, r, wall in res.log]
    if not res.converged:
        log.append(("not_converged", res.residuals[-1], ""))
    write_csv(d / "iterations.csv", ("iter", "residual", "wall_ms"), log)
    V = res.values.values
    write_csv(
        d / "value_table.csv",
        ("belief_index", "state", "value"),
        ((k, s, V[k, s]) for k in range(len(grid)) for s in range(sc.num_states)),
    )
    (d / "value_table.grid.json").write_text(
        json.dumps(
            {
                "kind": "freudenthal_simplex_grid",
                "num_groups": grid.Z,
                "resolution": grid.K,
                "points": grid.points.tolist(),
                "discount": sc.discount,
                "xi": spec.xi,
                "metric": spec.metric,
                "formulation": formulation,
                "likelihood": likelihood,
            },
            indent=1,
        )
        + "\n",
        encoding="utf-8",
    )
    actions = res.policy.action_dist.argmax(axis=-1)
    bcols = tuple(f"b_{z}" for z in range(grid.Z))
    rows = []
    for k in range(len(grid)):
        for s in range(sc.num_states):
            rows.append((k, *grid.points[k], s, int(actions[k, s])))
    if not res.converged:
        rows.append(("not_converged",) + ("",) * (grid.Z + 2))
    write_csv(d / "policy.csv", ("belief_index", *bcols, "state", "action"), rows)
    status = "converged" if res.converged else "not converged"
    print(f"{status} after {res.iterations} iterations; final residual {float(res.residuals[-1])!r}")
    if not res.converged:
        print(f"warning: max_iters={max_iters} reached before tol={tol!r}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _bandit_from_scenario(sc: HlmdpScenario, xi: float, metric: str) -> HierarchicalBandit:
    if sc.num_states != 1 or sc.horizon != 1:
        raise ConfigError("bandit: scenario must have one state and horizon 1")
    reward = np.array([m.reward[0] for m in sc.mdps])
    return HierarchicalBandit(reward, sc.mixing, sc.prior, xi, metric)


def cmd_bandit(args, cfg: dict) -> int:
    ball = cfg.get("ball", {})
    xi = float(_pick(args.xi, ball, "xi", 0.2))
    metric = _pick(args.metric, ball, "metric", "sup_norm")
    sc = resolve_scenario(args.scenario, cfg, required=False)
    if sc is None:
        c = canonical_bandit()
        bandit = HierarchicalBandit(c.reward, c.mixing, c.belief, xi, metric)
    else:
        bandit = _bandit_from_scenario(sc, xi, metric)
    sols = solve_all(bandit, args.p_grid, args.eps_grid)
    rows = [(t, s.policy, s.value, s.brute_value, s.tolerance, int(s.agrees)) for t, s in sols.items()]
    header = ("formulation", "optimal_policy", "value", "brute_force_value", "tolerance", "agrees")
    text = csv_text(header, rows)
    sys.stdout.write(text.replace("\r\n", "\n"))
    if args.out_dir is not None or "out_dir" in cfg:
        write_csv(out_dir(args, cfg) / "bandit.csv", header, rows)
    return EXIT_OK if all(s.agrees for s in sols.values()) else EXIT_CHECK_FAILED


def cmd_verify(args, cfg: dict) -> int:
    names = args.suite or list(SUITES)
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"--suite: unknown suite {n!r}; choose from {', '.join(SUITES)}")
    seeds = None if args.seeds is None else range(args.seeds)
    results = [run_suite(n, seeds, negate=args.negate_sign, gamma=args.gamma, quick=args.quick) for n in names]
    header = ("check", "status", "cases", "failures") + (("seconds",) if args.timing else ())
    rows = [r.row() if args.timing else r.row()[:4] for r in results]
    text = csv_text(header, rows).replace("\r\n", "\n")
    sys.stdout.write(text)
    for r in results:
        for msg in r.failures:
            print(f"{r.name}: {msg}")
    if args.out_dir is not None or "out_dir" in cfg:
        write_csv(out_dir(args, cfg) / "verify.csv", header, rows)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def train_config(args, cfg: dict, seed: int) -> TrainConfig:
    block = dict(cfg.get("train", {}))
    ball = cfg.get("ball", {})
    for key in BALL_KEYS:
        if key in ball and key not in block:
            block[key] = ball[key]
    for key, val in (("episodes", args.episodes), ("xi", args.xi), ("metric", args.metric), ("preset", args.preset),
                     ("pretrain_episodes", args.pretrain_episodes), ("grid_resolution", args.resolution)):
        if val is not None:
            block[key] = val
    block["seed"] = seed
    try:
        return TrainConfig.from_dict(block)
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from exc


def _suffix(xi: float | None) -> str:
    return "" if xi is None else f"_xi{xi!r}"


def save_qtable(q: QTable, path: Path):
    G, S, A = q.q.shape
    write_csv(path, ("belief_index", "state", "action", "q"),
              ((k, s, a, q.q[k, s, a]) for k in range(G) for s in range(S) for a in range(A)))
    meta = {"kind": "freudenthal_simplex_grid", "dim": q.grid.Z, "resolution": q.grid.K, "feed": q.feed,
            "num_states": S, "num_actions": A}
    path.with_suffix(".grid.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def load_qtable(path) -> QTable:
    p = Path(path)
    meta_path = p.with_suffix(".grid.json")
    if not p.is_file() or not meta_path.is_file():
        raise ConfigError(f"Q table not found: {p} (needs its {meta_path.name} sidecar)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    grid = BeliefGrid(int(meta["dim"]), int(meta["resolution"]))
    q = np.zeros((len(grid), int(meta["num_states"]), int(meta["num_actions"])))
    for row in read_csv(p):
        q[int(row["belief_index"]), int(row["state"]), int(row["action"])] = float(row["q"])
    return QTable(q, grid, meta["feed"])


def _runs(args, cfg, seed):
    """(suffix, TrainConfig) for the single run or each swept radius."""
    base = train_config(args, cfg, seed)
    sweep = parse_sweep(args.sweep, cfg)
    if sweep is None:
        return [("", base)]
    return [(_suffix(xi), replace(base, xi=xi)) for xi in sweep]


def cmd_train(args, cfg: dict) -> int:
    sc = resolve_scenario(args.scenario, cfg)
    seed = resolve_seed(args.seed, cfg)
    d = out_dir(args, cfg)
    for suffix, tc in _runs(args, cfg, seed):
        try:
            res = train(sc, tc)
        except TrainingDivergence as exc:
            print(f"training diverged (xi={tc.xi!r}): {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        write_csv(d / f"train_log{suffix}.csv", ("episode", "return", "td_residual", "epsilon", "phase"), res.log)
        save_qtable(res.q, d / f"q_table{suffix}.csv")
        (d / f"train_config{suffix}.json").write_text(json.dumps(tc.to_dict(), indent=1) + "\n", encoding="utf-8")
        print(f"wrote train_log{suffix}.csv and q_table{suffix}.csv")
    return EXIT_OK


def cmd_eval(args, cfg: dict) -> int:
    sc = resolve_scenario(args.scenario, cfg)
    seed = resolve_seed(args.seed, cfg)
    block = cfg.get("eval", {})
    levels = _float_list(args.noise_levels, "--noise-levels") if args.noise_levels else block.get("noise_levels", [1.0, 0.8, 0.6, 0.4])
    episodes = int(_pick(args.eval_episodes, block, "episodes", 200))
    if episodes < 1:
        raise ConfigError("eval episodes must be positive")
    d = out_dir(args, cfg)
    if args.q_table is not None:
        sources = [("", load_qtable(args.q_table), TrainConfig(seed=seed).likelihood)]
    else:
        sources = []
        for suffix, tc in _runs(args, cfg, seed):
            try:
                sources.append((suffix, train(sc, tc).q, tc.likelihood))
            except TrainingDivergence as exc:
                print(f"training diverged (xi={tc.xi!r}): {exc}", file=sys.stderr)
                return EXIT_DIVERGED
    for suffix, q, lik in sources:
        rows = evaluate_robustness(sc, q, levels, episodes, seed, lik)
        write_csv(d / f"robustness{suffix}.csv", ("noise_level", "mean_return", "std_err", "episodes"), rows)
        print(f"wrote robustness{suffix}.csv")
        if args.belief_errors or block.get("belief_errors", False):
            prof = belief_error_profile(sc, lik, levels, episodes, seed)
            write_csv(d / f"belief_errors{suffix}.csv", ("noise_level", "step", "mean_l1_error"), prof)
            print(f"wrote belief_errors{suffix}.csv")
    return EXIT_OK


def default_config() -> dict:
    return {
        "scenario": "scenario.json",
        "seed": 0,
        "out_dir": "out",
        "ball": {"xi": 0.1, "metric": "sup_norm"},
        "grid": {"resolution": None, "tol": 1e-8, "max_iters": 1000, "likelihood": "transition", "formulation": "GDR"},
        "train": {k: v for k, v in TrainConfig().to_dict().items() if k not in ("seed", "xi", "metric")},
        "eval": {"noise_levels": [1.0, 0.8, 0.6, 0.4], "episodes": 200, "belief_errors": False},
    }


def cmd_gen(args, cfg: dict) -> int:
    seed = resolve_seed(args.seed, cfg)
    if args.kind == "bandit":
        text = dumps_scenario(bandit_to_scenario(canonical_bandit(), args.gamma))
    elif args.kind == "config":
        text = json.dumps(default_config(), indent=1) + "\n"
    else:
        sc = generate_random_scenario(seed, args.groups, args.mdps, args.states, args.actions, args.gamma, args.horizon)
        text = dumps_scenario(sc)
    if args.out is None:
        sys.stdout.write(text)
    else:
        p = Path(args.out)
        if not p.is_absolute():
            p = out_dir(args, cfg) / p
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        print(f"wrote {p.name}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gdrmdp", description="Group distributionally robust MDP toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, scenario=True):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out-dir", help="directory for output files (default: config out_dir or .)")
        p.add_argument("--seed", type=int, help="master seed (overrides GDR_SEED and the config)")
        if scenario:
            p.add_argument("--scenario", help="scenario JSON file")

    def ball(p):
        p.add_argument("--xi", type=float, help="ambiguity ball radius")
        p.add_argument("--metric", choices=METRICS)

    p = sub.add_parser("solve", help="robust value iteration on a belief grid")
    common(p)
    ball(p)
    p.add_argument("--resolution", type=int, help="grid subdivisions per axis")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--likelihood", choices=("transition", "static"))
    p.add_argument("--formulation", choices=FORMULATIONS)
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (makes output nondeterministic)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bandit", help="four-criterion table for the two-action bandit")
    common(p)
    ball(p)
    p.add_argument("--p-grid", type=int, default=1001, help="policy grid size for the brute-force check")
    p.add_argument("--eps-grid", type=int, default=1001, help="adversary grid size per axis")
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("verify", help="run the seeded property suites")
    common(p, scenario=False)
    p.add_argument("--suite", action="append", help=f"suite to run (repeatable): {', '.join(SUITES)}")
    p.add_argument("--seeds", type=int, help="number of seeds per suite (default: each suite's own)")
    p.add_argument("--gamma", type=float, help="fixed discount for the contraction suite")
    p.add_argument("--negate-sign", action="store_true", help="test hook: flip the adversary to ascent")
    p.add_argument("--quick", action="store_true", help="five seeds per suite")
    p.add_argument("--timing", action="store_true", help="add a seconds column (nondeterministic)")
    p.set_defaults(func=cmd_verify)

    for name, func, helptext in (("train", cmd_train, "tabular robust Q-learning"),
                                 ("eval", cmd_eval, "belief-noise robustness evaluation")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        ball(p)
        p.add_argument("--episodes", type=int, help="training episodes")
        p.add_argument("--pretrain-episodes", type=int)
        p.add_argument("--preset", help="gdr, g_exact, g_belief, no_belief, dr or state_r")
        p.add_argument("--resolution", type=int, help="belief grid subdivisions per axis")
        p.add_argument("--sweep", help="xi=v1,v2,... runs once per radius and writes one file each")
        if name == "eval":
            p.add_argument("--q-table", help="evaluate a saved Q table instead of training")
            p.add_argument("--noise-levels", help="comma-separated test-group accuracies in [0, 1]")
            p.add_argument("--eval-episodes", type=int, help="rollouts per noise level")
            p.add_argument("--belief-errors", action="store_true", help="also write the per-step belief error profile")
        p.set_defaults(func=func)

    p = sub.add_parser("gen", help="write a scenario or a default config")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--kind", choices=("random", "bandit", "config"), default="random")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--mdps", type=int, default=4)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--horizon", type=int, default=5)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"gdrmdp {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
