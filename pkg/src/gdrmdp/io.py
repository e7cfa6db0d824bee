"""Scenario JSON files and CSV emission helpers."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hlmdp import HlmdpScenario, TabularMdp

SCENARIO_KEYS = (
    "num_groups",
    "num_mdps",
    "num_states",
    "num_actions",
    "discount",
    "horizon",
    "prior",
    "mixing",
    "mdps",
)


class ConfigError(ValueError):
    """Malformed scenario or experiment configuration."""


def scenario_to_dict(scenario: HlmdpScenario) -> dict:
    return {
        "num_groups": scenario.num_groups,
        "num_mdps": scenario.num_mdps,
        "num_states": scenario.num_states,
        "num_actions": scenario.num_actions,
        "discount": float(scenario.discount),
        "horizon": int(scenario.horizon),
        "prior": scenario.prior.tolist(),
        "mixing": scenario.mixing.tolist(),
        "mdps": [
            {
                "transition": m.transition.tolist(),
                "reward": m.reward.tolist(),
                "initial_state_dist": m.initial_state_dist.tolist(),
            }
            for m in scenario.mdps
        ],
    }


def scenario_from_dict(data: dict) -> HlmdpScenario:
    missing = [k for k in SCENARIO_KEYS if k not in data]
    if missing:
        raise ConfigError(f"scenario is missing field(s): {', '.join(missing)}")
    try:
        mdps = tuple(
            TabularMdp(
                transition=np.array(m["transition"], dtype=float),
                reward=np.array(m["reward"], dtype=float),
                initial_state_dist=np.array(m["initial_state_dist"], dtype=float),
            )
            for m in data["mdps"]
        )
        scenario = HlmdpScenario(
            mdps=mdps,
            mixing=np.array(data["mixing"], dtype=float),
            prior=np.array(data["prior"], dtype=float),
            horizon=int(data["horizon"]),
            discount=float(data["discount"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc
    declared = (data["num_groups"], data["num_mdps"], data["num_states"], data["num_actions"])
    actual = (scenario.num_groups, scenario.num_mdps, scenario.num_states, scenario.num_actions)
    if tuple(declared) != actual:
        raise ConfigError(f"declared sizes (Z, M, S, A) = {declared} do not match arrays {actual}")
    return scenario


def dumps_scenario(scenario: HlmdpScenario) -> str:
    # json emits the shortest repr that round-trips every float exactly.
    return json.dumps(scenario_to_dict(scenario), indent=1) + "\n"


def loads_scenario(text: str) -> HlmdpScenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario JSON must be an object")
    return scenario_from_dict(data)


def save_scenario(scenario: HlmdpScenario, path) -> None:
    Path(path).write_text(dumps_scenario(scenario), encoding="utf-8")


def load_scenario(path) -> HlmdpScenario:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    return loads_scenario(p.read_text(encoding="utf-8"))


def fmt(x) -> str:
    """Deterministic text form of a number for CSV output."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))
    return p


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
