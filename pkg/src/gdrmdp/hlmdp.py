"""Hierarchical latent MDP scenarios: data model, validation and generation.

A scenario holds ``M`` tabular MDPs that share state and action spaces, a
column-stochastic mixing matrix ``A`` (``A[m, z]`` is the weight of MDP ``m``
inside group ``z``) and a prior ``w`` over the ``Z`` groups.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

PROB_TOL = 1e-9
ARITH_TOL = 1e-7


class ParameterError(ValueError):
    """Raised for malformed arguments (bad counts, mismatched dimensions)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray  # (S, A, S')
    reward: np.ndarray  # (S, A)
    initial_state_dist: np.ndarray  # (S,)

    def __post_init__(self):
        for name in ("transition", "reward", "initial_state_dist"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True, eq=False)
class HlmdpScenario:
    mdps: tuple[TabularMdp, ...]
    mixing: np.ndarray  # (M, Z), columns are mu_z
    prior: np.ndarray  # (Z,)
    horizon: int
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "mdps", tuple(self.mdps))
        object.__setattr__(self, "mixing", _frozen(self.mixing))
        object.__setattr__(self, "prior", _frozen(self.prior))

    @property
    def num_groups(self) -> int:
        return self.mixing.shape[1]

    @property
    def num_mdps(self) -> int:
        return self.mixing.shape[0]

    @property
    def num_states(self) -> int:
        return self.mdps[0].num_states

    @property
    def num_actions(self) -> int:
        return self.mdps[0].num_actions

    # Stacked views used by the solvers; computed on demand, never cached on
    # the frozen instance.
    @property
    def transitions(self) -> np.ndarray:
        """Array of shape (M, S, A, S')."""
        return np.stack([m.transition for m in self.mdps])

    @property
    def rewards(self) -> np.ndarray:
        """Array of shape (M, S, A)."""
        return np.stack([m.reward for m in self.mdps])

    @property
    def initial_dists(self) -> np.ndarray:
        """Array of shape (M, S)."""
        return np.stack([m.initial_state_dist for m in self.mdps])

    def reward_bounds(self) -> tuple[float, float]:
        r = self.rewards
        return float(r.min()), float(r.max())

    def __eq__(self, other):
        if not isinstance(other, HlmdpScenario):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.discount == other.discount
            and np.array_equal(self.mixing, other.mixing)
            and np.array_equal(self.prior, other.prior)
            and len(self.mdps) == len(other.mdps)
            and all(
                np.array_equal(a.transition, b.transition)
                and np.array_equal(a.reward, b.reward)
                and np.array_equal(a.initial_state_dist, b.initial_state_dist)
                for a, b in zip(self.mdps, other.mdps)
            )
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Belief:
    """A point on the probability simplex over groups or over MDPs."""

    weights: np.ndarray
    level: Literal["group", "mdp"] = "group"

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ParameterError("belief weights must be a non-empty vector")
        if np.any(w < -PROB_TOL) or np.any(w > 1 + PROB_TOL) or abs(w.sum() - 1.0) > ARITH_TOL:
            raise ParameterError(f"belief weights are not on the simplex: {w}")
        if self.level not in ("group", "mdp"):
            raise ParameterError(f"unknown belief level {self.level!r}")
        object.__setattr__(self, "weights", w)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return self.weights.size

    def __repr__(self):
        return f"Belief({np.array2string(self.weights, precision=6)}, level={self.level!r})"


def as_weights(b) -> np.ndarray:
    """Return a float vector for a :class:`Belief` or any array-like."""
    if isinstance(b, Belief):
        return np.asarray(b.weights, dtype=float)
    return np.asarray(b, dtype=float)


@dataclass(frozen=True, eq=False)
class Policy:
    """Tabular policy.

    ``stationary_state_table`` stores ``action_dist[s, a]``.
    ``belief_state_table`` stores ``action_dist[k, s, a]`` for the points of
    ``grid`` and mixes rows with the grid's interpolation weights.
    """

    kind: Literal["belief_state_table", "stationary_state_table"]
    action_dist: np.ndarray
    grid: object = field(default=None)

    def __post_init__(self):
        d = _frozen(self.action_dist)
        object.__setattr__(self, "action_dist", d)
        if self.kind == "stationary_state_table":
            if d.ndim != 2:
                raise ParameterError("stationary policy table must be (S, A)")
        elif self.kind == "belief_state_table":
            if d.ndim != 3 or self.grid is None:
                raise ParameterError("belief policy table must be (K, S, A) with a grid")
        else:
            raise ParameterError(f"unknown policy kind {self.kind!r}")
        if np.any(d < -PROB_TOL) or np.any(np.abs(d.sum(axis=-1) - 1.0) > PROB_TOL):
            raise ParameterError("every action distribution must sum to 1")

    @property
    def belief_dependent(self) -> bool:
        return self.kind == "belief_state_table"

    def action_probs(self, b, s: int) -> np.ndarray:
        if self.kind == "stationary_state_table":
            return np.asarray(self.action_dist[s])
        idx, lam = self.grid.interpolate(as_weights(b))
        return lam @ self.action_dist[idx, s]

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        table = np.zeros((actions.size, num_actions))
        table[np.arange(actions.size), actions] = 1.0
        return cls("stationary_state_table", table)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _check_prob_vector(v: np.ndarray, path: str, out: list[str]):
    if np.any(~np.isfinite(v)):
        out.append(f"{path} has non-finite entries")
        return
    if np.any(v < 0):
        out.append(f"{path} has negative entries")
    total = float(v.sum())
    if abs(total - 1.0) > PROB_TOL:
        out.append(f"{path} sums to {total:.15g}")


def validate_scenario(scenario: HlmdpScenario) -> ValidationReport:
    """Collect every invariant violation of ``scenario``; never raises."""
    out: list[str] = []
    mix = np.asarray(scenario.mixing)
    if mix.ndim != 2:
        out.append(f"mixing must be a 2-d matrix, got shape {mix.shape}")
    else:
        if mix.shape[0] != len(scenario.mdps):
            out.append(f"mixing has {mix.shape[0]} rows but there are {len(scenario.mdps)} MDPs")
        if np.any(mix < 0):
            out.append("mixing has negative entries")
        for z in range(mix.shape[1]):
            total = float(mix[:, z].sum())
            if abs(total - 1.0) > PROB_TOL:
                out.append(f"mixing column {z} sums to {total:.15g}")
        if scenario.prior.shape != (mix.shape[1],):
            out.append(f"prior has shape {scenario.prior.shape}, expected ({mix.shape[1]},)")
    _check_prob_vector(np.asarray(scenario.prior), "prior", out)

    if not (0.0 < scenario.discount < 1.0):
        out.append(f"discount not in (0,1): {scenario.discount}")
    if int(scenario.horizon) != scenario.horizon or scenario.horizon < 0:
        out.append(f"horizon must be a non-negative integer: {scenario.horizon}")

    if not scenario.mdps:
        out.append("scenario has no MDPs")
        return ValidationReport(out)
    shape0 = scenario.mdps[0].transition.shape
    for i, mdp in enumerate(scenario.mdps):
        p = f"mdps[{i}]"
        t = mdp.transition
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            out.append(f"{p}.transition must be (S, A, S), got {t.shape}")
            continue
        if t.shape != shape0:
            out.append(f"{p} has (S, A) = {t.shape[:2]}, expected {shape0[:2]}")
        if np.any(~np.isfinite(t)) or np.any(t < 0):
            out.append(f"{p}.transition has negative or non-finite entries")
        sums = t.sum(axis=2)
        for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > PROB_TOL)):
            out.append(f"{p}.transition[{s}][{a}] sums to {sums[s, a]:.15g}")
        if mdp.reward.shape != t.shape[:2]:
            out.append(f"{p}.reward has shape {mdp.reward.shape}, expected {t.shape[:2]}")
        elif np.any(~np.isfinite(mdp.reward)):
            out.append(f"{p}.reward has non-finite entries")
        if mdp.initial_state_dist.shape != (t.shape[0],):
            out.append(f"{p}.initial_state_dist has wrong shape {mdp.initial_state_dist.shape}")
        else:
            _check_prob_vector(mdp.initial_state_dist, f"{p}.initial_state_dist", out)
    return ValidationReport(out)


def generate_random_scenario(
    seed: int,
    Z: int,
    M: int,
    S: int,
    A: int,
    gamma: float = 0.9,
    T: int = 5,
) -> HlmdpScenario:
    """Draw a valid scenario; a pure function of its arguments.

    Mixing columns, priors, transition rows and initial distributions are
    normalised positive draws (exponential variates, i.e. flat Dirichlet).
    Rewards are uniform on [0, 1].
    """
    if Z < 1 or M < Z or S < 1 or A < 1:
        raise ParameterError(f"need Z >= 1, M >= Z, S >= 1, A >= 1; got Z={Z}, M={M}, S={S}, A={A}")
    if not (0.0 < gamma < 1.0):
        raise ParameterError(f"discount must lie in (0, 1), got {gamma}")
    if T < 0:
        raise ParameterError(f"horizon must be >= 0, got {T}")
    rng = np.random.default_rng(seed)

    def simplex_rows(*shape):
        x = rng.exponential(size=shape)
        return x / x.sum(axis=-1, keepdims=True)

    mixing = simplex_rows(Z, M).T
    prior = simplex_rows(Z)
    mdps = [
        TabularMdp(
            transition=simplex_rows(S, A, S),
            reward=rng.uniform(0.0, 1.0, size=(S, A)),
            initial_state_dist=simplex_rows(S),
        )
        for _ in range(M)
    ]
    return HlmdpScenario(mdps=tuple(mdps), mixing=mixing, prior=prior, horizon=T, discount=gamma)


def project_belief(scenario: HlmdpScenario, b) -> Belief:
    """Map a group-level belief to the MDP level, ``b(m) = A b(z)``."""
    w = as_weights(b)
    if isinstance(b, Belief) and b.level != "group":
        raise ParameterError("project_belief expects a group-level belief")
    if w.shape != (scenario.num_groups,):
        raise ParameterError(f"belief has length {w.size}, scenario has {scenario.num_groups} groups")
    q = scenario.mixing @ w
    # Renormalise away accumulated rounding; the map is exact in real arithmetic.
    q = np.clip(q, 0.0, None)
    return Belief(q / q.sum(), level="mdp")
