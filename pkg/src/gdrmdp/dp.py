"""Robust dynamic programming over (belief, state) pairs.

Four criteria are supported, differing only in how the per-step adversary
acts on the payoff of each action:

``GDR``  worst belief over groups inside a ball around the current belief
``GR``   worst single group
``DR``   worst MDP-level belief inside a ball around ``A b``
``R``    worst single MDP

Beliefs move with a state-based likelihood ``L(z | s, a, s')``. The default
is the Bayes likelihood of the observed transition under each group's MDP
mixture, which keeps every per-MDP payoff well defined.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .ambiguity import BallSpec, worst_case_values
from .grid import BeliefGrid
from .hlmdp import HlmdpScenario, ParameterError, Policy, as_weights

Formulation = Literal["GDR", "GR", "DR", "R"]
FORMULATIONS = ("GDR", "GR", "DR", "R")


class ResourceBudgetError(RuntimeError):
    """A search exceeded its configured node or policy budget."""


# --------------------------------------------------------------------------
# likelihoods


def transition_likelihood(scenario: HlmdpScenario) -> np.ndarray:
    """``L[s, a, s', z] = sum_m mu_z(m) P_m(s' | s, a)``."""
    return np.einsum("msat,mz->satz", scenario.transitions, scenario.mixing)


def static_likelihood(scenario: HlmdpScenario) -> np.ndarray:
    """Uninformative likelihood: beliefs never move."""
    S, A, Z = scenario.num_states, scenario.num_actions, scenario.num_groups
    return np.ones((S, A, S, Z))


LikelihoodSpec = None | str | np.ndarray | Callable


def resolve_likelihood(scenario: HlmdpScenario, likelihood: LikelihoodSpec):
    """Return an (S, A, S', Z) table, or a callable ``(b, s, a, s') -> L``."""
    if likelihood is None or (isinstance(likelihood, str) and likelihood == "transition"):
        return transition_likelihood(scenario)
    if isinstance(likelihood, str):
        if likelihood == "static":
            return static_likelihood(scenario)
        raise ParameterError(f"unknown likelihood {likelihood!r}")
    if callable(likelihood):
        return likelihood
    L = np.asarray(likelihood, dtype=float)
    S, A, Z = scenario.num_states, scenario.num_actions, scenario.num_groups
    if L.shape != (S, A, S, Z):
        raise ParameterError(f"likelihood table must have shape {(S, A, S, Z)}, got {L.shape}")
    return L


def posterior(B: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Bayes update broadcast over leading axes.

    A transition that no group in the support of ``B`` can produce leaves
    the belief unchanged; such branches carry zero nominal probability but
    may still be weighted by an adversarial belief.
    """
    post = B * L
    total = post.sum(axis=-1, keepdims=True)
    safe = total > 0
    return np.where(safe, post / np.where(safe, total, 1.0), B)


def _next_beliefs(scenario, lik, B):
    """Next beliefs for grid beliefs ``B`` (n, Z): shape (n, S, A, S', Z)."""
    if callable(lik):
        S, A = scenario.num_states, scenario.num_actions
        out = np.empty((len(B), S, A, S, B.shape[1]))
        for k, b in enumerate(B):
            for s in range(S):
                for a in range(A):
                    for t in range(S):
                        out[k, s, a, t] = posterior(b, np.asarray(lik(b, s, a, t), dtype=float))
        return out
    return posterior(B[:, None, None, None, :], lik[None])


# --------------------------------------------------------------------------
# adversary


def robust_payoff(
    U_m: np.ndarray,
    B: np.ndarray,
    mixing: np.ndarray,
    spec: BallSpec,
    formulation: Formulation = "GDR",
    maximize: bool = False,
) -> np.ndarray:
    """Adversarial value of per-MDP payoffs ``U_m`` (..., M) at beliefs ``B``.

    ``B`` (..., Z) must broadcast against the leading axes of ``U_m``.
    ``maximize`` turns the adversary into an ally; only the verification
    harness uses it, to show the checks can fail.
    """
    if formulation in ("GDR", "GR"):
        u = U_m @ mixing
        if formulation == "GR":
            return u.max(axis=-1) if maximize else u.min(axis=-1)
        return worst_case_values(B, u, spec.xi, spec.metric, maximize=maximize)
    if formulation == "DR":
        return worst_case_values(B @ mixing.T, U_m, spec.xi, spec.metric, maximize=maximize)
    if formulation == "R":
        return U_m.max(axis=-1) if maximize else U_m.min(axis=-1)
    raise ParameterError(f"unknown formulation {formulation!r}")


# --------------------------------------------------------------------------
# grid value functions


@dataclass
class ValueTable:
    values: np.ndarray  # (grid points, S)
    grid: BeliefGrid
    discount: float

    def __call__(self, b, s: int) -> float:
        return float(self.grid.evaluate(self.values[:, s], as_weights(b)))

    def at(self, B) -> np.ndarray:
        """Values at beliefs ``B`` (..., Z) for every state: shape (..., S)."""
        return self.grid.evaluate(self.values, B)

    def rows(self):
        n, S = self.values.shape
        for k in range(n):
            for s in range(S):
                yield k, s, float(self.values[k, s])


class GridDynamics:
    """Interpolation data of every next belief reachable from a grid point."""

    def __init__(self, scenario: HlmdpScenario, grid: BeliefGrid, likelihood: LikelihoodSpec = None):
        if grid.Z != scenario.num_groups:
            raise ParameterError(f"grid has {grid.Z} groups, scenario has {scenario.num_groups}")
        self.grid = grid
        nb = _next_beliefs(scenario, resolve_likelihood(scenario, likelihood), np.asarray(grid.points))
        self.idx, self.lam = grid.interpolate_many(nb)  # (n, S, A, S', Z)
        self.transitions = scenario.transitions
        self.rewards = scenario.rewards
        self.mixing = scenario.mixing
        self.discount = scenario.discount

    def payoffs(self, values: np.ndarray) -> np.ndarray:
        """Per-MDP one-step payoffs ``U[n, s, a, m]`` against ``values`` (n, S)."""
        S = values.shape[1]
        cont = np.einsum("nsatk,nsatk->nsat", self.lam, values[self.idx, np.arange(S)[None, None, None, :, None]])
        U = np.einsum("msat,nsat->nsam", self.transitions, cont)
        return self.rewards.transpose(1, 2, 0)[None] + self.discount * U


def q_values(
    dyn: GridDynamics,
    spec: BallSpec,
    values: np.ndarray,
    formulation: Formulation = "GDR",
    maximize: bool = False,
) -> np.ndarray:
    """Robust action values ``Q[n, s, a]`` for one backup of ``values``."""
    U = dyn.payoffs(values)
    B = np.asarray(dyn.grid.points)[:, None, None, :]
    return robust_payoff(U, B, dyn.mixing, spec, formulation, maximize)


def bellman_operator(
    scenario: HlmdpScenario,
    spec: BallSpec,
    V: ValueTable,
    likelihood: LikelihoodSpec = None,
    formulation: Formulation = "GDR",
    maximize: bool = False,
    dynamics: GridDynamics | None = None,
) -> ValueTable:
    dyn = dynamics or GridDynamics(scenario, V.grid, likelihood)
    Q = q_values(dyn, spec, V.values, formulation, maximize)
    return ValueTable(Q.max(axis=-1), V.grid, scenario.discount)


@dataclass
class ValueIterationResult:
    values: ValueTable
    policy: Policy
    log: list[tuple[int, float, float]]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.log)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r for _, r, _ in self.log])


def greedy_policy(Q: np.ndarray, grid: BeliefGrid) -> Policy:
    # argmax takes the lowest index among ties
    best = Q.argmax(axis=-1)
    table = np.zeros(Q.shape)
    np.put_along_axis(table, best[..., None], 1.0, axis=-1)
    return Policy("belief_state_table", table, grid=grid)


def value_iteration(
    scenario: HlmdpScenario,
    spec: BallSpec,
    grid: BeliefGrid | None = None,
    tol: float = 1e-8,
    max_iters: int = 1000,
    likelihood: LikelihoodSpec = None,
    formulation: Formulation = "GDR",
    V0: np.ndarray | float | None = None,
) -> ValueIterationResult:
    """Iterate the robust Bellman operator from ``V0`` (default zero).

    Stops once the a-posteriori bound ``gamma * res / (1 - gamma)`` on the
    distance to the fixed point is at most ``tol``.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    grid = grid or BeliefGrid(scenario.num_groups)
    dyn = GridDynamics(scenario, grid, likelihood)
    V = np.zeros((len(grid), scenario.num_states))
    if V0 is not None:
        V = V + np.asarray(V0, dtype=float)
    gamma = scenario.discount
    log = []
    converged = False
    t0 = time.perf_counter()
    for it in range(1, max_iters + 1):
        Q = q_values(dyn, spec, V, formulation)
        V_new = Q.max(axis=-1)
        res = float(np.abs(V_new - V).max())
        V = V_new
        log.append((it, res, (time.perf_counter() - t0) * 1e3))
        if gamma * res <= tol * (1.0 - gamma):
            converged = True
            break
    Q = q_values(dyn, spec, V, formulation)
    return ValueIterationResult(ValueTable(V, grid, scenario.discount), greedy_policy(Q, grid), log, converged)


# --------------------------------------------------------------------------
# exact finite-horizon DP on the reachable-belief tree


@dataclass
class FiniteHorizonResult:
    values: np.ndarray  # V_0(b0, s) for every s
    initial_value: float  # adversarial value of the initial-state draw
    actions: dict = field(repr=False)  # (t, belief bytes, s) -> action
    nodes: int

    def root_action(self, b0, s: int) -> int:
        return self.actions[(0, np.asarray(b0, dtype=float).tobytes(), s)]


def finite_horizon_dp(
    scenario: HlmdpScenario,
    spec: BallSpec,
    b0,
    likelihood: LikelihoodSpec = None,
    formulation: Formulation = "GDR",
    policy: Policy | Callable | None = None,
    node_budget: int = 500_000,
    maximize: bool = False,
    horizon: int | None = None,
) -> FiniteHorizonResult:
    """Backward induction with no grid error.

    With ``policy=None`` the maximising action is chosen at each node;
    otherwise the given policy is evaluated against the per-step adversary.
    """
    T = scenario.horizon if horizon is None else horizon
    b0 = as_weights(b0).astype(float)
    if b0.shape != (scenario.num_groups,):
        raise ParameterError("initial belief has wrong dimension")
    lik = resolve_likelihood(scenario, likelihood)
    P, R, mix, gamma = scenario.transitions, scenario.rewards, scenario.mixing, scenario.discount
    S, A = scenario.num_states, scenario.num_actions
    memo: dict = {}
    actions: dict = {}
    zero = np.zeros(S)

    def probs(b, s):
        if isinstance(policy, Policy):
            return policy.action_probs(b, s)
        return np.asarray(policy(b, s), dtype=float)

    def node(t, b):
        """Values of every state at (t, b)."""
        if t >= T:
            return zero
        key = (t, b.tobytes())
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= node_budget:
            raise ResourceBudgetError(f"reachable-belief tree exceeds node budget {node_budget}")
        out = np.empty(S)
        for s in range(S):
            if callable(lik):
                Ls = np.array([[lik(b, s, a, t2) for t2 in range(S)] for a in range(A)], dtype=float)
            else:
                Ls = lik[s]
            nb = posterior(b[None, None, :], Ls)  # (A, S', Z)
            cont = np.empty((A, S))
            reach = P[:, s].sum(axis=0) > 0  # (A, S'), reachable under some MDP
            for a in range(A):
                for t2 in range(S):
                    cont[a, t2] = node(t + 1, nb[a, t2])[t2] if reach[a, t2] else 0.0
            U = R[:, s, :].T + gamma * np.einsum("mat,at->am", P[:, s], cont)  # (A, M)
            if policy is None:
                vals = robust_payoff(U, b, mix, spec, formulation, maximize)
                a_star = int(np.argmax(vals))
                actions[(t, b.tobytes(), s)] = a_star
                out[s] = vals[a_star]
            else:
                pi = probs(b, s)
                out[s] = float(robust_payoff(pi @ U, b, mix, spec, formulation, maximize))
        memo[key] = out
        return out

    V0 = node(0, b0)
    init = scenario.initial_dists @ V0  # payoff of the initial-state draw per MDP
    value = float(robust_payoff(init, b0, mix, spec, formulation, maximize))
    return FiniteHorizonResult(V0.copy(), value, actions, len(memo))


@dataclass
class FormulationOptimum:
    value: float
    root_actions: np.ndarray  # optimal first action per state at b0
    result: FiniteHorizonResult = field(repr=False)


def optimal_values_all_formulations(
    scenario: HlmdpScenario,
    b_z,
    xi: float,
    metric: str = "sup_norm",
    likelihood: LikelihoodSpec = None,
    node_budget: int = 500_000,
    maximize: bool = False,
) -> dict[str, FormulationOptimum]:
    spec = BallSpec(xi, metric)
    b_z = as_weights(b_z).astype(float)
    out = {}
    for tag in FORMULATIONS:
        res = finite_horizon_dp(scenario, spec, b_z, likelihood, tag, node_budget=node_budget, maximize=maximize)
        if scenario.horizon > 0:
            roots = np.array([res.root_action(b_z, s) for s in range(scenario.num_states)])
        else:
            roots = np.zeros(scenario.num_states, dtype=int)
        out[tag] = FormulationOptimum(res.initial_value, roots, res)
    return out


# --------------------------------------------------------------------------
# fixed-policy criteria with a static adversary


def mdp_returns(
    scenario: HlmdpScenario,
    policy: Policy | Callable,
    b0,
    likelihood: LikelihoodSpec = None,
    horizon: int | None = None,
) -> np.ndarray:
    """Expected discounted return ``U_m`` of ``policy`` in every MDP.

    The policy sees ``(b_t, s_t)`` with ``b_0 = b0``; beliefs follow the
    state-based likelihood, so given the MDP the process is Markov.
    """
    T = scenario.horizon if horizon is None else horizon
    P, R, gamma = scenario.transitions, scenario.rewards, scenario.discount
    M, S, A = P.shape[:3]
    nu = scenario.initial_dists
    if isinstance(policy, Policy) and not policy.belief_dependent:
        pi = np.asarray(policy.action_dist)
        r_pi = np.einsum("sa,msa->ms", pi, R)
        P_pi = np.einsum("sa,msat->mst", pi, P)
        W = np.zeros((M, S))
        for _ in range(T):
            W = r_pi + gamma * np.einsum("mst,mt->ms", P_pi, W)
        return np.einsum("ms,ms->m", nu, W)

    lik = resolve_likelihood(scenario, likelihood)
    b0 = as_weights(b0).astype(float)

    def probs(b, s):
        if isinstance(policy, Policy):
            return policy.action_probs(b, s)
        return np.asarray(policy(b, s), dtype=float)

    memo: dict = {}

    def node(t, b):
        """W_t(b, s) for all MDPs and states: shape (M, S)."""
        if t >= T:
            return np.zeros((M, S))
        key = (t, b.tobytes())
        if key in memo:
            return memo[key]
        out = np.empty((M, S))
        for s in range(S):
            if callable(lik):
                Ls = np.array([[lik(b, s, a, t2) for t2 in range(S)] for a in range(A)], dtype=float)
            else:
                Ls = lik[s]
            nb = posterior(b[None, None, :], Ls)
            pi = probs(b, s)
            cont = np.zeros((M, A, S))
            for a in np.flatnonzero(pi > 0):
                for t2 in range(S):
                    if P[:, s, a, t2].any():
                        cont[:, a, t2] = node(t + 1, nb[a, t2])[:, t2]
            q = R[:, s, :] + gamma * np.einsum("mat,mat->ma", P[:, s], cont)
            out[:, s] = q @ pi
        memo[key] = out
        return out

    return np.einsum("ms,ms->m", nu, node(0, b0))


def evaluate_formulation(
    scenario: HlmdpScenario,
    tag: Formulation,
    policy: Policy | Callable,
    b_z,
    xi: float,
    metric: str = "sup_norm",
    likelihood: LikelihoodSpec = None,
    horizon: int | None = None,
    maximize: bool = False,
    returns: np.ndarray | None = None,
    adversary: str = "static",
) -> float:
    """Value of a fixed policy under one robust criterion.

    With ``adversary="static"`` one belief is chosen against the whole-episode
    returns ``U_m``. GDR: min over the group ball around ``b_z`` of
    ``sum_z p_z sum_m mu_z(m) U_m``. GR: min over groups. DR: min over the MDP
    ball around ``A b_z``. R: min over MDPs. Pass precomputed ``returns`` to
    skip the policy evaluation.

    With ``adversary="per_step"`` the adversary re-chooses at every belief
    node, which is the objective that robust planning and training optimise.
    """
    b_z = as_weights(b_z).astype(float)
    spec = BallSpec(xi, metric)
    if adversary == "per_step":
        res = finite_horizon_dp(scenario, spec, b_z, likelihood, tag, policy=policy, maximize=maximize, horizon=horizon)
        return res.initial_value
    if adversary != "static":
        raise ParameterError(f"unknown adversary {adversary!r}; expected 'static' or 'per_step'")
    U = mdp_returns(scenario, policy, b_z, likelihood, horizon) if returns is None else np.asarray(returns)
    return float(robust_payoff(U, b_z, scenario.mixing, spec, tag, maximize))
