"""One-step hierarchical latent bandits solved over mixed two-action policies.

A mixed policy plays action 0 with probability ``p``. For each criterion
the payoff ``f(p)`` is piecewise linear and changes slope only where two
coordinates of the (group or MDP) payoff vector cross, so the exact optimum
is found by evaluating ``f`` at those crossings and at the endpoints. A
brute-force search over a ``p`` grid and a grid of adversarial beliefs
serves as an independent check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ambiguity import AmbiguityBall, BallSpec
from .dp import FORMULATIONS, robust_payoff
from .hlmdp import HlmdpScenario, ParameterError, TabularMdp

_BRUTE_POINTS = 200_000  # cap on adversary grid points in dimension >= 3


@dataclass(frozen=True, eq=False)
class HierarchicalBandit:
    reward: np.ndarray  # (M, A)
    mixing: np.ndarray  # (M, Z)
    belief: np.ndarray  # (Z,)
    xi: float = 0.2
    metric: str = "sup_norm"

    def __post_init__(self):
        for name in ("reward", "mixing", "belief"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        BallSpec(self.xi, self.metric)
        if self.reward.shape[0] != self.mixing.shape[0] or self.belief.shape != (self.mixing.shape[1],):
            raise ParameterError("reward, mixing and belief dimensions disagree")

    def with_xi(self, xi: float) -> "HierarchicalBandit":
        return HierarchicalBandit(self.reward, self.mixing, self.belief, xi, self.metric)

    @property
    def spec(self) -> BallSpec:
        return BallSpec(self.xi, self.metric)


def canonical_bandit() -> HierarchicalBandit:
    """Two groups, two MDPs, two actions; action 0 is risky, action 1 pays 5."""
    return HierarchicalBandit(
        reward=np.array([[22.0, 5.0], [0.0, 5.0]]),
        mixing=np.array([[0.8, 0.0], [0.2, 1.0]]),
        belief=np.array([0.5, 0.5]),
        xi=0.2,
    )


def random_bandit(seed: int, Z: int = 2, M: int = 3, xi: float | None = None, metric: str = "sup_norm"):
    rng = np.random.default_rng(seed)
    mixing = rng.exponential(size=(Z, M))
    mixing = (mixing / mixing.sum(axis=1, keepdims=True)).T
    belief = rng.exponential(size=Z)
    belief /= belief.sum()
    reward = rng.uniform(0.0, 10.0, size=(M, 2))
    xi = float(rng.uniform(0.0, 0.3)) if xi is None else xi
    return HierarchicalBandit(reward, mixing, belief, xi, metric)


def group_values(bandit: HierarchicalBandit) -> np.ndarray:
    """Expected reward of each action inside each group: shape (Z, A)."""
    return bandit.mixing.T @ bandit.reward


def bandit_to_scenario(bandit: HierarchicalBandit, discount: float = 0.9) -> HlmdpScenario:
    """Embed as a one-state, one-step HLMDP with the bandit's belief as prior."""
    M, A = bandit.reward.shape
    mdps = tuple(
        TabularMdp(transition=np.ones((1, A, 1)), reward=bandit.reward[m][None, :], initial_state_dist=np.ones(1))
        for m in range(M)
    )
    return HlmdpScenario(mdps=mdps, mixing=bandit.mixing, prior=bandit.belief, horizon=1, discount=discount)


def policy_label(p: float, atol: float = 1e-12) -> str:
    if abs(p - 1.0) <= atol:
        return "a0"
    if abs(p) <= atol:
        return "a1"
    return f"mixed(p={p:.6f})"


@dataclass
class BanditSolution:
    formulation: str
    p: float  # probability of action 0
    value: float
    brute_p: float
    brute_value: float
    tolerance: float

    @property
    def policy(self) -> str:
        return policy_label(self.p)

    @property
    def agrees(self) -> bool:
        return abs(self.value - self.brute_value) <= self.tolerance


def _payoff_lines(bandit, tag):
    """Coordinates the adversary acts on, at p = 0 and p = 1."""
    R = bandit.reward
    if tag in ("GDR", "GR"):
        return bandit.mixing.T @ R[:, 1], bandit.mixing.T @ R[:, 0]
    return R[:, 1], R[:, 0]


def robust_value(bandit: HierarchicalBandit, tag: str, p) -> np.ndarray:
    """``f(p)`` for one criterion; vectorised over ``p``."""
    p = np.asarray(p, dtype=float)
    U = p[..., None] * bandit.reward[:, 0] + (1.0 - p[..., None]) * bandit.reward[:, 1]
    return robust_payoff(U, bandit.belief, bandit.mixing, bandit.spec, tag)


def _exact(bandit, tag):
    c0, c1 = _payoff_lines(bandit, tag)
    slope = c1 - c0
    cand = [1.0, 0.0]
    for i, j in itertools.combinations(range(c0.size), 2):
        ds = slope[i] - slope[j]
        if ds != 0.0:
            t = (c0[j] - c0[i]) / ds
            if 0.0 < t < 1.0:
                cand.append(float(t))
    cand = np.array(cand)
    vals = robust_value(bandit, tag, cand)
    # prefer pure actions, then smaller p, among numerical ties
    k = int(np.flatnonzero(vals >= vals.max() - 1e-12)[0])
    return float(cand[k]), float(vals[k])


def _adversary_grid(ball: AmbiguityBall, per_axis: int) -> np.ndarray:
    d = ball.dim
    if d == 1 or ball.radius == 0.0:
        return ball.nominal[None, :]
    lo, hi = ball.bounds()
    per_axis = min(per_axis, max(2, int(_BRUTE_POINTS ** (1.0 / (d - 1)))))
    axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(d - 1)]
    free = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
    pts = np.concatenate([free, 1.0 - free.sum(axis=1, keepdims=True)], axis=1)
    return pts[ball.contains(pts, tol=1e-12)]


def _brute(bandit, tag, p_grid, eps_grid):
    ps = np.linspace(0.0, 1.0, p_grid)
    c0, c1 = _payoff_lines(bandit, tag)
    C = ps[:, None] * c1 + (1.0 - ps[:, None]) * c0  # (p_grid, d)
    h = 0.0
    if tag in ("GR", "R"):
        vals = C.min(axis=1)
    else:
        nominal = bandit.belief if tag == "GDR" else bandit.mixing @ bandit.belief
        ball = AmbiguityBall(nominal, bandit.xi, bandit.metric)
        Q = _adversary_grid(ball, eps_grid)
        vals = np.full(p_grid, np.inf)
        for start in range(0, len(Q), 20000):
            vals = np.minimum(vals, (C @ Q[start : start + 20000].T).min(axis=1))
        if ball.dim > 1 and ball.radius > 0:
            per_axis = min(eps_grid, max(2, int(_BRUTE_POINTS ** (1.0 / (ball.dim - 1)))))
            h = 2.0 * bandit.xi / (per_axis - 1) * 2 * (ball.dim - 1)
    k = int(np.argmax(vals))
    return float(ps[k]), float(vals[k]), h


def solve_bandit(
    bandit: HierarchicalBandit,
    tag: str,
    p_grid: int = 1001,
    eps_grid: int = 1001,
) -> BanditSolution:
    """Max over mixed policies of the criterion's adversarial value."""
    if tag not in FORMULATIONS:
        raise ParameterError(f"unknown formulation {tag!r}")
    if bandit.reward.shape[1] != 2:
        raise ParameterError("the bandit solver handles exactly two actions")
    if p_grid < 2 or eps_grid < 2:
        raise ParameterError("grids need at least two points")
    p, v = _exact(bandit, tag)
    bp, bv, h = _brute(bandit, tag, p_grid, eps_grid)
    scale = float(np.abs(bandit.reward).max())
    tol = (2.0 / p_grid + h) * scale + 1e-12
    return BanditSolution(tag, p, v, bp, bv, tol)


def solve_all(bandit: HierarchicalBandit, p_grid: int = 1001, eps_grid: int = 1001) -> dict[str, BanditSolution]:
    return {tag: solve_bandit(bandit, tag, p_grid, eps_grid) for tag in FORMULATIONS}
