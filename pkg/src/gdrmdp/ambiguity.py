"""Ambiguity balls on the probability simplex and their worst-case beliefs.

Two metrics are supported:

``sup_norm``
    ``max_i |p_i - nominal_i| <= xi``
``tv_positive_part``
    ``sum_i (p_i - nominal_i)_+ <= xi`` (total variation)

For a linear objective ``<p, u>`` both balls admit an exact greedy minimiser:
mass moves from the highest-payoff coordinates to the lowest-payoff ones until
a per-coordinate cap or the total budget binds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.optimize import linprog

from .hlmdp import Belief, HlmdpScenario, ParameterError, as_weights

Metric = Literal["sup_norm", "tv_positive_part"]
METRICS = ("sup_norm", "tv_positive_part")
MEMBER_TOL = 1e-9
_STEP_TOL = 1e-13  # absorbs rounding when the budget is exactly saturated


@dataclass(frozen=True)
class BallSpec:
    """Radius and metric of a belief-wise ambiguity set, before it is centred."""

    xi: float = 0.0
    metric: Metric = "sup_norm"

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ParameterError(f"radius must lie in [0, 1], got {self.xi}")
        if self.metric not in METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}")

    def around(self, nominal, level="group") -> "AmbiguityBall":
        return AmbiguityBall(nominal, self.xi, self.metric, level=level)


class AmbiguityBall:
    def __init__(self, nominal, radius: float, metric: Metric = "sup_norm", level="group"):
        self.nominal = as_weights(nominal).copy()
        self.nominal.setflags(write=False)
        self.radius = float(radius)
        self.metric = metric
        self.level = nominal.level if isinstance(nominal, Belief) else level
        BallSpec(self.radius, metric)  # validates radius and metric

    def __repr__(self):
        return f"AmbiguityBall(nominal={self.nominal}, radius={self.radius}, metric={self.metric!r})"

    @property
    def dim(self) -> int:
        return self.nominal.size

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate box containing the ball (tight for ``sup_norm``)."""
        lo = np.maximum(0.0, self.nominal - self.radius)
        hi = np.minimum(1.0, self.nominal + self.radius)
        return lo, hi

    def distance(self, p) -> np.ndarray:
        d = np.asarray(p, dtype=float) - self.nominal
        if self.metric == "sup_norm":
            return np.abs(d).max(axis=-1)
        return np.clip(d, 0.0, None).sum(axis=-1)

    def contains(self, p, tol: float = MEMBER_TOL):
        """Membership test; vectorised over leading axes of ``p``."""
        p = np.asarray(p, dtype=float)
        on_simplex = (p.min(axis=-1) >= -tol) & (np.abs(p.sum(axis=-1) - 1.0) <= tol)
        return on_simplex & (self.distance(p) <= self.radius + tol)


def _greedy_transfer(n, u, lo, hi, budget):
    """Move mass from high-``u`` to low-``u`` coordinates of ``n`` within caps."""
    p = n.copy()
    receivers = np.argsort(u, kind="stable")
    donors = receivers[::-1]
    i = j = 0
    d = u.size
    while i < d and j < d and budget > 0:
        r, k = receivers[i], donors[j]
        if u[r] >= u[k]:
            break
        room, spare = hi[r] - p[r], p[k] - lo[k]
        if room <= 0:
            i += 1
            continue
        if spare <= 0:
            j += 1
            continue
        amt = min(room, spare, budget)
        p[r] += amt
        p[k] -= amt
        budget -= amt
    return p


def worst_case_belief_exact(ball: AmbiguityBall, u, maximize: bool = False) -> tuple[Belief, float]:
    """Exact minimiser of ``<p, u>`` over the ball intersected with the simplex.

    Returns the nominal itself when no transfer lowers the objective, so a
    constant ``u`` gives back the centre. ``maximize`` flips the adversary
    (used only to check that the verification harness notices).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != ball.nominal.shape:
        raise ParameterError(f"payoff has shape {u.shape}, ball has dimension {ball.dim}")
    if not np.all(np.isfinite(u)):
        raise ParameterError("payoff vector must be finite")
    obj = -u if maximize else u
    n = ball.nominal
    if ball.metric == "sup_norm":
        lo, hi = ball.bounds()
        p = _greedy_transfer(n, obj, lo, hi, np.inf)
    else:
        p = _greedy_transfer(n, obj, np.zeros_like(n), np.ones_like(n), ball.radius)
    p = np.clip(p, 0.0, 1.0)
    return Belief(p, level=ball.level), float(p @ u)


def worst_case_values(nominal, U, xi: float, metric: Metric = "sup_norm", maximize: bool = False) -> np.ndarray:
    """Vectorised optimal values of :func:`worst_case_belief_exact`.

    ``nominal`` and ``U`` broadcast against each other along leading axes; the
    last axis is the simplex coordinate.
    """
    nominal = np.asarray(nominal, dtype=float)
    U = np.asarray(U, dtype=float)
    nominal, U = np.broadcast_arrays(nominal, U)
    if maximize:
        return -worst_case_values(nominal, -U, xi, metric)
    if xi == 0.0:
        return np.einsum("...i,...i->...", nominal, U)
    if metric == "sup_norm":
        lo = np.maximum(0.0, nominal - xi)
        cap = np.minimum(1.0, nominal + xi) - lo
        order = np.argsort(U, axis=-1, kind="stable")
        u_s = np.take_along_axis(U, order, -1)
        cap_s = np.take_along_axis(cap, order, -1)
        left = 1.0 - lo.sum(axis=-1, keepdims=True)
        before = np.cumsum(cap_s, axis=-1) - cap_s
        add = np.clip(left - before, 0.0, cap_s)
        return np.einsum("...i,...i->...", lo, U) + np.einsum("...i,...i->...", add, u_s)
    if metric == "tv_positive_part":
        u_min = U.min(axis=-1, keepdims=True)
        order = np.argsort(-U, axis=-1, kind="stable")
        u_s = np.take_along_axis(U, order, -1)
        n_s = np.take_along_axis(nominal, order, -1) * (u_s > u_min)
        before = np.cumsum(n_s, axis=-1) - n_s
        take = np.clip(xi - before, 0.0, n_s)
        return np.einsum("...i,...i->...", nominal, U) - np.einsum("...i,...i->...", take, u_s - u_min)
    raise ParameterError(f"unknown metric {metric!r}")


def sample_ball(ball: AmbiguityBall, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws from the ball on the simplex, by rejection from its box."""
    d = ball.dim
    if d == 1 or ball.radius == 0.0:
        return np.repeat(ball.nominal[None, :], n, axis=0)
    out = []
    have = 0
    while have < n:
        free = ball.nominal[:-1] + rng.uniform(-ball.radius, ball.radius, size=(max(2 * n, 64), d - 1))
        cand = np.concatenate([free, 1.0 - free.sum(axis=1, keepdims=True)], axis=1)
        keep = cand[ball.contains(cand, tol=0.0)]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:n]


class ProjectedBall:
    """Image ``{A p : p in ball}`` of a group-level ball under the mixing matrix."""

    def __init__(self, mixing, group_ball: AmbiguityBall):
        self.mixing = np.asarray(mixing, dtype=float)
        if self.mixing.shape[1] != group_ball.dim:
            raise ParameterError("mixing columns must match the ball dimension")
        self.group_ball = group_ball

    @property
    def nominal(self) -> np.ndarray:
        return self.mixing @ self.group_ball.nominal

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_ball(self.group_ball, rng, n) @ self.mixing.T

    def worst_case(self, u_m, maximize: bool = False) -> tuple[np.ndarray, float]:
        """Minimise ``<q, u_m>`` over the image set (pulls ``u_m`` back to groups)."""
        u_m = np.asarray(u_m, dtype=float)
        p, _ = worst_case_belief_exact(self.group_ball, self.mixing.T @ u_m, maximize=maximize)
        q = self.mixing @ p.weights
        return q, float(q @ u_m)

    def contains(self, q, tol: float = 1e-7) -> bool:
        """Feasibility LP: is ``q = A p`` for some ``p`` in the group ball?"""
        q = np.asarray(q, dtype=float)
        M, Z = self.mixing.shape
        ball = self.group_ball
        tv = ball.metric == "tv_positive_part"
        # variables: p (Z), s_plus (M), s_minus (M), [t (Z) for tv]
        nt = Z if tv else 0
        nv = Z + 2 * M + nt
        c = np.zeros(nv)
        c[Z : Z + 2 * M] = 1.0
        A_eq = np.zeros((M + 1, nv))
        A_eq[:M, :Z] = self.mixing
        A_eq[:M, Z : Z + M] = -np.eye(M)
        A_eq[:M, Z + M : Z + 2 * M] = np.eye(M)
        A_eq[M, :Z] = 1.0
        b_eq = np.concatenate([q, [1.0]])
        bounds = [(0, None)] * nv
        A_ub = b_ub = None
        if tv:
            # t >= p - nominal, sum t <= xi
            A_ub = np.zeros((Z + 1, nv))
            A_ub[:Z, :Z] = np.eye(Z)
            A_ub[:Z, Z + 2 * M :] = -np.eye(Z)
            A_ub[Z, Z + 2 * M :] = 1.0
            b_ub = np.concatenate([ball.nominal, [ball.radius]])
        else:
            lo, hi = ball.bounds()
            bounds[:Z] = list(zip(lo, hi))
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        return bool(res.status == 0 and res.fun <= tol)


def project_ball(scenario_or_mixing, group_ball: AmbiguityBall) -> ProjectedBall:
    mixing = scenario_or_mixing.mixing if isinstance(scenario_or_mixing, HlmdpScenario) else scenario_or_mixing
    return ProjectedBall(mixing, group_ball)


@dataclass(frozen=True)
class AttackConfig:
    step_size: float = 0.02
    max_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ParameterError("attack step size must be positive")
        if self.max_steps < 1:
            raise ParameterError("attack needs at least one step")

    def to_dict(self) -> dict:
        return {"alpha": self.step_size, "max_steps": self.max_steps, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(float(d.get("alpha", 0.02)), int(d.get("max_steps", 50)), int(d.get("seed", 0)))


def _max_feasible_step(ball: AmbiguityBall, p: np.ndarray, delta: np.ndarray) -> float:
    """Largest ``t`` in [0, 1] with ``p + t * delta`` inside the ball."""
    if ball.metric == "sup_norm":
        lo, hi = ball.bounds()
    else:
        lo, hi = np.zeros_like(p), np.ones_like(p)
    t = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(delta > 0, (hi - p) / delta, np.inf)
        down = np.where(delta < 0, (lo - p) / delta, np.inf)
    t = max(0.0, min(t, up.min(), down.min()))
    limit = max(ball.radius, float(ball.distance(p))) + _STEP_TOL
    if ball.metric == "tv_positive_part" and ball.distance(p + t * delta) > limit:
        a, b = 0.0, t
        for _ in range(60):
            mid = 0.5 * (a + b)
            if ball.distance(p + mid * delta) <= limit:
                a = mid
            else:
                b = mid
        t = a
    return t


def fgsm_belief_attack(
    ball: AmbiguityBall,
    value_fn: Callable[[np.ndarray], float],
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
    fd_step: float = 1e-5,
    return_path: bool = False,
):
    """Iterated signed-gradient descent on the belief, kept inside the ball.

    Each step draws a compensating coordinate ``i`` and moves every other
    coordinate ``j`` by ``step_size`` against the sign of its derivative
    (taken along ``e_j - e_i`` so the simplex constraint is respected), with
    ``p_i`` absorbing the change. Moves are applied one coordinate at a time
    and each is shortened to stay inside the ball, so a saturated budget
    does not freeze the whole step. The lowest-value iterate is returned.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    p = ball.nominal.copy()
    path = [p.copy()]
    best, best_v = p.copy(), float(value_fn(p))
    d = p.size
    if d > 1 and ball.radius > 0:
        if ball.metric == "sup_norm":
            lo, hi = ball.bounds()
        else:
            lo, hi = np.zeros(d), np.ones(d)
        for _ in range(cfg.max_steps):
            i = int(rng.integers(d))
            others = np.arange(d) != i
            grad = np.zeros(d)
            for j in np.flatnonzero(others):
                e = np.zeros(d)
                e[j], e[i] = fd_step, -fd_step
                grad[j] = (value_fn(p + e) - value_fn(p - e)) / (2 * fd_step)
            moved = False
            for j in np.flatnonzero(others):
                step = -cfg.step_size * np.sign(grad[j])
                step = float(np.clip(p[j] + step, lo[j], hi[j]) - p[j])
                if step == 0.0:
                    continue
                delta = np.zeros(d)
                delta[j], delta[i] = step, -step
                t = _max_feasible_step(ball, p, delta)
                if t <= 0.0:
                    continue
                p = p + t * delta
                p[j] = min(max(p[j], lo[j]), hi[j])
                p[i] = 1.0 - (p.sum() - p[i])
                moved = True
            if not moved:
                continue
            path.append(p.copy())
            v = float(value_fn(p))
            if v < best_v:
                best, best_v = p.copy(), v
    out = Belief(np.clip(best, 0.0, 1.0), level=ball.level)
    if return_path:
        return out, np.array(path)
    return out
