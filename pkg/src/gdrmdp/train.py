"""Episode rollouts, tabular robust Q-learning and belief-noise evaluation.

The Q table lives on a belief grid and is read and written through the
grid's interpolation weights, so ``Q(b, s, a)`` is piecewise linear in ``b``.
The adversarial TD target is

    y = r + gamma * min_{p in ball(b')} max_a Q(p, s', a),

solved exactly on the interpolant (or approximately with the signed-gradient
attack when ``use_fgsm`` is set).
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .ambiguity import AttackConfig, BallSpec, fgsm_belief_attack
from .belief import LikelihoodModel, init_belief, sample_likelihood, sample_test_group, update_belief
from .grid import BeliefGrid, IntervalMinimizer, min_over_ball
from .hlmdp import Belief, HlmdpScenario, ParameterError, Policy, as_weights

PRESETS = ("gdr", "g_exact", "g_belief", "no_belief", "dr", "state_r")
FEEDS = ("belief", "one_hot", "uniform", "mdp", "one_hot_mdp")


class TrainingDivergence(ArithmeticError):
    """Q values left the range implied by the rewards."""


@dataclass
class QTable:
    q: np.ndarray  # (grid points, S, A)
    grid: BeliefGrid
    feed: str = "belief"

    @classmethod
    def zeros(cls, grid: BeliefGrid, S: int, A: int, feed: str = "belief") -> "QTable":
        return cls(np.zeros((len(grid), S, A)), grid, feed)

    def values(self, b) -> np.ndarray:
        """Interpolated action values for every state: shape (S, A)."""
        return self.grid.evaluate(self.q, as_weights(b))

    def action_values(self, b, s: int) -> np.ndarray:
        return self.grid.evaluate(self.q[:, s, :], as_weights(b))

    def greedy(self, b, s: int) -> int:
        return int(np.argmax(self.action_values(b, s)))

    def copy(self) -> "QTable":
        return QTable(self.q.copy(), self.grid, self.feed)


@dataclass(frozen=True)
class TransitionRecord:
    b: Belief  # belief fed to the learner at t
    s: int
    a: int
    r: float
    b_next: Belief
    s_next: int
    done: bool


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    pretrain_episodes: int = 0
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    lr: float = 0.2
    lr_end: float | None = None
    xi: float = 0.1
    metric: str = "sup_norm"
    attack: AttackConfig = field(default_factory=AttackConfig)
    use_fgsm: bool = False
    replay_capacity: int = 5000
    batch_size: int = 32
    updates_per_episode: int = 4
    grid_resolution: int | None = None
    likelihood: LikelihoodModel = field(default_factory=LikelihoodModel)
    preset: str = "gdr"
    seed: int = 0

    def __post_init__(self):
        rates = {"eps_start": self.eps_start, "eps_end": self.eps_end, "lr": self.lr}
        if self.lr_end is not None:
            rates["lr_end"] = self.lr_end
        for name, v in rates.items():
            if not 0.0 < v <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 < self.eps_decay_fraction <= 1.0:
            raise ParameterError("eps_decay_fraction must lie in (0, 1]")
        if self.episodes < 1 or not 0 <= self.pretrain_episodes <= self.episodes:
            raise ParameterError("need episodes >= 1 and 0 <= pretrain_episodes <= episodes")
        if self.batch_size < 1 or self.replay_capacity < 1 or self.updates_per_episode < 0:
            raise ParameterError("batch size and replay capacity must be positive")
        if self.preset not in PRESETS:
            raise ParameterError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        BallSpec(self.xi, self.metric)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack"] = self.attack.to_dict()
        d["likelihood"] = self.likelihood.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown train field(s): {', '.join(sorted(unknown))}")
        if "attack" in d:
            d["attack"] = AttackConfig.from_dict(d["attack"])
        if "likelihood" in d:
            d["likelihood"] = LikelihoodModel.from_dict(d["likelihood"])
        return cls(**d)

    def epsilon(self, episode: int) -> float:
        span = max(1, int(round(self.eps_decay_fraction * self.episodes)))
        frac = min(1.0, episode / span)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def learning_rate(self, episode: int) -> float:
        if self.lr_end is None:
            return self.lr
        frac = episode / max(1, self.episodes - 1)
        return self.lr + frac * (self.lr_end - self.lr)


def preset_settings(preset: str, cfg_xi: float) -> tuple[str, float]:
    """(belief feed, radius) used outside the pretraining phase."""
    if preset == "gdr":
        return "belief", cfg_xi
    if preset == "g_exact":
        return "one_hot", 0.0
    if preset == "g_belief":
        return "belief", 0.0
    if preset == "no_belief":
        return "uniform", 0.0
    if preset == "dr":
        return "mdp", cfg_xi
    if preset == "state_r":
        raise ParameterError("state_r is unsupported: the scenario declares no metric embedding of its states")
    raise ParameterError(f"unknown preset {preset!r}")


def feed_belief(scenario: HlmdpScenario, feed: str, b, group: int) -> Belief:
    """What the learner sees in place of the filtered belief ``b``."""
    Z = scenario.num_groups
    if feed == "belief":
        return b if isinstance(b, Belief) else Belief(b)
    if feed == "one_hot":
        return Belief(np.eye(Z)[group])
    if feed == "uniform":
        return init_belief(Z)
    if feed in ("mdp", "one_hot_mdp"):
        w = np.eye(Z)[group] if feed == "one_hot_mdp" else as_weights(b)
        q = np.clip(scenario.mixing @ w, 0.0, None)
        return Belief(q / q.sum(), level="mdp")
    raise ParameterError(f"unknown belief feed {feed!r}")


def _choose(policy, b, s, A, rng, epsilon):
    explore = rng.random() < epsilon
    if explore:
        return int(rng.integers(A))
    if isinstance(policy, QTable):
        return policy.greedy(b, s)
    if isinstance(policy, Policy):
        probs = policy.action_probs(b, s)
        return int(rng.choice(A, p=probs / probs.sum()))
    return int(policy(b, s))


def rollout_episode(
    scenario: HlmdpScenario,
    policy,
    likelihood: LikelihoodModel,
    rng: np.random.Generator,
    epsilon: float = 0.0,
    feed: str = "belief",
    test_noise: bool = False,
) -> tuple[list[TransitionRecord], float]:
    """Sample one episode; the group and MDP stay hidden from the policy.

    With ``test_noise`` a noisy group index is drawn once per episode and the
    filter's likelihoods target it instead of the true group.
    """
    Z, S, A = scenario.num_groups, scenario.num_states, scenario.num_actions
    z = int(rng.choice(Z, p=scenario.prior))
    m = int(rng.choice(scenario.num_mdps, p=scenario.mixing[:, z]))
    mdp = scenario.mdps[m]
    s = int(rng.choice(S, p=mdp.initial_state_dist))
    target = sample_test_group(likelihood, z, Z, rng) if test_noise else z
    b = init_belief(Z)
    records = []
    ret, disc = 0.0, 1.0
    for t in range(scenario.horizon):
        fed = feed_belief(scenario, feed, b, target if test_noise else z)
        a = _choose(policy, fed, s, A, rng, epsilon)
        s_next = int(rng.choice(S, p=mdp.transition[s, a]))
        r = float(mdp.reward[s, a])
        b = update_belief(b, sample_likelihood(likelihood, target, Z, rng))
        fed_next = feed_belief(scenario, feed, b, target if test_noise else z)
        records.append(TransitionRecord(fed, s, a, r, fed_next, s_next, t == scenario.horizon - 1))
        ret += disc * r
        disc *= scenario.discount
        s = s_next
    return records, ret


class ReplayBuffer:
    """FIFO buffer; batches are drawn without replacement."""

    def __init__(self, capacity: int):
        self.items: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.items)

    def extend(self, records):
        self.items.extend(records)

    def sample(self, n: int, rng: np.random.Generator) -> list:
        if not self.items:
            return []
        idx = rng.choice(len(self.items), size=min(n, len(self.items)), replace=False)
        return [self.items[i] for i in idx]


def td_targets(
    q: QTable,
    batch: list[TransitionRecord],
    spec: BallSpec,
    gamma: float,
    attack: AttackConfig | None = None,
    use_fgsm: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Adversarial targets; ``spec.xi = 0`` gives the ordinary Q-learning target."""
    y = np.array([rec.r for rec in batch], dtype=float)
    live = [i for i, rec in enumerate(batch) if not rec.done]
    if not live:
        return y
    grid = q.grid
    nxt = np.array([as_weights(batch[i].b_next) for i in live])
    rows = np.array([batch[i].s_next for i in live])
    if spec.xi == 0.0:
        v = grid.evaluate(q.q, nxt)[np.arange(len(live)), rows].max(axis=-1)
    elif use_fgsm:
        attack = attack or AttackConfig()
        rng = rng or np.random.default_rng(attack.seed)
        v = np.empty(len(live))
        for k, (b, s) in enumerate(zip(nxt, rows)):
            ball = spec.around(b)

            def value_fn(p, s=s):
                return float(grid.evaluate(q.q[:, s, :], p).max())

            v[k] = value_fn(fgsm_belief_attack(ball, value_fn, attack, rng).weights)
    elif grid.Z == 2:
        lo = np.maximum(0.0, np.maximum(nxt[:, 0] - spec.xi, 1.0 - (nxt[:, 1] + spec.xi)))
        hi = np.minimum(1.0, np.minimum(nxt[:, 0] + spec.xi, 1.0 - (nxt[:, 1] - spec.xi)))
        v = IntervalMinimizer(grid, q.q)(rows, lo, hi, nxt[:, 0])
    else:
        v = np.array([min_over_ball(grid, q.q[:, s, :], spec.around(b))[1] for b, s in zip(nxt, rows)])
    y[live] += gamma * v
    return y


def adversarial_td_update(
    q: QTable,
    batch: list[TransitionRecord],
    spec: BallSpec,
    lr: float,
    gamma: float,
    attack: AttackConfig | None = None,
    use_fgsm: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[QTable, float]:
    """One batch update; returns the new table and the mean absolute TD error.

    Targets are computed from the table before the update. Each record moves
    the grid cells around its belief toward the target in proportion to
    their interpolation weights.
    """
    out = q.copy()
    if not batch:
        return out, 0.0
    y = td_targets(q, batch, spec, gamma, attack, use_fgsm, rng)
    B = np.array([as_weights(rec.b) for rec in batch])
    idx, lam = q.grid.interpolate_many(B)
    errs = np.empty(len(batch))
    for i, rec in enumerate(batch):
        cells = out.q[idx[i], rec.s, rec.a]
        errs[i] = y[i] - float(lam[i] @ q.q[idx[i], rec.s, rec.a])
        out.q[idx[i], rec.s, rec.a] = cells + lr * lam[i] * (y[i] - cells)
    return out, float(np.abs(errs).mean())


@dataclass
class TrainResult:
    q: QTable
    log: list[tuple[int, float, float, float, str]]  # episode, return, td_residual, epsilon, phase


def value_bound(scenario: HlmdpScenario) -> float:
    lo, hi = scenario.reward_bounds()
    return max(abs(lo), abs(hi)) / (1.0 - scenario.discount)


def check_divergence(q: QTable, bound: float, episode: int):
    peak = float(np.abs(q.q).max())
    if not np.isfinite(peak) or peak > 10.0 * bound:
        raise TrainingDivergence(
            f"episode {episode}: max |Q| = {peak:.6g} exceeds 10 x the reward bound {bound:.6g}"
        )


def train(scenario: HlmdpScenario, cfg: TrainConfig) -> TrainResult:
    feed, xi = preset_settings(cfg.preset, cfg.xi)
    cfg.likelihood.check_groups(scenario.num_groups)
    dim = scenario.num_mdps if feed == "mdp" else scenario.num_groups
    grid = BeliefGrid(dim, cfg.grid_resolution)
    q = QTable.zeros(grid, scenario.num_states, scenario.num_actions, feed)
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.replay_capacity)
    bound = value_bound(scenario)
    main_spec = BallSpec(xi, cfg.metric)
    nominal = BallSpec(0.0, cfg.metric)
    log = []
    for ep in range(cfg.episodes):
        pre = ep < cfg.pretrain_episodes
        phase = "pretrain" if pre else "main"
        ep_feed = ("one_hot_mdp" if feed == "mdp" else "one_hot") if pre else feed
        eps = cfg.epsilon(ep)
        records, ret = rollout_episode(scenario, q, cfg.likelihood, rng, eps, ep_feed)
        buffer.extend(records)
        spec = nominal if pre else main_spec
        residuals = []
        for _ in range(cfg.updates_per_episode):
            batch = buffer.sample(cfg.batch_size, rng)
            q, res = adversarial_td_update(q, batch, spec, cfg.learning_rate(ep), scenario.discount, cfg.attack, cfg.use_fgsm, rng)
            residuals.append(res)
        check_divergence(q, bound, ep)
        log.append((ep, ret, float(np.mean(residuals)) if residuals else 0.0, eps, phase))
    return TrainResult(q, log)


def greedy_policy_fn(q: QTable, scenario: HlmdpScenario):
    """``(b, s) -> one-hot action`` for a group-level belief ``b``."""

    def act(b, s):
        fed = feed_belief(scenario, "mdp", b, 0) if q.feed == "mdp" else b
        if q.feed == "uniform":
            fed = init_belief(scenario.num_groups)
        out = np.zeros(scenario.num_actions)
        out[q.greedy(fed, s)] = 1.0
        return out

    return act


# --------------------------------------------------------------------------
# advantage drop


def advantage_drop(
    value,
    b,
    s: int,
    spec: BallSpec,
    attack: AttackConfig | None = None,
    return_to_go: float | None = None,
    use_fgsm: bool = False,
) -> tuple[float, float | None]:
    """``R_drop = V(b, s) - min_{p in ball(b)} V(p, s)`` and the dropped advantage.

    ``value`` is a :class:`~gdrmdp.dp.ValueTable`. With ``return_to_go`` the
    second element is ``return_to_go - R_drop - V(b, s)``.
    """
    b = as_weights(b)
    grid = value.grid
    col = np.asarray(value.values)[:, s]
    v_nom = float(grid.evaluate(col, b))
    ball = spec.around(b)
    if spec.xi == 0.0:
        v_min = v_nom
    elif use_fgsm:
        attack = attack or AttackConfig()
        p = fgsm_belief_attack(ball, lambda p: float(grid.evaluate(col, p)), attack)
        v_min = float(grid.evaluate(col, p.weights))
    else:
        v_min = min_over_ball(grid, col, ball)[1]
    drop = max(0.0, v_nom - v_min)
    adv = None if return_to_go is None else float(return_to_go) - drop - v_nom
    return drop, adv


# --------------------------------------------------------------------------
# evaluation under belief noise


def _episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, episode])


def evaluate_robustness(
    scenario: HlmdpScenario,
    policy,
    noise_levels,
    episodes: int,
    seed: int,
    likelihood: LikelihoodModel | None = None,
) -> list[tuple[float, float, float, int]]:
    """Rows ``(noise_level, mean_return, std_err, episodes)``.

    Episode ``e`` uses the stream ``(seed, e)`` at every noise level, so
    levels and policies are compared on common random numbers.
    """
    base = likelihood or LikelihoodModel()
    feed = policy.feed if isinstance(policy, QTable) else "belief"
    rows = []
    for level in noise_levels:
        level = float(level)
        if not 0.0 <= level <= 1.0:
            raise ParameterError(f"noise level must lie in [0, 1], got {level}")
        model = replace(base, eps_z=level)
        rets = np.array(
            [rollout_episode(scenario, policy, model, _episode_rng(seed, e), 0.0, feed, test_noise=True)[1] for e in range(episodes)]
        )
        se = float(rets.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
        rows.append((level, float(rets.mean()), se, episodes))
    return rows


def belief_error_profile(
    scenario: HlmdpScenario,
    likelihood: LikelihoodModel,
    noise_levels,
    episodes: int,
    seed: int,
) -> list[tuple[float, int, float]]:
    """Rows ``(noise_level, step, mean |b_t - e_z|_1)`` for steps 0..T."""
    Z, T = scenario.num_groups, scenario.horizon
    rows = []
    for level in noise_levels:
        model = replace(likelihood, eps_z=float(level))
        err = np.zeros(T + 1)
        for e in range(episodes):
            rng = _episode_rng(seed, e)
            z = int(rng.choice(Z, p=scenario.prior))
            target = sample_test_group(model, z, Z, rng)
            b = init_belief(Z)
            onehot = np.eye(Z)[z]
            for t in range(T + 1):
                err[t] += np.abs(b.weights - onehot).sum()
                if t < T:
                    b = update_belief(b, sample_likelihood(model, target, Z, rng))
        for t in range(T + 1):
            rows.append((float(level), t, float(err[t] / episodes)))
    return rows
