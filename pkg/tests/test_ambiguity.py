import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from gdrmdp.ambiguity import (
    AmbiguityBall,
    AttackConfig,
    BallSpec,
    fgsm_belief_attack,
    project_ball,
    sample_ball,
    worst_case_belief_exact,
    worst_case_values,
)
from gdrmdp.bandit import canonical_bandit
from gdrmdp.hlmdp import ParameterError
from gdrmdp.verify import brute_force_min


def lp_min(nominal, u, xi, metric):
    """Independent LP oracle for min <p, u> over the ball."""
    d = len(u)
    if metric == "sup_norm":
        bounds = [(max(0.0, n - xi), min(1.0, n + xi)) for n in nominal]
        res = linprog(u, A_eq=np.ones((1, d)), b_eq=[1.0], bounds=bounds, method="highs")
    else:
        # variables p, t with t >= p - n, sum t <= xi
        c = np.concatenate([u, np.zeros(d)])
        A_ub = np.block([[np.eye(d), -np.eye(d)], [np.zeros((1, d)), np.ones((1, d))]])
        b_ub = np.concatenate([nominal, [xi]])
        A_eq = np.concatenate([np.ones(d), np.zeros(d)])[None]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, 1)] * d + [(0, None)] * d, method="highs")
    return res.fun


def test_bandit_group_ball_example():
    p, v = worst_case_belief_exact(AmbiguityBall([0.5, 0.5], 0.2), [17.6, 0.0])
    np.testing.assert_allclose(p.weights, [0.3, 0.7], atol=1e-12)
    assert abs(v - 5.28) <= 1e-9


def test_bandit_mdp_ball_example():
    p, v = worst_case_belief_exact(AmbiguityBall([0.4, 0.6], 0.2, level="mdp"), [22.0, 0.0])
    np.testing.assert_allclose(p.weights, [0.2, 0.8], atol=1e-12)
    assert abs(v - 4.4) <= 1e-9
    assert p.level == "mdp"


def test_constant_payoff_returns_nominal():
    ball = AmbiguityBall([0.2, 0.5, 0.3], 0.15)
    p, v = worst_case_belief_exact(ball, [3.0, 3.0, 3.0])
    np.testing.assert_array_equal(p.weights, ball.nominal)
    assert abs(v - 3.0) < 1e-12


@pytest.mark.parametrize("metric", ["sup_norm", "tv_positive_part"])
def test_three_group_example(metric):
    ball = AmbiguityBall([0.5, 0.3, 0.2], 0.1, metric)
    p, v = worst_case_belief_exact(ball, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(p.weights, [0.6, 0.3, 0.1], atol=1e-12)
    assert abs(v - 1.5) <= 1e-12
    assert abs(brute_force_min(ball, np.array([1.0, 2.0, 3.0])) - 1.5) <= 5e-3


def test_dimension_mismatch_and_bad_specs():
    with pytest.raises(ParameterError):
        worst_case_belief_exact(AmbiguityBall([0.5, 0.5], 0.1), [1.0, 2.0, 3.0])
    with pytest.raises(ParameterError):
        BallSpec(1.5)
    with pytest.raises(ParameterError):
        BallSpec(0.1, "wasserstein")


def test_membership():
    ball = AmbiguityBall([0.5, 0.5], 0.2)
    assert ball.contains([0.7, 0.3]) and not ball.contains([0.75, 0.25])
    assert not ball.contains([0.6, 0.6])
    tv = AmbiguityBall([0.5, 0.3, 0.2], 0.1, "tv_positive_part")
    assert tv.contains([0.55, 0.25, 0.2]) and not tv.contains([0.62, 0.18, 0.2])


simplex_case = st.integers(2, 5).flatmap(
    lambda d: st.tuples(
        st.lists(st.floats(0.01, 1.0), min_size=d, max_size=d),
        st.lists(st.floats(-5.0, 5.0), min_size=d, max_size=d),
        st.floats(0.0, 1.0),
        st.sampled_from(["sup_norm", "tv_positive_part"]),
    )
)


@settings(max_examples=300, deadline=None)
@given(simplex_case)
def test_exact_oracle_matches_lp(case):
    w, u, xi, metric = case
    n = np.array(w) / sum(w)
    u = np.array(u)
    ball = AmbiguityBall(n, xi, metric)
    p, v = worst_case_belief_exact(ball, u)
    assert ball.contains(p.weights)
    assert abs(v - lp_min(n, u, xi, metric)) <= 1e-8
    assert abs(float(worst_case_values(n, u, xi, metric)) - v) <= 1e-9
    _, vmax = worst_case_belief_exact(ball, u, maximize=True)
    assert abs(vmax + lp_min(n, -u, xi, metric)) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(simplex_case, st.floats(0.0, 1.0))
def test_value_monotone_in_radius(case, shrink):
    w, u, xi, metric = case
    n = np.array(w) / sum(w)
    big = worst_case_values(n, u, xi, metric)
    small = worst_case_values(n, u, xi * shrink, metric)
    assert big <= small + 1e-12


def test_worst_case_values_vectorised():
    rng = np.random.default_rng(0)
    n = rng.dirichlet(np.ones(3), size=20)
    U = rng.normal(size=(20, 3))
    for metric in ("sup_norm", "tv_positive_part"):
        batch = worst_case_values(n, U, 0.1, metric)
        one = [worst_case_belief_exact(AmbiguityBall(n[i], 0.1, metric), U[i])[1] for i in range(20)]
        np.testing.assert_allclose(batch, one, atol=1e-12)


@pytest.mark.parametrize("metric", ["sup_norm", "tv_positive_part"])
def test_ball_sampler_stays_inside(metric):
    ball = AmbiguityBall([0.1, 0.6, 0.3], 0.2, metric)
    pts = sample_ball(ball, np.random.default_rng(1), 500)
    assert pts.shape == (500, 3) and np.all(ball.contains(pts, tol=1e-12))


def test_projection_bandit_and_degenerate_cases():
    b = canonical_bandit()
    proj = project_ball(b.mixing, AmbiguityBall([0.5, 0.5], 0.2))
    Q = proj.sample(np.random.default_rng(0), 1000)
    assert np.abs(Q - [0.4, 0.6]).max() <= 0.2 + 1e-12
    zero = project_ball(b.mixing, AmbiguityBall([0.5, 0.5], 0.0))
    np.testing.assert_allclose(zero.sample(np.random.default_rng(0), 5), [[0.4, 0.6]] * 5, atol=1e-15)
    ident = project_ball(np.eye(3), AmbiguityBall([0.2, 0.3, 0.5], 0.1))
    assert ident.contains([0.3, 0.2, 0.5]) and not ident.contains([0.35, 0.15, 0.5])


def test_projection_membership_lp():
    mixing = np.array([[0.8, 0.0], [0.2, 1.0]])
    proj = project_ball(mixing, AmbiguityBall([0.5, 0.5], 0.2))
    assert proj.contains([0.24, 0.76]) and proj.contains([0.56, 0.44])
    assert not proj.contains([0.2, 0.8])


def test_sup_norm_inclusion_fails_with_four_groups():
    # Two groups per MDP: a sup-norm move of xi on each pair adds up to 2 xi.
    mixing = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    ball = AmbiguityBall(np.full(4, 0.25), 0.1)
    p = ball.nominal + np.array([0.1, 0.1, -0.1, -0.1])
    assert ball.contains(p)
    mball = AmbiguityBall(mixing @ ball.nominal, 0.1, level="mdp")
    assert abs(float(mball.distance(mixing @ p)) - 0.2) < 1e-12
    assert not mball.contains(mixing @ p)


def test_three_group_sup_norm_perturbations_move_mdps_at_most_xi():
    # Vertices of {d : sum d = 0, |d_i| <= xi} in three dimensions.
    xi = 0.1
    for perm in itertools.permutations([xi, -xi, 0.0]):
        for row in np.random.default_rng(0).uniform(size=(50, 3)):
            assert abs(row @ np.array(perm)) <= xi + 1e-15


def test_fgsm_bandit_example():
    ball = AmbiguityBall([0.5, 0.5], 0.2)
    p = fgsm_belief_attack(ball, lambda x: float(x @ [17.6, 0.0]), AttackConfig(0.02, 50, 0))
    assert abs(float(p.weights @ [17.6, 0.0]) - 5.28) <= 1e-6


def test_fgsm_zero_radius_and_constant():
    ball = AmbiguityBall([0.3, 0.7], 0.0)
    np.testing.assert_array_equal(fgsm_belief_attack(ball, lambda x: float(x[0]), AttackConfig()).weights, [0.3, 0.7])
    ball = AmbiguityBall([0.2, 0.3, 0.5], 0.1)
    p = fgsm_belief_attack(ball, lambda x: 4.0, AttackConfig())
    assert ball.contains(p.weights)


@pytest.mark.parametrize("metric", ["sup_norm", "tv_positive_part"])
def test_fgsm_path_feasible_and_deterministic(metric):
    ball = AmbiguityBall([0.4, 0.35, 0.25], 0.15, metric)
    f = lambda x: float(x @ [1.0, -2.0, 0.5])
    p1, path = fgsm_belief_attack(ball, f, AttackConfig(0.01, 100, 3), return_path=True)
    p2 = fgsm_belief_attack(ball, f, AttackConfig(0.01, 100, 3))
    np.testing.assert_array_equal(p1.weights, p2.weights)
    assert np.all(ball.contains(path))
    _, exact = worst_case_belief_exact(ball, [1.0, -2.0, 0.5])
    assert f(p1.weights) - exact <= 1e-4


def test_attack_config_validation():
    with pytest.raises(ParameterError):
        AttackConfig(step_size=0.0)
    with pytest.raises(ParameterError):
        AttackConfig(max_steps=0)
    cfg = AttackConfig(0.05, 7, 2)
    assert AttackConfig.from_dict(cfg.to_dict()) == cfg
