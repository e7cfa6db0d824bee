import numpy as np
import pytest
from scipy.optimize import linprog

from gdrmdp.ambiguity import BallSpec
from gdrmdp.bandit import bandit_to_scenario, canonical_bandit
from gdrmdp.dp import (
    FORMULATIONS,
    ResourceBudgetError,
    ValueTable,
    bellman_operator,
    evaluate_formulation,
    finite_horizon_dp,
    mdp_returns,
    optimal_values_all_formulations,
    posterior,
    q_values,
    GridDynamics,
    value_iteration,
)
from gdrmdp.grid import BeliefGrid
from gdrmdp.hlmdp import HlmdpScenario, ParameterError, Policy, TabularMdp, generate_random_scenario


def constant_scenario(T=5, gamma=0.9):
    m = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), np.ones(1))
    return HlmdpScenario((m,), np.ones((1, 1)), np.ones(1), T, gamma)


def bandit_scenario():
    return bandit_to_scenario(canonical_bandit())


def lp_min(nominal, u, xi):
    """Independent sup-norm worst case by linear programming."""
    bounds = [(max(0.0, n - xi), min(1.0, n + xi)) for n in nominal]
    return linprog(u, A_eq=np.ones((1, len(u))), b_eq=[1.0], bounds=bounds, method="highs").fun


def brute_tree_value(sc, xi, b0, T):
    """Plain recursion over beliefs with an LP adversary; GDR, transition likelihood."""
    P, R, A_mix, g = sc.transitions, sc.rewards, sc.mixing, sc.discount
    M, S, A = P.shape[:3]

    def V(t, b):
        if t == T:
            return np.zeros(S)
        out = np.zeros(S)
        for s in range(S):
            best = -np.inf
            for a in range(A):
                u_m = np.zeros(M)
                for m in range(M):
                    u_m[m] = R[m, s, a]
                    for s2 in range(S):
                        if P[m, s, a, s2] == 0:
                            continue
                        lik = np.array([sum(A_mix[k, z] * P[k, s, a, s2] for k in range(M)) for z in range(len(b))])
                        post = b * lik / (b @ lik)
                        u_m[m] += g * P[m, s, a, s2] * V(t + 1, post)[s2]
                best = max(best, lp_min(b, A_mix.T @ u_m, xi))
            out[s] = best
        return out

    V0 = V(0, np.asarray(b0, dtype=float))
    return lp_min(np.asarray(b0, dtype=float), A_mix.T @ (sc.initial_dists @ V0), xi)


def test_constant_reward_fixed_point_and_iteration_bound():
    res = value_iteration(constant_scenario(), BallSpec(0.1), tol=1e-8)
    assert res.converged
    np.testing.assert_allclose(res.values.values, 10.0, atol=1e-6)
    bound = int(np.ceil(np.log(1e-8 * 0.1) / np.log(0.9)))
    assert res.iterations <= bound


def test_value_iteration_deterministic():
    sc = generate_random_scenario(1, 2, 3, 3, 2)
    a = value_iteration(sc, BallSpec(0.1), BeliefGrid(2, 8))
    b = value_iteration(sc, BallSpec(0.1), BeliefGrid(2, 8))
    assert [r for _, r, _ in a.log] == [r for _, r, _ in b.log]
    np.testing.assert_array_equal(a.values.values, b.values.values)


def test_value_iteration_reports_non_convergence():
    res = value_iteration(constant_scenario(), BallSpec(0.1), tol=1e-8, max_iters=5)
    assert not res.converged and res.iterations == 5 and res.residuals[-1] > 1e-8
    with pytest.raises(ParameterError):
        value_iteration(constant_scenario(), BallSpec(0.1), tol=0.0)


def test_values_monotone_in_radius():
    sc = generate_random_scenario(0, 2, 4, 3, 2, 0.9)
    v1 = value_iteration(sc, BallSpec(0.1)).values.values
    v2 = value_iteration(sc, BallSpec(0.2)).values.values
    assert np.all(v1 >= v2 - 1e-6)


def test_one_backup_reproduces_bandit_action_values():
    sc = bandit_scenario()
    grid = BeliefGrid(2, 10)
    Q = q_values(GridDynamics(sc, grid, None), BallSpec(0.2), np.zeros((len(grid), 1)), "GDR")
    k = grid.nearest_index([0.5, 0.5])
    np.testing.assert_allclose(Q[k, 0], [5.28, 5.0], atol=1e-12)


def test_zero_radius_matches_nominal_operator():
    sc = generate_random_scenario(4, 2, 3, 2, 2, 0.8)
    grid = BeliefGrid(2, 6)
    V = ValueTable(np.random.default_rng(0).normal(size=(len(grid), 2)), grid, 0.8)
    got = bellman_operator(sc, BallSpec(0.0), V).values
    P, R, mix = sc.transitions, sc.rewards, sc.mixing
    want = np.zeros_like(got)
    for k, b in enumerate(grid.points):
        for s in range(2):
            q = []
            for a in range(2):
                lik = np.einsum("mt,mz->tz", P[:, s, a], mix)
                total = 0.0
                for z in range(2):
                    for m in range(3):
                        cont = sum(P[m, s, a, t] * grid.evaluate(V.values[:, t], posterior(b, lik[t])) for t in range(2))
                        total += b[z] * mix[m, z] * (R[m, s, a] + 0.8 * cont)
                q.append(total)
            want[k, s] = max(q)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_finite_horizon_trivial_cases():
    assert finite_horizon_dp(constant_scenario(T=0), BallSpec(0.1), [1.0]).initial_value == 0.0
    assert abs(finite_horizon_dp(constant_scenario(T=2), BallSpec(0.1), [1.0]).initial_value - 1.9) < 1e-12


def test_finite_horizon_bandit():
    res = finite_horizon_dp(bandit_scenario(), BallSpec(0.2), [0.5, 0.5])
    assert abs(res.initial_value - 5.28) < 1e-9
    assert res.root_action([0.5, 0.5], 0) == 0


def test_finite_horizon_matches_brute_recursion():
    for seed in range(3):
        sc = generate_random_scenario(seed, 2, 3, 2, 2, 0.9, 3)
        got = finite_horizon_dp(sc, BallSpec(0.15), [0.6, 0.4]).initial_value
        assert abs(got - brute_tree_value(sc, 0.15, [0.6, 0.4], 3)) < 1e-9


def test_node_budget_error_names_budget():
    sc = generate_random_scenario(0, 2, 4, 3, 2, 0.9, 6)
    with pytest.raises(ResourceBudgetError, match="node budget 10"):
        finite_horizon_dp(sc, BallSpec(0.1), [0.5, 0.5], node_budget=10)


def test_fixed_policy_bandit_values():
    sc = bandit_scenario()
    a0, a1 = Policy.deterministic([0], 2), Policy.deterministic([1], 2)
    want0 = {"GDR": 5.28, "GR": 0.0, "DR": 4.4, "R": 0.0}
    for tag in FORMULATIONS:
        assert abs(evaluate_formulation(sc, tag, a0, [0.5, 0.5], 0.2) - want0[tag]) < 1e-9
        assert abs(evaluate_formulation(sc, tag, a1, [0.5, 0.5], 0.2) - 5.0) < 1e-9
        per_step = evaluate_formulation(sc, tag, a0, [0.5, 0.5], 0.2, adversary="per_step")
        assert abs(per_step - want0[tag]) < 1e-9


def test_identity_mixing_zero_radius_gives_nominal():
    sc = generate_random_scenario(2, 3, 3, 2, 2, 0.9, 4)
    sc = HlmdpScenario(sc.mdps, np.eye(3), sc.prior, sc.horizon, sc.discount)
    pol = Policy("stationary_state_table", np.array([[0.3, 0.7], [0.9, 0.1]]))
    b = np.array([0.2, 0.5, 0.3])
    nominal = float(b @ mdp_returns(sc, pol, b))
    for tag in ("GDR", "DR"):
        assert abs(evaluate_formulation(sc, tag, pol, b, 0.0) - nominal) < 1e-12


def test_fixed_policy_value_monotone_in_radius():
    sc = generate_random_scenario(5, 2, 4, 3, 2, 0.9, 4)
    pol = Policy("stationary_state_table", np.full((3, 2), 0.5))
    vals = [evaluate_formulation(sc, "GDR", pol, [0.5, 0.5], xi) for xi in (0.0, 0.05, 0.1, 0.2, 0.4)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_belief_dependent_returns_match_monte_carlo():
    sc = generate_random_scenario(6, 2, 3, 2, 2, 0.9, 3)
    grid = BeliefGrid(2, 4)
    rng = np.random.default_rng(0)
    pol = Policy("belief_state_table", rng.dirichlet(np.ones(2), size=(len(grid), 2)), grid)
    U = mdp_returns(sc, pol, [0.5, 0.5])
    P, R, mix = sc.transitions, sc.rewards, sc.mixing
    lik = np.einsum("msat,mz->satz", P, mix)
    m, n = 1, 20000
    total = 0.0
    for _ in range(n):
        s = rng.choice(2, p=sc.initial_dists[m])
        b = np.array([0.5, 0.5])
        for t in range(3):
            a = rng.choice(2, p=pol.action_probs(b, s))
            total += 0.9**t * R[m, s, a]
            s2 = rng.choice(2, p=P[m, s, a])
            b = posterior(b, lik[s, a, s2])
            s = s2
    assert abs(total / n - U[m]) < 4 * 1.5 / np.sqrt(n) * 3


def test_optimal_orderings_and_identical_mdps():
    opt = optimal_values_all_formulations(bandit_scenario(), [0.5, 0.5], 0.2)
    assert abs(opt["GDR"].value - 5.28) < 1e-9 and opt["GDR"].root_actions[0] == 0
    for tag in ("GR", "DR", "R"):
        assert abs(opt[tag].value - 5.0) < 1e-9 and opt[tag].root_actions[0] == 1
    base = generate_random_scenario(7, 2, 3, 3, 2, 0.9, 3)
    same = HlmdpScenario((base.mdps[0],) * 3, base.mixing, base.prior, 3, 0.9)
    vals = [o.value for o in optimal_values_all_formulations(same, [0.5, 0.5], 0.2).values()]
    assert max(vals) - min(vals) < 1e-12


def test_unknown_likelihood_and_formulation():
    sc = bandit_scenario()
    with pytest.raises(ParameterError):
        value_iteration(sc, BallSpec(0.1), likelihood="oracle")
    with pytest.raises(ParameterError):
        evaluate_formulation(sc, "XX", Policy.deterministic([0], 2), [0.5, 0.5], 0.1)
    with pytest.raises(ParameterError):
        evaluate_formulation(sc, "GDR", Policy.deterministic([0], 2), [0.5, 0.5], 0.1, adversary="joint")


def test_grid_refinement_shrinks_changes():
    for seed in range(10):
        sc = generate_random_scenario(seed, 2, 3, 3, 2, 0.9)
        grids = {K: BeliefGrid(2, K) for K in (5, 10, 20)}
        V = {K: value_iteration(sc, BallSpec(0.1), g, tol=1e-9).values.values for K, g in grids.items()}
        coarse = grids[5].points

        def shared(K):  # values at the points of the coarsest grid
            return V[K][[grids[K].nearest_index(p) for p in coarse]]

        first = np.abs(shared(10) - shared(5)).max()
        second = np.abs(shared(20) - shared(10)).max()
        assert second <= first + 1e-9, (seed, first, second)
