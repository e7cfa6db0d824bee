import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdrmdp.bandit import bandit_to_scenario, canonical_bandit
from gdrmdp.hlmdp import (
    Belief,
    HlmdpScenario,
    ParameterError,
    Policy,
    TabularMdp,
    generate_random_scenario,
    project_belief,
    validate_scenario,
)


def bandit_scenario():
    return bandit_to_scenario(canonical_bandit())


def with_changes(sc, **kw):
    fields = dict(mdps=sc.mdps, mixing=sc.mixing, prior=sc.prior, horizon=sc.horizon, discount=sc.discount)
    fields.update(kw)
    return HlmdpScenario(**fields)


def test_bandit_scenario_is_valid():
    assert validate_scenario(bandit_scenario()).ok


def test_mixing_column_violation_is_reported():
    sc = bandit_scenario()
    bad = with_changes(sc, mixing=np.array([[0.7, 0.0], [0.2, 1.0]]))
    rep = validate_scenario(bad)
    assert not rep.ok
    assert any("column 0 sums to 0.9" in v for v in rep.violations)


def test_discount_one_is_reported():
    rep = validate_scenario(with_changes(bandit_scenario(), discount=1.0))
    assert any("discount not in (0,1)" in v for v in rep.violations)


def test_transition_row_and_shape_violations():
    good = TabularMdp(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), np.array([1.0, 0.0]))
    bad_row = TabularMdp(np.array([[[0.5, 0.6]], [[0.5, 0.5]]]), np.zeros((2, 1)), np.array([1.0, 0.0]))
    other = TabularMdp(np.full((3, 1, 3), 1 / 3), np.zeros((3, 1)), np.full(3, 1 / 3))
    sc = HlmdpScenario((good, bad_row, other), np.full((3, 1), 1 / 3), np.ones(1), 2, 0.9)
    text = " | ".join(validate_scenario(sc).violations)
    assert "mdps[1].transition[0][0] sums to 1.1" in text
    assert "mdps[2] has (S, A)" in text


def test_validation_never_raises_on_nan():
    m = TabularMdp(np.full((1, 1, 1), np.nan), np.full((1, 1), np.inf), np.ones(1))
    rep = validate_scenario(HlmdpScenario((m,), np.ones((1, 1)), np.ones(1), 1, 0.5))
    assert not rep.ok


def test_generator_is_valid_and_deterministic():
    a = generate_random_scenario(0, 2, 4, 3, 2, 0.9, 5)
    b = generate_random_scenario(0, 2, 4, 3, 2, 0.9, 5)
    assert validate_scenario(a).ok
    assert a == b
    assert a != generate_random_scenario(1, 2, 4, 3, 2, 0.9, 5)


def test_generator_rejects_fewer_mdps_than_groups():
    with pytest.raises(ParameterError):
        generate_random_scenario(0, 3, 2, 3, 2, 0.9, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 2), st.integers(1, 4), st.integers(1, 3))
def test_generated_scenarios_always_validate(seed, Z, extra, S, A):
    assert validate_scenario(generate_random_scenario(seed, Z, Z + extra, S, A)).ok


def test_project_belief_bandit_nominal():
    q = project_belief(bandit_scenario(), [0.5, 0.5])
    assert q.level == "mdp"
    np.testing.assert_allclose(q.weights, [0.4, 0.6], atol=1e-12)


def test_project_belief_column_selection_and_identity():
    np.testing.assert_allclose(project_belief(bandit_scenario(), [1.0, 0.0]).weights, [0.8, 0.2], atol=1e-15)
    ident = with_changes(
        generate_random_scenario(3, 3, 3, 2, 2), mixing=np.eye(3)
    )
    b = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(project_belief(ident, b).weights, b, atol=1e-15)


def test_project_belief_dimension_mismatch():
    with pytest.raises(ParameterError):
        project_belief(bandit_scenario(), [0.2, 0.3, 0.5])
    with pytest.raises(ParameterError):
        project_belief(bandit_scenario(), Belief(np.array([0.5, 0.5]), level="mdp"))


def test_belief_rejects_off_simplex():
    with pytest.raises(ParameterError):
        Belief(np.array([0.6, 0.6]))
    with pytest.raises(ParameterError):
        Belief(np.array([1.2, -0.2]))


def test_policy_tables():
    p = Policy.deterministic([1, 0], 2)
    np.testing.assert_array_equal(p.action_probs([0.5, 0.5], 0), [0.0, 1.0])
    assert not p.belief_dependent
    with pytest.raises(ParameterError):
        Policy("stationary_state_table", np.array([[0.5, 0.6]]))
