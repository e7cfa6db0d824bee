"""Group distributionally robust planning and learning for hierarchical latent MDPs."""

__version__ = "0.1.0"

from .ambiguity import (
    AmbiguityBall,
    AttackConfig,
    BallSpec,
    fgsm_belief_attack,
    project_ball,
    worst_case_belief_exact,
    worst_case_values,
)
from .bandit import HierarchicalBandit, canonical_bandit, solve_all, solve_bandit
from .belief import LikelihoodModel, init_belief, update_belief
from .dp import (
    FORMULATIONS,
    ResourceBudgetError,
    ValueTable,
    bellman_operator,
    evaluate_formulation,
    finite_horizon_dp,
    optimal_values_all_formulations,
    value_iteration,
)
from .grid import BeliefGrid
from .hlmdp import (
    Belief,
    HlmdpScenario,
    ParameterError,
    Policy,
    TabularMdp,
    generate_random_scenario,
    project_belief,
    validate_scenario,
)
from .io import ConfigError, load_scenario, save_scenario
from .train import QTable, TrainConfig, TrainingDivergence, evaluate_robustness, train
