"""Bayesian belief filtering over task groups.

The likelihood model is the controllable one used for robustness studies: at
each step a noisy group index ``j`` is drawn (the true group with probability
``eps_l``, otherwise uniform) and the likelihood puts ``l`` on ``j`` and
spreads ``1 - l`` evenly over the other groups.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hlmdp import Belief, ParameterError, as_weights


class DegenerateLikelihoodError(ArithmeticError):
    """The posterior has zero total mass."""


@dataclass(frozen=True)
class LikelihoodModel:
    l: float = 0.9
    eps_l: float = 1.0
    eps_z: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.eps_l <= 1.0 and 0.0 <= self.eps_z <= 1.0):
            raise ParameterError("eps_l and eps_z must lie in [0, 1]")
        if not (0.0 < self.l <= 1.0):
            raise ParameterError("l must lie in (0, 1]")

    def check_groups(self, Z: int):
        if Z > 1 and not (1.0 / Z < self.l or np.isclose(self.l, 1.0 / Z)):
            raise ParameterError(f"l={self.l} must exceed 1/Z={1.0 / Z}")

    def to_dict(self) -> dict:
        return {"l": self.l, "eps_l": self.eps_l, "eps_z": self.eps_z}

    @classmethod
    def from_dict(cls, d: dict) -> "LikelihoodModel":
        return cls(l=float(d.get("l", 0.9)), eps_l=float(d.get("eps_l", 1.0)), eps_z=float(d.get("eps_z", 1.0)))


@dataclass(frozen=True)
class FilterState:
    belief: Belief
    true_group: int


def init_belief(Z: int) -> Belief:
    if Z < 1:
        raise ParameterError("need at least one group")
    return Belief(np.full(Z, 1.0 / Z), level="group")


def update_belief(b, L) -> Belief:
    """One Bayes step: ``b'(j) = b(j) L(j) / sum_i b(i) L(i)``."""
    w = as_weights(b)
    L = np.asarray(L, dtype=float)
    if L.shape != w.shape:
        raise ParameterError(f"likelihood has shape {L.shape}, belief has {w.shape}")
    if np.any(L < 0):
        raise ParameterError("likelihood entries must be non-negative")
    post = w * L
    total = post.sum()
    if not total > 0:
        raise DegenerateLikelihoodError("likelihood annihilates all posterior mass")
    level = b.level if isinstance(b, Belief) else "group"
    return Belief(post / total, level=level)


def likelihood_vector(l: float, j: int, Z: int) -> np.ndarray:
    if Z == 1:
        return np.ones(1)
    L = np.full(Z, (1.0 - l) / (Z - 1))
    L[j] = l
    return L


def sample_likelihood(model: LikelihoodModel, true_group: int, Z: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= true_group < Z:
        raise ParameterError(f"true_group {true_group} out of range for Z={Z}")
    j = true_group if rng.random() < model.eps_l else int(rng.integers(Z))
    return likelihood_vector(model.l, j, Z)


def sample_test_group(model: LikelihoodModel, true_group: int, Z: int, rng: np.random.Generator) -> int:
    """Noisy group index used at evaluation time to drive the likelihood."""
    if not 0 <= true_group < Z:
        raise ParameterError(f"true_group {true_group} out of range for Z={Z}")
    return true_group if rng.random() < model.eps_z else int(rng.integers(Z))


def likelihood_outcomes(model: LikelihoodModel, true_group: int, Z: int) -> list[tuple[float, np.ndarray]]:
    """Exact distribution of :func:`sample_likelihood` as (probability, L) pairs."""
    probs = np.full(Z, (1.0 - model.eps_l) / Z)
    probs[true_group] += model.eps_l
    return [(float(p), likelihood_vector(model.l, j, Z)) for j, p in enumerate(probs) if p > 0]


def steps_to_concentrate(l: float, Z: int, tol: float = 1e-6) -> int:
    """Noiseless updates needed before the true group's weight exceeds ``1 - tol``.

    Each update multiplies the odds of the true group against any other by
    ``l (Z-1) / (1-l)``, starting from even odds.
    """
    if Z == 1:
        return 0
    ratio = l * (Z - 1) / (1.0 - l)
    return int(np.ceil(np.log((Z - 1) / tol) / np.log(ratio)))
