"""The alpha-investing wealth machine.

Each test j is granted a level alpha_j carved out of the current wealth.  A
rejection earns a fixed return gamma; an acceptance costs
alpha_j / (1 - alpha_j).  Capping alpha_j at W(1-beta) / (1 + W(1-beta))
makes that cost at most W(1-beta), so the wealth never reaches zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class AlphaParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.gamma <= self.alpha:
            raise ValueError("gamma must lie in (0, alpha]")

    def to_json(self) -> dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}

    @classmethod
    def from_json(cls, obj: dict[str, float]) -> AlphaParams:
        return cls(float(obj["alpha"]), float(obj["beta"]), float(obj["gamma"]))


@dataclass(frozen=True)
class AlphaState:
    wealth: float
    index: int = 0

    @classmethod
    def initial(cls, params: AlphaParams) -> AlphaState:
        return cls(params.alpha, 0)


def next_alpha(state: AlphaState, params: AlphaParams) -> float:
    if not state.wealth > 0:
        raise ValueError("wealth must be positive")
    spend = state.wealth * (1.0 - params.beta)
    return min(params.alpha, spend / (1.0 + spend))


def is_rejection(p: float, alpha_j: float) -> bool:
    # boundary p == alpha_j counts as a rejection
    return p <= alpha_j


def apply_decision(state: AlphaState, reject: bool, alpha_j: float, params: AlphaParams) -> AlphaState:
    if reject:
        return AlphaState(state.wealth + params.gamma, state.index + 1)
    return AlphaState(state.wealth - alpha_j / (1.0 - alpha_j), state.index + 1)


def update_wealth(state: AlphaState, p: float, alpha_j: float, params: AlphaParams) -> AlphaState:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return apply_decision(state, is_rejection(p, alpha_j), alpha_j, params)


@dataclass(frozen=True)
class Step:
    index: int
    wealth_before: float
    alpha_j: float
    p: float | None
    reject: bool
    wealth_after: float


def replay(p_values: Iterable[float], params: AlphaParams) -> list[Step]:
    """Run the machine over a p-value sequence, returning every step."""
    state = AlphaState.initial(params)
    steps = []
    for p in p_values:
        a = next_alpha(state, params)
        new = update_wealth(state, p, a, params)
        steps.append(Step(new.index, state.wealth, a, p, is_rejection(p, a), new.wealth))
        state = new
    return steps
