"""Agents with CARA preferences and the market they trade in.

An agent is fully described by a risk tolerance ``delta`` and a belief
measure; random endowments are folded into beliefs at ingestion via
:func:`endowment_to_beliefs`, after which utility is measured relative to
the endowed no-trade position.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractError, DimensionError
from .measures import Measure, RandomVariable, normalize_log_density

DELTA_MIN = 1e-9
DELTA_MAX = 1e12


@dataclass(frozen=True)
class Agent:
    """Risk tolerance plus (endowment-adjusted) subjective beliefs."""

    delta: float
    beliefs: Measure

    def __post_init__(self):
        if not (DELTA_MIN <= self.delta <= DELTA_MAX):
            raise ContractError(
                f"risk tolerance must lie in [{DELTA_MIN}, {DELTA_MAX}], got {self.delta!r}"
            )


class Market:
    """Roster of at least two agents sharing one state space.

    Exposes the aggregate risk tolerance and the per-agent relative weights
    and complements used throughout the solvers.
    """

    def __init__(self, agents):
        agents = tuple(agents)
        if len(agents) < 2:
            raise ContractError("a market needs at least 2 agents")
        space = agents[0].beliefs.space
        for a in agents[1:]:
            if a.beliefs.space is not space and a.beliefs.space != space:
                raise DimensionError("all agents must share one state space")
        self.agents = agents
        self.space = space
        self.deltas = np.array([a.delta for a in agents], dtype=float)
        self.delta_total = float(self.deltas.sum())
        self.lambdas = self.deltas / self.delta_total
        self.delta_minus = self.delta_total - self.deltas
        self.lambda_minus = 1.0 - self.lambdas

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @cached_property
    def log_beliefs(self) -> np.ndarray:
        """(n_agents, n_states) array of log belief weights."""
        return np.stack([a.beliefs.log_weights() for a in self.agents])


def cara_utility(agent: Agent, x: RandomVariable) -> float:
    """Certainty equivalent -delta*log E[exp(-X/delta)] under the agent's beliefs.

    Evaluated with a max-shift so payoffs with |X|/delta up to ~700 do not
    overflow.  Cash-invariant: adding a constant to ``x`` adds it to the
    result.
    """
    if x.space is not agent.beliefs.space and x.space != agent.beliefs.space:
        raise DimensionError("payoff and beliefs live on different state spaces")
    a = -x.values / agent.delta
    m = a.max()
    return float(-agent.delta * (m + np.log(np.dot(agent.beliefs.weights, np.exp(a - m)))))


def endowment_to_beliefs(actual_beliefs: Measure, endowment: RandomVariable, delta: float) -> Agent:
    """Fold a random endowment into beliefs, tilting by -endowment/delta.

    The returned agent's utility of any payoff X equals the endowed agent's
    utility of X measured relative to the endowed no-trade level.
    """
    if delta <= 0:
        raise ContractError("risk tolerance must be positive")
    tilted = normalize_log_density(actual_beliefs, -endowment.values / delta)
    return Agent(delta=float(delta), beliefs=tilted)
