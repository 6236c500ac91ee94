"""The competitive benchmark: unique price-taking equilibrium.

The valuation measure is the risk-tolerance-weighted geometric mean of the
agents' beliefs, and each agent's security is their log-density against it
plus the entropy cash leg, so all securities carry zero price.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Market, cara_utility
from .errors import SolverError
from .measures import (
    Measure,
    RandomVariable,
    expect,
    geometric_mean_measure,
    relative_entropy,
)

CLEARING_TOL = 1e-9


@dataclass(frozen=True)
class ArrowDebreuEquilibrium:
    pricing: Measure
    securities: tuple
    agent_gains: tuple
    aggregate_gain: float

    def security_values(self) -> np.ndarray:
        """(n_agents, n_states) payoff array."""
        return np.stack([c.values for c in self.securities])


def solve_arrow_debreu(market: Market) -> ArrowDebreuEquilibrium:
    """Closed-form competitive equilibrium of the market.

    Market clearing is enforced exactly: the last security is set to minus
    the sum of the others, and its closed form is asserted to agree within
    ``CLEARING_TOL`` so float drift cannot leak into downstream residuals.
    """
    beliefs = [a.beliefs for a in market.agents]
    pricing = geometric_mean_measure(beliefs, market.lambdas)
    logq = pricing.log_weights()

    securities = []
    gains = []
    for i, agent in enumerate(market.agents):
        log_dens = market.log_beliefs[i] - logq
        gain = agent.delta * relative_entropy(pricing, agent.beliefs)
        securities.append(agent.delta * log_dens + gain)
        gains.append(gain)

    closed_form_last = securities[-1]
    securities[-1] = -np.sum(securities[:-1], axis=0) if market.n_agents > 1 else closed_form_last
    drift = float(np.max(np.abs(securities[-1] - closed_form_last)))
    if drift > CLEARING_TOL:
        raise SolverError(
            "closed-form securities do not clear the market",
            diagnostics={"max_drift": drift},
        )

    space = market.space
    return ArrowDebreuEquilibrium(
        pricing=pricing,
        securities=tuple(RandomVariable(space, c) for c in securities),
        agent_gains=tuple(float(g) for g in gains),
        aggregate_gain=float(sum(gains)),
    )


def utility_gain_vs_ad(
    market: Market, ad: ArrowDebreuEquilibrium, i: int, c: RandomVariable
) -> float:
    """Certainty-equivalent gain of holding ``c`` instead of the equilibrium security.

    Equals ``U_i(c) - U_i(C_i)`` but is evaluated as a single expectation
    under the pricing measure, which is both cheaper and better conditioned.
    Bounded above by the price of ``c``, with equality only when ``c``
    differs from the equilibrium security by a constant.
    """
    delta = market.agents[i].delta
    diff = -(c.values - ad.securities[i].values) / delta
    m = diff.max()
    return float(-delta * (m + np.log(np.dot(ad.pricing.weights, np.exp(diff - m)))))


