"""Shared construction helpers for the test suite."""

import numpy as np

from risksharing import Agent, Market, Measure, RandomVariable, StateSpace, normalize_log_density
from risksharing.scenario import gauss_hermite_rule


def gh_space(order):
    """One-dimensional standard-normal quadrature space and its coordinate."""
    nodes, weights = gauss_hermite_rule(order)
    space = StateSpace(weights)
    return space, RandomVariable(space, nodes)


def beta_market(beta, order=64):
    """Two symmetric unit-tolerance agents with opposite exponential tilts."""
    space, x = gh_space(order)
    base = space.baseline()
    p0 = normalize_log_density(base, beta * x.values)
    p1 = normalize_log_density(base, -beta * x.values)
    return Market([Agent(1.0, p0), Agent(1.0, p1)]), x


def gaussian_pair_space(order, corr=-0.5):
    """Tensor grid for two unit-variance coordinates with given correlation."""
    nodes, weights = gauss_hermite_rule(order)
    z0, z1 = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.multiply.outer(weights, weights).ravel()
    factor = np.linalg.cholesky(np.array([[1.0, corr], [corr, 1.0]]))
    z = np.stack([z0.ravel(), z1.ravel()])
    x = factor @ z
    space = StateSpace(w)
    return space, RandomVariable(space, x[0]), RandomVariable(space, x[1])


def random_market(rng, n_agents=None, n_states=None, tilt_scale=1.0, delta_range=(0.3, 3.0)):
    """Seeded random market with heterogeneous beliefs on a random space."""
    if n_agents is None:
        n_agents = int(rng.integers(2, 5))
    if n_states is None:
        n_states = int(rng.integers(50, 501))
    w = rng.dirichlet(np.full(n_states, 5.0))
    space = StateSpace(w)
    base = space.baseline()
    agents = []
    for _ in range(n_agents):
        tilt = rng.normal(0.0, tilt_scale, n_states)
        agents.append(
            Agent(float(rng.uniform(*delta_range)), normalize_log_density(base, tilt))
        )
    return Market(agents)


def common_beliefs_market(rng, n_agents=None, n_states=None):
    """Agents who differ in tolerance but share one belief measure."""
    if n_agents is None:
        n_agents = int(rng.integers(2, 6))
    if n_states is None:
        n_states = int(rng.integers(50, 501))
    w = rng.dirichlet(np.full(n_states, 5.0))
    space = StateSpace(w)
    shared = normalize_log_density(space.baseline(), rng.normal(0.0, 1.0, n_states))
    return Market(
        [Agent(float(rng.uniform(0.2, 4.0)), shared) for _ in range(n_agents)]
    )


def measure(space, values):
    arr = np.asarray(values, dtype=float)
    return Measure(space, arr / arr.sum())
