"""Nash risk-sharing equilibrium solver.

For each zero-sum vector ``z`` (one coordinate per agent) there is a unique
collection of candidate securities solving a coupled per-state system; the
equilibria are exactly the ``z`` at which every candidate security has zero
price under the induced valuation.  The per-state system is solved by two
nested bracketed monotone solves, the zero-price condition by bisection
(two agents, where the map is strictly increasing) or by a damped
fixed-point iteration with Newton polish and multistart (three or more
agents, where uniqueness is not guaranteed and all distinct roots found are
reported).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Market, cara_utility
from .arrow_debreu import ArrowDebreuEquilibrium, solve_arrow_debreu
from .errors import ContractError, SolverError
from .measures import Measure, RandomVariable, normalize_log_density
from .roots import brent_root, solve_exp_linear

W_MAX_ITER = 300
Z_SUM_TOL = 1e-9


@dataclass(frozen=True)
class InnerSolution:
    """Candidate securities and valuation for one zero-sum vector.

    ``log_ratios[i]`` holds log(1 + C_i/delta_minus_i) per state in solution
    space; securities satisfy C_i = delta_minus_i * expm1(log_ratios[i]).
    Residual checks should use ``log_ratios`` directly: recomputing the log
    from float security values loses precision where a security sits within
    ~1e-12 of its endogenous bound.
    """

    securities: tuple
    log_ratios: np.ndarray
    log_tilt: RandomVariable
    valuation: Measure

    def security_values(self) -> np.ndarray:
        return np.stack([c.values for c in self.securities])


@dataclass(frozen=True)
class NashEquilibrium:
    """Solved game: transfers, securities, valuation, revealed beliefs.

    ``log_ratios`` carries log(1 + C_i/delta_minus_i) in solution space; see
    :class:`InnerSolution` for why residuals should be evaluated with it.
    """

    z: np.ndarray
    securities: tuple
    pricing: Measure
    revealed: tuple
    agent_values: tuple
    aggregate_value: float
    distance: float
    log_ratios: np.ndarray
    all_roots: tuple

    def security_values(self) -> np.ndarray:
        return np.stack([c.values for c in self.securities])


def _check_z(market: Market, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (market.n_agents,):
        raise ContractError(f"z must have one coordinate per agent, got shape {z.shape}")
    scale = max(1.0, float(np.max(np.abs(z))))
    if abs(float(z.sum())) > Z_SUM_TOL * scale:
        raise ContractError(f"z must sum to zero, got sum {z.sum()!r}")
    return z


def _inner_log_ratios(market: Market, ad: ArrowDebreuEquilibrium, z: np.ndarray):
    """Per-state solve of the coupled security system.

    Returns ``(u, y)`` where ``u[i]`` is log(1 + C_i/delta_minus_i) per
    state and ``y`` is the per-state lambda-weighted mean of the ``u[i]``.
    The outer unknown ``y`` satisfies a strictly increasing scalar equation
    per state and is found by safeguarded Newton inside a sign-checked
    bracket; each evaluation needs one exp-linear solve per agent.
    """
    cstar = ad.security_values()
    a = z[:, None] + cstar  # (n, S)
    deltas = market.deltas[:, None]
    dminus = market.delta_minus[:, None]
    lambdas = market.lambdas[:, None]
    # Clearing forces log(1 + C_i/delta_minus_i) < log(n*delta/delta_minus_i)
    # strictly.  The exact solution can sit within ~1e-140 of that cap, far
    # below float resolution, so solved ratios are projected just inside it;
    # the projection is of the same order as the solve tolerance.
    n_others = market.n_agents - 1
    caps = np.log(n_others * market.delta_total / market.delta_minus)
    caps = (caps - 1e-14 * (1.0 + np.abs(caps)))[:, None]

    def eval_w(y):
        u = np.minimum(solve_exp_linear(dminus, deltas, a + deltas * y), caps)
        w = y - np.sum(lambdas * u, axis=0)
        wp = 1.0 - np.sum(lambdas * deltas / (dminus * np.exp(u) + deltas), axis=0)
        return u, w, wp

    # Below -max_i(a_i/delta_i) the objective is negative; expand to be safe.
    lo = -np.max(a / deltas, axis=0)
    _, w_lo, _ = eval_w(lo)
    step = 1.0
    while np.any(w_lo > 0.0):
        lo = np.where(w_lo > 0.0, lo - step, lo)
        _, w_lo, _ = eval_w(lo)
        step *= 2.0
        if step > 1e12:
            raise SolverError("could not bracket inner solve from below")
    hi = lo + 1.0
    _, w_hi, _ = eval_w(hi)
    step = 1.0
    while np.any(w_hi < 0.0):
        step *= 2.0
        hi = np.where(w_hi < 0.0, hi + step, hi)
        _, w_hi, _ = eval_w(hi)
        if step > 1e12:
            raise SolverError("could not bracket inner solve from above")

    y = 0.5 * (lo + hi)
    scale = 1.0 + np.abs(lo) + np.abs(hi)
    for _ in range(W_MAX_ITER):
        u, w, wp = eval_w(y)
        done = np.abs(w) <= 1e-14 * scale
        if done.all():
            return u, y
        lo = np.where(w < 0.0, y, lo)
        hi = np.where(w > 0.0, y, hi)
        y_new = y - w / wp
        outside = (y_new <= lo) | (y_new >= hi)
        y = np.where(outside, 0.5 * (lo + hi), y_new)
    u, w, _ = eval_w(y)
    if np.any(np.abs(w) > 1e-10 * scale):
        idx = int(np.argmax(np.abs(w)))
        raise SolverError(
            "per-state security system did not converge",
            diagnostics={"state": idx, "residual": float(w[idx]), "iterations": W_MAX_ITER},
        )
    return u, y


def inner_solve(market: Market, ad: ArrowDebreuEquilibrium, z) -> InnerSolution:
    """Unique candidate securities, log tilt, and valuation at ``z``."""
    z = _check_z(market, z)
    u, y = _inner_log_ratios(market, ad, z)
    securities = market.delta_minus[:, None] * np.expm1(u)
    valuation = normalize_log_density(ad.pricing, -y)
    space = market.space
    u = u.copy()
    u.setflags(write=False)
    return InnerSolution(
        securities=tuple(RandomVariable(space, c) for c in securities),
        log_ratios=u,
        log_tilt=RandomVariable(space, y),
        valuation=valuation,
    )


def _prices(market: Market, ad: ArrowDebreuEquilibrium, z: np.ndarray) -> np.ndarray:
    u, y = _inner_log_ratios(market, ad, z)
    securities = market.delta_minus[:, None] * np.expm1(u)
    logq = ad.pricing.log_weights() - y
    logq -= logq.max()
    q = np.exp(logq)
    q /= q.sum()
    return securities @ q


def nash_distance(market: Market, ad: ArrowDebreuEquilibrium, z) -> float:
    """Distance from equilibrium: nonnegative, zero exactly at Nash points.

    Reported raw: at a solved root the value is float noise around zero and
    may print as a tiny negative.
    """
    z = _check_z(market, z)
    eps = _prices(market, ad, z)
    return float(-np.sum(market.delta_minus * np.log1p(eps / market.delta_minus)))


def _distance_from_prices(market: Market, eps: np.ndarray) -> float:
    return float(-np.sum(market.delta_minus * np.log1p(eps / market.delta_minus)))


def phi_map(market: Market, ad: ArrowDebreuEquilibrium, z) -> np.ndarray:
    """Certainty-equivalent update map whose fixed points are the equilibria.

    Component ``i`` is the value agent ``i`` gets at ``z`` minus their
    competitive gain, plus their share of the aggregate shortfall; the
    output sums to zero by construction.
    """
    z = _check_z(market, z)
    sol = inner_solve(market, ad, z)
    u_vals = np.array(
        [cara_utility(agent, c) for agent, c in zip(market.agents, sol.securities)]
    )
    gains = np.asarray(ad.agent_gains)
    shortfall = ad.aggregate_gain - float(u_vals.sum())
    return u_vals - gains + market.lambdas * shortfall


def _lower_corner(market: Market, ad: ArrowDebreuEquilibrium) -> np.ndarray:
    return -(market.delta_minus + np.asarray(ad.agent_gains))


def _phi_and_distance(market, ad, z):
    """One inner solve shared between the update map and the distance."""
    u, y = _inner_log_ratios(market, ad, z)
    securities = market.delta_minus[:, None] * np.expm1(u)
    logq = ad.pricing.log_weights() - y
    logq -= logq.max()
    q = np.exp(logq)
    q /= q.sum()
    eps = securities @ q
    u_vals = np.array(
        [
            cara_utility(agent, RandomVariable(market.space, c))
            for agent, c in zip(market.agents, securities)
        ]
    )
    shortfall = ad.aggregate_gain - float(u_vals.sum())
    phi = u_vals - np.asarray(ad.agent_gains) + market.lambdas * shortfall
    return phi, _distance_from_prices(market, eps)


def _fixed_point_start(market, ad, z0, max_iter, tol_l, damping=0.5):
    """Damped fixed-point iteration, halving the step on distance increases."""
    best_z = z0.copy()
    target, best_l = _phi_and_distance(market, ad, best_z)
    gamma, streak = damping, 0
    floor = _lower_corner(market, ad)
    trace = [best_l]
    for _ in range(max_iter):
        if best_l <= tol_l or float(np.max(np.abs(target - best_z))) < 1e-11:
            break
        z_new = (1.0 - gamma) * best_z + gamma * target
        z_new = np.maximum(z_new, floor)
        z_new -= z_new.sum() / z_new.size
        phi_new, l_new = _phi_and_distance(market, ad, z_new)
        trace.append(l_new)
        if l_new < best_l:
            best_z, best_l, target = z_new, l_new, phi_new
            streak += 1
            if streak >= 3:
                gamma = min(1.0, 2.0 * gamma)
                streak = 0
        else:
            gamma *= 0.5
            streak = 0
            if gamma < 1e-6:
                break
    return best_z, best_l, trace


def _newton_polish(market, ad, z0, eps_target, max_iter=40):
    """Newton iteration on the reduced zero-price system, FD Jacobian."""
    n = market.n_agents

    def full(y):
        return np.concatenate(([-y.sum()], y))

    y = z0[1:].copy()
    g = _prices(market, ad, full(y))[1:]
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= eps_target:
            break
        jac = np.empty((n - 1, n - 1))
        h = 1e-7 * (1.0 + np.abs(y))
        for k in range(n - 1):
            yk = y.copy()
            yk[k] += h[k]
            jac[:, k] = (_prices(market, ad, full(yk))[1:] - g) / h[k]
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            break
        improved = False
        for _ in range(25):
            y_try = y + step
            g_try = _prices(market, ad, full(y_try))[1:]
            if np.max(np.abs(g_try)) < np.max(np.abs(g)):
                y, g = y_try, g_try
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return full(y), g


def _assemble(market, ad, z, all_roots) -> NashEquilibrium:
    sol = inner_solve(market, ad, z)
    revealed = tuple(
        normalize_log_density(agent.beliefs, -logr)
        for agent, logr in zip(market.agents, sol.log_ratios)
    )
    values = tuple(
        cara_utility(agent, c) for agent, c in zip(market.agents, sol.securities)
    )
    return NashEquilibrium(
        z=z,
        securities=sol.securities,
        pricing=sol.valuation,
        revealed=revealed,
        agent_values=values,
        aggregate_value=float(sum(values)),
        distance=nash_distance(market, ad, z),
        log_ratios=sol.log_ratios,
        all_roots=tuple(np.array(r) for r in all_roots),
    )


def solve_nash(
    market: Market,
    ad: ArrowDebreuEquilibrium | None = None,
    tol: float | None = None,
    max_iter: int = 120,
    multistart: int | None = None,
    damping: float = 0.5,
) -> NashEquilibrium:
    """Solve the risk-sharing game.

    Two agents: deterministic bisection on the scalar zero-price map, which
    is strictly increasing, then assembly.  Three or more agents: damped
    fixed-point iteration (initial step ``damping``, adapted to keep the
    distance decreasing) from the centre and the corners of the a-priori
    feasibility box, Newton polish on each start, deduplicated roots all
    reported (uniqueness is only guaranteed for two agents).  ``tol`` is the
    acceptance threshold on the equilibrium distance and defaults to
    ``1e-10 * delta_total``; the solver keeps polishing well below it so
    post-equilibrium identities hold to tighter tolerances.

    Pure given its inputs and configuration: repeated calls return
    identical results, and concurrent use is safe.
    """
    if ad is None:
        ad = solve_arrow_debreu(market)
    if tol is None:
        tol = 1e-10 * market.delta_total
    eps_target = 1e-12 * max(1.0, market.delta_total)

    if market.n_agents == 2:
        gains = np.asarray(ad.agent_gains)

        def price0(z0: float) -> float:
            return _prices(market, ad, np.array([z0, -z0]))[0]

        lo, hi = -gains[0], gains[1]
        pad = 1e-9 * max(1.0, market.delta_total)
        lo, hi = lo - pad, hi + pad
        flo, fhi = price0(lo), price0(hi)
        width = max(hi - lo, 1.0)
        while flo > 0.0:
            lo -= width
            flo = price0(lo)
            width *= 2.0
        while fhi < 0.0:
            hi += width
            fhi = price0(hi)
            width *= 2.0
        z0 = brent_root(price0, lo, hi)
        z = np.array([z0, -z0])
        return _assemble(market, ad, z, all_roots=[z])

    gains = np.asarray(ad.agent_gains)
    n = market.n_agents
    starts = [np.zeros(n)]
    count = multistart if multistart is not None else 1 + n
    for k in range(min(n, max(count - 1, 0))):
        corner = -gains.copy()
        corner[k] = gains.sum() - gains[k]
        if any(np.max(np.abs(corner - s)) < 1e-12 for s in starts):
            continue
        starts.append(corner)

    roots: list[np.ndarray] = []
    best: tuple[float, np.ndarray] | None = None
    traces = []
    for z_start in starts:
        z_fp, _, trace = _fixed_point_start(
            market, ad, z_start, max_iter, tol_l=1e-18, damping=damping
        )
        traces.append(trace)
        z_pol, g = _newton_polish(market, ad, z_fp, eps_target)
        l_pol = _distance_from_prices(market, _prices(market, ad, z_pol))
        if best is None or l_pol < best[0]:
            best = (l_pol, z_pol)
        if l_pol <= tol:
            if not any(
                np.max(np.abs(z_pol - r)) <= 1e-7 * (1.0 + np.max(np.abs(r)))
                for r in roots
            ):
                roots.append(z_pol)

    if not roots:
        raise SolverError(
            "no equilibrium reached the distance tolerance",
            diagnostics={
                "best_z": None if best is None else best[1].tolist(),
                "best_distance": None if best is None else best[0],
                "tolerance": tol,
                "distance_traces": [t[-5:] for t in traces],
            },
        )
    roots.sort(key=lambda r: nash_distance(market, ad, r))
    return _assemble(market, ad, roots[0], all_roots=roots)
