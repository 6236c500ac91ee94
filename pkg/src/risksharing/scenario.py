"""Scenario files: validation, state-space construction, market building.

A scenario is one YAML (or JSON) document with three sections:

``states``
    Either an explicit finite state list (``model: explicit`` with
    ``weights`` and named per-state ``variables``), or a Gaussian model
    (``model: gaussian`` with named ``variables``, a covariance given
    directly as ``cov`` or as ``std`` + ``corr``, and either a
    deterministic ``quadrature_order`` or ``samples`` + ``seed``).

``agents``
    Each entry carries ``delta`` and a ``beliefs`` entry: explicit
    ``weights``, a ``log_density`` expression over the state variables, or
    an ``endowment`` expression (folded into beliefs at ingestion, with
    optional ``actual`` beliefs underneath).

``solver`` (optional)
    ``tol``, ``max_iter``, ``multistart``.

``limits`` (optional)
    ``deltas`` grid plus, for the proportional-tolerance mode, ``mode:
    both`` with ``xi0``/``xi1`` expressions and ``lambda0``.

Gaussian grids are tensorised Gauss-Hermite rules over the factor space of
the covariance (near-null directions are dropped), so states and weights
are deterministic; sampling is opt-in and requires a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .agents import Agent, Market, endowment_to_beliefs
from .errors import ValidationError
from .measures import Measure, RandomVariable, StateSpace, normalize_log_density

STATE_CAP = 10**6
PSD_CLIP_LIMIT = 1e-2  # largest relative eigenvalue deficit `clip` will absorb

_EXPR_NAMESPACE = {
    "log": np.log,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "tanh": np.tanh,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
    "pi": math.pi,
    "e": math.e,
}


@dataclass(frozen=True)
class Scenario:
    """Validated scenario document plus construction provenance."""

    name: str
    states: dict
    agents: tuple
    solver: dict
    limits: dict | None = None
    provenance: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(doc: dict) -> "Scenario":
        return _validate(doc)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValidationError(f"scenario file {path} does not contain a mapping")
    return Scenario.from_dict(doc)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


def _validate(doc: dict) -> Scenario:
    _require(isinstance(doc, dict), "scenario must be a mapping")
    states = doc.get("states")
    _require(isinstance(states, dict), "scenario needs a 'states' section")
    model = states.get("model")
    _require(model in ("explicit", "gaussian"), f"unknown state model {model!r}")
    if model == "explicit":
        _require("weights" in states, "explicit state model needs 'weights'")
    else:
        _require(
            isinstance(states.get("variables"), list) and states["variables"],
            "gaussian state model needs a list of variable names",
        )
        has_cov = "cov" in states
        has_corr = "std" in states and "corr" in states
        _require(has_cov or has_corr, "gaussian model needs 'cov' or 'std'+'corr'")
        if "samples" in states:
            _require("seed" in states, "sampled state spaces need a 'seed'")
    agents = doc.get("agents")
    _require(isinstance(agents, list) and len(agents) >= 2, "need at least 2 agents")
    for k, a in enumerate(agents):
        _require(isinstance(a, dict) and "delta" in a, f"agent {k} needs 'delta'")
        _require(float(a["delta"]) > 0, f"agent {k} delta must be positive")
        beliefs = a.get("beliefs", {})
        _require(isinstance(beliefs, dict), f"agent {k} beliefs must be a mapping")
        kinds = [key for key in ("weights", "log_density", "endowment") if key in beliefs]
        _require(len(kinds) <= 1, f"agent {k} beliefs entry is ambiguous: {kinds}")
    solver = dict(doc.get("solver") or {})
    limits = doc.get("limits")
    if limits is not None:
        _require(isinstance(limits, dict), "'limits' must be a mapping")
    return Scenario(
        name=str(doc.get("name", "scenario")),
        states=dict(states),
        agents=tuple(dict(a) for a in agents),
        solver=solver,
        limits=dict(limits) if limits is not None else None,
    )


def _evaluate(expr, variables: dict, n_states: int) -> np.ndarray:
    """Evaluate a scalar-or-vector expression over the named state variables."""
    if isinstance(expr, (int, float)):
        return np.full(n_states, float(expr))
    if isinstance(expr, list):
        arr = np.asarray(expr, dtype=float)
        if arr.size != n_states:
            raise ValidationError(f"literal list has {arr.size} values, need {n_states}")
        return arr
    ns = dict(_EXPR_NAMESPACE)
    ns.update({name: rv.values for name, rv in variables.items()})
    try:
        out = eval(str(expr), {"__builtins__": {}}, ns)  # noqa: S307 - documented trusted input
    except Exception as exc:
        raise ValidationError(f"cannot evaluate expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(out, dtype=float), (n_states,)).astype(float)


def _repair_covariance(cov: np.ndarray, mode: str):
    """Symmetrise and, when allowed, project onto the PSD cone.

    Returns ``(factor, info)`` where ``factor @ factor.T`` is the covariance
    actually used and near-null directions have been dropped from the
    factor's columns.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError("covariance must be a square matrix")
    sym = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(sym)
    top = float(max(evals.max(), 0.0))
    if top == 0.0:
        raise ValidationError("covariance has no positive direction")
    deficit = float(max(0.0, -evals.min()) / top)
    if deficit > 0:
        if mode != "clip":
            raise ValidationError(
                f"covariance is not positive semi-definite (relative deficit {deficit:.2e}); "
                "set covariance_repair: clip to project onto the nearest PSD cone"
            )
        if deficit > PSD_CLIP_LIMIT:
            raise ValidationError(
                f"covariance repair refuses a relative eigenvalue deficit of {deficit:.2e}"
            )
    clipped = np.clip(evals, 0.0, None)
    keep = clipped > 1e-12 * top
    factor = evecs[:, keep] * np.sqrt(clipped[keep])
    adjustment = float(np.max(np.abs(factor @ factor.T - sym)))
    info = {
        "effective_dims": int(keep.sum()),
        "eigenvalue_deficit": deficit,
        "covariance_adjustment": adjustment,
    }
    return factor, info


def gauss_hermite_rule(order: int):
    """Nodes and weights integrating against the standard normal density."""
    if order < 1:
        raise ValidationError("quadrature order must be >= 1")
    nodes, weights = np.polynomial.hermite.hermgauss(int(order))
    return nodes * math.sqrt(2.0), weights / math.sqrt(math.pi)


def build_state_space(scenario: Scenario):
    """Construct the finite state space and its named random variables.

    Deterministic given the scenario: Gauss-Hermite tensor grids for
    quadrature, a seeded generator for sampling, passthrough for explicit
    states.  Returns ``(space, variables, info)``.
    """
    states = scenario.states
    if states["model"] == "explicit":
        weights = np.asarray(states["weights"], dtype=float)
        space = StateSpace(weights, labels=states.get("labels"))
        variables = {
            str(name): RandomVariable(space, _evaluate(vals, {}, space.n_states))
            for name, vals in (states.get("variables") or {}).items()
        }
        return space, variables, {"model": "explicit", "n_states": space.n_states}

    names = [str(v) for v in states["variables"]]
    d = len(names)
    if "cov" in states:
        cov = np.asarray(states["cov"], dtype=float)
    else:
        std = np.asarray(states["std"], dtype=float)
        corr = np.asarray(states["corr"], dtype=float)
        cov = corr * np.outer(std, std)
    if cov.shape != (d, d):
        raise ValidationError(f"covariance shape {cov.shape} does not match {d} variables")
    mean = np.asarray(states.get("mean", np.zeros(d)), dtype=float)
    if mean.shape != (d,):
        raise ValidationError("mean length does not match the variable count")
    factor, info = _repair_covariance(cov, str(states.get("covariance_repair", "none")))
    d_eff = factor.shape[1]

    if "samples" in states:
        n = int(states["samples"])
        _require(1 <= n <= STATE_CAP, f"sample count {n} outside (0, {STATE_CAP}]")
        rng = np.random.default_rng(int(states["seed"]))
        z = rng.standard_normal((d_eff, n))
        weights = np.full(n, 1.0 / n)
        info.update({"model": "gaussian-mc", "seed": int(states["seed"]), "n_states": n})
    else:
        order = int(states.get("quadrature_order", 20))
        if order**d_eff > STATE_CAP:
            raise ValidationError(
                f"quadrature grid of {order}^{d_eff} states exceeds the cap {STATE_CAP}"
            )
        nodes, wts = gauss_hermite_rule(order)
        grids = np.meshgrid(*([nodes] * d_eff), indexing="ij")
        z = np.stack([g.ravel() for g in grids])
        weights = wts
        for _ in range(d_eff - 1):
            weights = np.multiply.outer(weights, wts).ravel()
        info.update(
            {"model": "gaussian-quadrature", "quadrature_order": order, "n_states": z.shape[1]}
        )

    x = mean[:, None] + factor @ z
    space = StateSpace(weights)
    variables = {name: RandomVariable(space, x[k]) for k, name in enumerate(names)}
    return space, variables, info


def build_market(scenario: Scenario):
    """Construct the market from a scenario; returns ``(market, variables, info)``."""
    space, variables, info = build_state_space(scenario)
    base = space.baseline()
    agents = []
    for k, spec in enumerate(scenario.agents):
        delta = float(spec["delta"])
        beliefs_spec = dict(spec.get("beliefs") or {})
        if "weights" in beliefs_spec:
            beliefs = Measure(space, np.asarray(beliefs_spec["weights"], dtype=float))
            agents.append(Agent(delta, beliefs))
        elif "endowment" in beliefs_spec:
            endow = RandomVariable(
                space, _evaluate(beliefs_spec["endowment"], variables, space.n_states)
            )
            actual_spec = beliefs_spec.get("actual")
            if actual_spec is None:
                actual = base
            elif "weights" in actual_spec:
                actual = Measure(space, np.asarray(actual_spec["weights"], dtype=float))
            else:
                actual = normalize_log_density(
                    base, _evaluate(actual_spec.get("log_density", 0.0), variables, space.n_states)
                )
            agents.append(endowment_to_beliefs(actual, endow, delta))
        else:
            tilt = _evaluate(beliefs_spec.get("log_density", 0.0), variables, space.n_states)
            agents.append(Agent(delta, normalize_log_density(base, tilt)))
        _ = k
    return Market(agents), variables, info


BUILTIN_SCENARIOS: dict = {
    "example-2.7": {
        "name": "example-2.7",
        "states": {
            "model": "gaussian",
            "variables": ["E0", "E1"],
            "std": [1.0, 1.0],
            "corr": [[1.0, -0.5], [-0.5, 1.0]],
            "quadrature_order": 64,
        },
        "agents": [
            {"delta": 1.0, "beliefs": {"endowment": "E0"}},
            {"delta": 1.0, "beliefs": {"endowment": "E1"}},
        ],
    },
    "beta-symmetric": {
        "name": "beta-symmetric",
        "states": {
            "model": "gaussian",
            "variables": ["X"],
            "std": [1.0],
            "corr": [[1.0]],
            "quadrature_order": 64,
        },
        "agents": [
            {"delta": 1.0, "beliefs": {"log_density": "X"}},
            {"delta": 1.0, "beliefs": {"log_density": "-X"}},
        ],
    },
    "example-3.9": {
        "name": "example-3.9",
        "states": {
            "model": "gaussian",
            "variables": ["X0", "X1", "X2"],
            "std": [0.4, 2.7, 1.1],
            "corr": [
                [1.0, -0.9, 0.7],
                [-0.9, 1.0, -0.3],
                [0.7, -0.3, 1.0],
            ],
            "quadrature_order": 40,
            "covariance_repair": "clip",
        },
        "agents": [
            {"delta": 1.0, "beliefs": {"log_density": "X0"}},
            {"delta": 1.0, "beliefs": {"log_density": "X1"}},
            {"delta": 1.0, "beliefs": {"log_density": "X2"}},
        ],
    },
    "limit-one-agent": {
        "name": "limit-one-agent",
        "states": {
            "model": "explicit",
            "weights": [0.6, 0.4],
            "labels": ["up", "down"],
        },
        "agents": [
            {"delta": 1.0, "beliefs": {"weights": [0.6, 0.4]}},
            {"delta": 1.0, "beliefs": {"weights": [0.5, 0.5]}},
        ],
        "limits": {"mode": "one-agent", "deltas": [1e2, 1e3, 1e4, 1e5]},
    },
    "limit-both": {
        "name": "limit-both",
        "states": {
            "model": "explicit",
            "weights": [0.5, 0.5],
            "variables": {"XI0": [1.0, -1.0], "XI1": [-1.0, 1.0]},
        },
        "agents": [
            {"delta": 5.0, "beliefs": {"log_density": "XI0 / 5.0"}},
            {"delta": 5.0, "beliefs": {"log_density": "XI1 / 5.0"}},
        ],
        "limits": {
            "mode": "both",
            "xi0": "XI0",
            "xi1": "XI1",
            "lambda0": 0.5,
            "deltas": [10.0, 100.0, 1000.0, 10000.0],
        },
    },
}


def builtin_scenario(name: str) -> Scenario:
    try:
        doc = BUILTIN_SCENARIOS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_SCENARIOS))
        raise ValidationError(f"unknown built-in scenario {name!r}; known: {known}") from None
    return Scenario.from_dict(doc)
