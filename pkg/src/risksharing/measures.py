"""Finite state spaces, equivalent probability measures, and their algebra.

All measures live on a shared :class:`StateSpace` and are strictly positive
(equivalent to the baseline), so densities, log-densities and relative
entropies are always well defined.  Log-densities are only meaningful up to
an additive constant; :func:`normalize_log_density` pins that constant by
renormalising, using a max-shift so nothing overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

# Strict positivity floor: measures must stay equivalent to the baseline,
# and weights appear in denominators of entropies.
MIN_WEIGHT = 1e-300
SUM_TOL = 1e-12


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"expected a 1-d array, got shape {arr.shape}")
    return arr


def _check_weights(weights: np.ndarray, what: str) -> None:
    if weights.size == 0:
        raise ContractError(f"{what}: empty weight vector")
    if not np.all(np.isfinite(weights)):
        raise ContractError(f"{what}: weights must be finite")
    if np.any(weights < MIN_WEIGHT):
        raise ContractError(
            f"{what}: all weights must be >= {MIN_WEIGHT} (strict equivalence)"
        )
    total = float(np.sum(weights))
    if abs(total - 1.0) > SUM_TOL:
        raise ContractError(f"{what}: weights sum to {total!r}, not 1")


@dataclass(frozen=True)
class StateSpace:
    """Ordered finite collection of world states with baseline probabilities."""

    labels: tuple
    baseline_weights: np.ndarray

    def __init__(self, baseline_weights, labels=None):
        weights = _as_float_array(baseline_weights)
        _check_weights(weights, "StateSpace")
        if labels is None:
            labels = tuple(f"s{k}" for k in range(weights.size))
        else:
            labels = tuple(str(x) for x in labels)
            if len(labels) != weights.size:
                raise DimensionError("labels and baseline_weights differ in length")
        weights = weights.copy()
        weights.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "baseline_weights", weights)

    @property
    def n_states(self) -> int:
        return self.baseline_weights.size

    def baseline(self) -> "Measure":
        return Measure(self, self.baseline_weights)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, StateSpace):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(
            self.baseline_weights, other.baseline_weights
        )

    def __hash__(self):
        return hash((self.labels, self.baseline_weights.tobytes()))


def _same_space(a, b) -> StateSpace:
    if a.space is not b.space and a.space != b.space:
        raise DimensionError("objects are defined on different state spaces")
    return a.space


@dataclass(frozen=True, eq=False)
class Measure:
    """Strictly positive probability vector on a :class:`StateSpace`."""

    space: StateSpace
    weights: np.ndarray = field(repr=False)

    def __init__(self, space: StateSpace, weights):
        arr = _as_float_array(weights)
        if arr.size != space.n_states:
            raise DimensionError(
                f"measure has {arr.size} weights on a {space.n_states}-state space"
            )
        _check_weights(arr, "Measure")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "weights", arr)

    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def log_density(self, base: "Measure") -> np.ndarray:
        """Pointwise log(dSelf/dBase); exact, no '~' ambiguity."""
        _same_space(self, base)
        return np.log(self.weights) - np.log(base.weights)


@dataclass(frozen=True, eq=False)
class RandomVariable:
    """Real payoff (or log-density) per state."""

    space: StateSpace
    values: np.ndarray = field(repr=False)

    def __init__(self, space: StateSpace, values):
        arr = _as_float_array(values)
        if arr.size != space.n_states:
            raise DimensionError(
                f"random variable has {arr.size} values on a {space.n_states}-state space"
            )
        if not np.all(np.isfinite(arr)):
            raise ContractError("RandomVariable values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", arr)

    def __add__(self, other):
        if isinstance(other, RandomVariable):
            _same_space(self, other)
            return RandomVariable(self.space, self.values + other.values)
        return RandomVariable(self.space, self.values + float(other))

    __radd__ = __add__

    def __neg__(self):
        return RandomVariable(self.space, -self.values)

    def __sub__(self, other):
        return self + (-other if isinstance(other, RandomVariable) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, scalar):
        return RandomVariable(self.space, self.values * float(scalar))

    __rmul__ = __mul__


def weights_from_logs(space: StateSpace, logw: np.ndarray) -> Measure:
    """Normalise unnormalised log weights into a strictly positive measure.

    Max-shifted so nothing overflows; weights that underflow after the shift
    are floored at the equivalence floor (a sub-1e-300 perturbation) so the
    result stays equivalent to the baseline.
    """
    logw = logw - logw.max()
    w = np.maximum(np.exp(logw), MIN_WEIGHT)
    return Measure(space, w / w.sum())


def normalize_log_density(base: Measure, log_density) -> Measure:
    """Measure with density proportional to exp(log_density) against ``base``.

    Realises the additive-constant equivalence for log-densities: any
    constant shift of ``log_density`` yields the same measure.  Computed with
    a max-shift so magnitudes up to ~700 in the exponent do not overflow.
    """
    if isinstance(log_density, RandomVariable):
        _same_space(base, log_density)
        lam = log_density.values
    else:
        lam = _as_float_array(log_density)
        if lam.size != base.space.n_states:
            raise DimensionError("log density length does not match state space")
    if not np.all(np.isfinite(lam)):
        raise ContractError("log density must be finite per state")
    return weights_from_logs(base.space, np.log(base.weights) + lam)


def geometric_mean_measure(measures, weights) -> Measure:
    """Probability whose log-density is the weighted average of the inputs'.

    ``weights`` must be nonnegative and sum to one (zero weights drop the
    corresponding measure); the result is the log-linear (geometric)
    mixture of the ``measures``, always strictly positive when the inputs
    are.
    """
    measures = list(measures)
    lam = _as_float_array(weights)
    if len(measures) != lam.size:
        raise DimensionError("one weight per measure is required")
    if np.any(lam < 0):
        raise ContractError("geometric-mean weights must be nonnegative")
    if abs(lam.sum() - 1.0) > 1e-10:
        raise ContractError(f"geometric-mean weights sum to {lam.sum()!r}, not 1")
    space = measures[0].space
    for m in measures[1:]:
        if m.space is not space and m.space != space:
            raise DimensionError("all measures must share one state space")
    logw = sum(l * np.log(m.weights) for l, m in zip(lam, measures))
    return weights_from_logs(space, logw)


def relative_entropy(q2: Measure, q1: Measure) -> float:
    """Relative entropy of ``q2`` with respect to ``q1``, in nats.

    Nonnegative, and zero exactly when the two measures coincide.
    """
    _same_space(q2, q1)
    return float(np.sum(q2.weights * (np.log(q2.weights) - np.log(q1.weights))))


def expect(q: Measure, x: RandomVariable) -> float:
    """Expectation of ``x`` under ``q``."""
    _same_space(q, x)
    return float(np.dot(q.weights, x.values))


def variance(q: Measure, x: RandomVariable) -> float:
    """Second central moment of ``x`` under ``q``."""
    _same_space(q, x)
    mean = np.dot(q.weights, x.values)
    dev = x.values - mean
    return float(np.dot(q.weights, dev * dev))
