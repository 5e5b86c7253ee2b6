"""Per-scenario utilities, simulated choices and choice probabilities.

A slot option's systematic utility is ``beta_time[slot] + beta_price *
price``: the time coefficient enters once per slot (a slot-presence
intercept, since the coefficient is already segment-specific) and the
price coefficient multiplies the fee actually charged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import OPT_OUT, Assortment, BehaviorSpec, DeliveryOption, Instance, ScenarioSet


def systematic_utilities(instance: Instance, scen: ScenarioSet) -> np.ndarray:
    """Deterministic utility component, shape (|I|, n, R); opt-out row is 0."""
    key = ("V", id(instance))
    cached = scen._cache.get(key)
    if cached is not None:
        return cached
    I = instance.n_options
    n = scen.n_customers
    V = np.zeros((I, n, scen.R))
    for opt in instance.catalog[1:]:
        V[opt.option_id] = scen.beta_time[opt.slot] + scen.beta_price * opt.price
    scen._cache[key] = V
    return V


def utilities(instance: Instance, scen: ScenarioSet) -> np.ndarray:
    """Realized utilities V + xi, shape (|I|, n, R)."""
    key = ("u", id(instance))
    cached = scen._cache.get(key)
    if cached is not None:
        return cached
    u = systematic_utilities(instance, scen) + scen.xi
    scen._cache[key] = u
    return u


def systematic_utility(
    option: DeliveryOption, n: int, r: int, scen: ScenarioSet, instance: Instance
) -> float:
    """Scalar V for one (option, customer, scenario)."""
    if option.is_opt_out:
        return 0.0
    return float(scen.beta_time[option.slot, n, r] + scen.beta_price[n, r] * option.price)


def big_m(n: int, r: int, scen: ScenarioSet, instance: Instance) -> float:
    """Max of V + xi over the whole catalog (offered or not) for one (n, r)."""
    return float(utilities(instance, scen)[:, n, r].max())


@dataclass
class ChoiceMatrix:
    """Chosen option per (customer, scenario); ``w`` is its one-hot view."""

    chosen: np.ndarray  # (n, R) option ids
    n_options: int

    @property
    def n_customers(self) -> int:
        return self.chosen.shape[0]

    @property
    def R(self) -> int:
        return self.chosen.shape[1]

    def w(self) -> np.ndarray:
        """Dense indicator array, shape (|I|, n, R)."""
        out = np.zeros((self.n_options,) + self.chosen.shape, dtype=np.int8)
        n_idx, r_idx = np.indices(self.chosen.shape)
        out[self.chosen, n_idx, r_idx] = 1
        return out

    def to_json(self) -> dict:
        return {"n_options": self.n_options, "chosen": self.chosen.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ChoiceMatrix":
        return cls(chosen=np.array(doc["chosen"], dtype=int), n_options=doc["n_options"])


def choose(assortment: Assortment, scen: ScenarioSet, instance: Instance) -> ChoiceMatrix:
    """Utility-maximizing choice per (customer, scenario), restricted to the
    offered options. Ties break toward the lowest option id, so the opt-out
    wins any tie it is part of."""
    assortment.validate(instance)
    return _choose_unchecked(assortment.gamma, scen, instance)


def _choose_unchecked(gamma: np.ndarray, scen: ScenarioSet, instance: Instance) -> ChoiceMatrix:
    u = utilities(instance, scen)
    masked = np.where(gamma.T[:, :, None] == 1, u, -np.inf)
    chosen = masked.argmax(axis=0)  # first max = lowest option id on ties
    return ChoiceMatrix(chosen=chosen, n_options=instance.n_options)


def choose_penalized(
    assortment: Assortment,
    scen: ScenarioSet,
    instance: Instance,
    penalty: np.ndarray | None = None,
) -> ChoiceMatrix:
    """MILP-style choice oracle: argmax over the *full* catalog with
    non-offered options penalized by a per-(n, r) big-M constant.

    The default penalty is ``max(u) - min(u) + 1`` per cell, which is always
    large enough to push a non-offered option below every offered one. The
    textbook constant ``max(V + xi)`` alone is not: when every offered
    utility is negative it can leave a non-offered option on top, so callers
    wanting that literal constant must pass it explicitly.
    """
    assortment.validate(instance)
    u = utilities(instance, scen)
    if penalty is None:
        penalty = u.max(axis=0) - u.min(axis=0) + 1.0  # (n, R)
    penalized = u - penalty[None, :, :] * (1 - assortment.gamma.T[:, :, None])
    chosen = penalized.argmax(axis=0)
    return ChoiceMatrix(chosen=chosen, n_options=instance.n_options)


def empirical_probabilities(choices: ChoiceMatrix) -> np.ndarray:
    """Observed choice frequencies P[i, n] = (1/R) sum_r w[i, n, r].

    Columns sum to exactly 1.0: the float residual of the division is folded
    into each customer's most frequent option.
    """
    n, R = choices.chosen.shape
    counts = np.zeros((choices.n_options, n))
    for cust in range(n):
        counts[:, cust] = np.bincount(choices.chosen[cust], minlength=choices.n_options)
    P = counts / R
    residual = 1.0 - P.sum(axis=0)
    P[P.argmax(axis=0), np.arange(n)] += residual
    return P


def coverage_rate(choices: ChoiceMatrix) -> float:
    """Percentage of (customer, scenario) pairs that do not opt out."""
    return 100.0 * float(np.mean(choices.chosen != OPT_OUT))


def mnl_probabilities(
    assortment: Assortment, n: int, means: BehaviorSpec, instance: Instance
) -> np.ndarray:
    """Closed-form logit probabilities with tastes fixed at their means.

    Valid as the exact choice distribution when all stds are zero (plain
    MNL); non-offered options get probability 0.
    """
    V = np.zeros(instance.n_options)
    for opt in instance.catalog[1:]:
        seg = instance.slots[opt.slot].segment
        V[opt.option_id] = means.time_mean[seg] + means.price_mean * opt.price
    offered = assortment.gamma[n].astype(bool)
    expV = np.zeros(instance.n_options)
    shifted = V[offered] - V[offered].max()  # stable softmax
    expV[offered] = np.exp(shifted)
    return expV / expV.sum()
