"""Core data model: instances, the delivery-option catalog, and scenario sampling.

Conventions used throughout the package:

* customers are indexed ``0..n-1``; in travel matrices node ``0`` is the
  depot and node ``i + 1`` is customer ``i``
* option id ``0`` is always the opt-out; slot options follow in
  ``(slot, discount)`` order
* money, time and load units are whatever the instance uses, as long as
  they are consistent (Solomon instances use Euclidean distance = time)
"""

from __future__ import annotations

import io
import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

SEGMENTS = ("morning", "afternoon", "evening")

#: option id of the opt-out alternative in every catalog
OPT_OUT = 0

# Default behavioral parameters (normal taste distributions per day segment
# plus a price coefficient). Collapse the stds to zero for a plain MNL.
DEFAULT_TIME_MEAN = {"morning": 3.0066, "afternoon": 3.1213, "evening": 2.7334}
DEFAULT_TIME_STD = {"morning": 0.3273, "afternoon": 0.5486, "evening": 0.2168}
DEFAULT_PRICE_MEAN = -0.0766
DEFAULT_PRICE_STD = 0.01

_U64 = (1 << 64) - 1
_MIN_UNIFORM = 2.0 ** -64  # keeps ndtri / double-log transforms finite


def slot_segment(index: int) -> str:
    """Day segment of a slot: slots cycle morning/afternoon/evening in order."""
    return SEGMENTS[index % len(SEGMENTS)]


@dataclass(frozen=True)
class TimeSlot:
    """A delivery window ``[lower, upper]`` with its day segment."""

    index: int
    lower: float
    upper: float
    segment: str

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"slot {self.index}: lower {self.lower} must be < upper {self.upper}")
        if self.segment not in SEGMENTS:
            raise ValueError(f"slot {self.index}: unknown segment {self.segment!r}")

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "segment": self.segment}


@dataclass(frozen=True)
class DeliveryOption:
    """One entry of the option catalog: a (slot, discount) pair or the opt-out.

    ``price`` is the delivery fee the customer actually pays for this option
    and is the value used both in the price term of the utility and in the
    revenue term of the profit.
    """

    option_id: int
    slot: int | None  # None for the opt-out
    discount: float
    price: float

    @property
    def is_opt_out(self) -> bool:
        return self.slot is None


def build_option_catalog(
    slots: list[TimeSlot],
    discounts: list[float],
    fee: float,
    literal_pricing: bool = False,
) -> list[DeliveryOption]:
    """Cross every slot with every discount rate and prepend the opt-out.

    By default a discount rate ``h`` prices the option at ``(1 - h) * fee``.
    With ``literal_pricing`` the price is ``h * fee`` instead (the
    alternate reading in which ``h`` is a fee multiplier rather than a
    discount); the same price feeds utility and revenue in both modes.
    """
    if not slots:
        raise ValueError("catalog needs at least one time slot")
    if not discounts:
        raise ValueError("catalog needs at least one discount rate")
    seen = set()
    for h in discounts:
        if not 0.0 <= h < 1.0:
            raise ValueError(f"discount rate {h} outside [0, 1)")
    catalog = [DeliveryOption(option_id=OPT_OUT, slot=None, discount=0.0, price=0.0)]
    for slot in slots:
        for h in discounts:
            key = (slot.index, h)
            if key in seen:
                raise ValueError(f"duplicate (slot, discount) pair {key}")
            seen.add(key)
            price = h * fee if literal_pricing else (1.0 - h) * fee
            catalog.append(
                DeliveryOption(option_id=len(catalog), slot=slot.index, discount=h, price=price)
            )
    return catalog


def equal_slots(horizon_end: float, n_slots: int) -> list[TimeSlot]:
    """Partition ``[0, horizon_end]`` into ``n_slots`` equal consecutive slots."""
    if n_slots < 1:
        raise ValueError("need at least one slot")
    width = horizon_end / n_slots
    return [
        TimeSlot(index=i, lower=i * width, upper=(i + 1) * width if i < n_slots - 1 else horizon_end,
                 segment=slot_segment(i))
        for i in range(n_slots)
    ]


class Instance:
    """A full problem instance: geometry, fleet, slot catalog and fee policy."""

    def __init__(
        self,
        xy: np.ndarray,
        demand: np.ndarray,
        service_time: np.ndarray,
        horizon_end: float,
        fleet_size: int,
        capacity: float,
        slots: list[TimeSlot],
        discounts: list[float],
        base_fee: float,
        min_options: int = 2,
        vehicle_cost: float = 50.0,
        unit_cost: float = 1.0,
        literal_pricing: bool = False,
        travel_time: np.ndarray | None = None,
        name: str = "instance",
    ):
        self.xy = np.asarray(xy, dtype=float)  # (n + 1, 2); row 0 is the depot
        self.demand = np.asarray(demand, dtype=float)
        self.service_time = np.asarray(service_time, dtype=float)
        self.horizon_end = float(horizon_end)
        self.fleet_size = int(fleet_size)
        self.capacity = float(capacity)
        self.slots = list(slots)
        self.discounts = list(discounts)
        self.base_fee = float(base_fee)
        self.min_options = int(min_options)
        self.vehicle_cost = float(vehicle_cost)
        self.unit_cost = float(unit_cost)
        self.literal_pricing = bool(literal_pricing)
        self.name = name
        if travel_time is None:
            diff = self.xy[:, None, :] - self.xy[None, :, :]
            travel_time = np.sqrt((diff ** 2).sum(axis=2))
        self.travel_time = np.asarray(travel_time, dtype=float)
        self.travel_cost = self.unit_cost * self.travel_time
        self.catalog = build_option_catalog(self.slots, self.discounts, self.base_fee,
                                            literal_pricing=self.literal_pricing)
        # flat per-option views used by the vectorized choice code
        self.option_slot = np.array([-1 if o.slot is None else o.slot for o in self.catalog])
        self.option_price = np.array([o.price for o in self.catalog])
        self.validate()

    # -- basic shape ---------------------------------------------------

    @property
    def n_customers(self) -> int:
        return len(self.demand)

    @property
    def n_options(self) -> int:
        return len(self.catalog)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def options_of_slot(self, slot: int) -> list[int]:
        return [o.option_id for o in self.catalog if o.slot == slot]

    def validate(self):
        n = self.n_customers
        if self.xy.shape != (n + 1, 2):
            raise ValueError(f"xy must be ({n + 1}, 2), got {self.xy.shape}")
        if self.service_time.shape != (n,):
            raise ValueError("service_time length must match customers")
        if self.travel_time.shape != (n + 1, n + 1):
            raise ValueError("travel_time must be (n+1, n+1)")
        if not np.allclose(self.travel_time, self.travel_time.T):
            raise ValueError("travel_time must be symmetric")
        if not np.allclose(np.diag(self.travel_time), 0.0):
            raise ValueError("travel_time diagonal must be zero")
        if np.any(self.demand <= 0) or np.any(self.demand > self.capacity):
            raise ValueError("demands must lie in (0, capacity]")
        if self.fleet_size < 1:
            raise ValueError("fleet_size must be >= 1")
        max_options = self.n_slots * len(self.discounts) + 1
        if not 1 <= self.min_options <= max_options:
            raise ValueError(f"min_options must lie in [1, {max_options}]")
        for a, b in zip(self.slots, self.slots[1:]):
            if a.upper > b.lower:
                raise ValueError("slots must be disjoint and ordered")

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "customers": [
                {
                    "id": i,
                    "x": float(self.xy[i + 1, 0]),
                    "y": float(self.xy[i + 1, 1]),
                    "demand": float(self.demand[i]),
                    "service_time": float(self.service_time[i]),
                }
                for i in range(self.n_customers)
            ],
            "depot": {
                "x": float(self.xy[0, 0]),
                "y": float(self.xy[0, 1]),
                "horizon_end": self.horizon_end,
            },
            "travel_time": self.travel_time.tolist(),
            "travel_cost": self.travel_cost.tolist(),
            "fleet_size": self.fleet_size,
            "capacity": self.capacity,
            "vehicle_cost": self.vehicle_cost,
            "unit_cost": self.unit_cost,
            "slots": [s.to_json() for s in self.slots],
            "discounts": self.discounts,
            "base_fee": self.base_fee,
            "min_options": self.min_options,
            "literal_pricing": self.literal_pricing,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Instance":
        customers = doc["customers"]
        depot = doc["depot"]
        xy = np.array(
            [[depot["x"], depot["y"]]] + [[c["x"], c["y"]] for c in customers], dtype=float
        )
        slots = [
            TimeSlot(index=i, lower=s["lower"], upper=s["upper"], segment=s["segment"])
            for i, s in enumerate(doc["slots"])
        ]
        return cls(
            xy=xy,
            demand=np.array([c["demand"] for c in customers]),
            service_time=np.array([c["service_time"] for c in customers]),
            horizon_end=depot["horizon_end"],
            fleet_size=doc["fleet_size"],
            capacity=doc["capacity"],
            slots=slots,
            discounts=list(doc["discounts"]),
            base_fee=doc["base_fee"],
            min_options=doc.get("min_options", 2),
            vehicle_cost=doc.get("vehicle_cost", 50.0),
            unit_cost=doc.get("unit_cost", 1.0),
            literal_pricing=doc.get("literal_pricing", False),
            travel_time=np.array(doc["travel_time"]) if "travel_time" in doc else None,
            name=doc.get("name", "instance"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Instance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def load_solomon(text, n_customers: int, n_slots: int, **overrides) -> Instance:
    """Build an :class:`Instance` from a Solomon-format VRPTW file.

    ``text`` may be a str, bytes or a readable file object. Row 0 of the
    customer table is the depot; the next ``n_customers`` rows become the
    customers. The original per-customer ready/due times are discarded: the
    planning horizon is the depot due date, partitioned into ``n_slots``
    equal slots. Travel time is the Euclidean distance between coordinates.

    ``overrides`` are forwarded to :class:`Instance` (discounts, base_fee,
    min_options, vehicle_cost, ...).
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    elif hasattr(text, "read"):
        text = text.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    lines = [ln.rstrip() for ln in io.StringIO(text)]

    name = "solomon"
    for ln in lines:
        if ln.strip():
            name = ln.strip().split()[0]
            break

    fleet_size = None
    capacity = None
    rows = []
    section = None
    for ln in lines:
        stripped = ln.strip()
        upper = stripped.upper()
        if not stripped:
            continue
        if upper.startswith("VEHICLE"):
            section = "vehicle"
            continue
        if "CUST NO" in upper or upper.startswith("CUSTOMER"):
            section = "customer"
            continue
        if section == "vehicle":
            if "NUMBER" in upper and "CAPACITY" in upper:
                continue
            parts = stripped.split()
            if len(parts) >= 2:
                try:
                    fleet_size, capacity = int(parts[0]), float(parts[1])
                except ValueError as exc:
                    raise ValueError(f"malformed VEHICLE line: {ln!r}") from exc
                section = None
            continue
        if section == "customer":
            parts = stripped.split()
            if len(parts) < 7:
                continue
            try:
                rows.append([float(p) for p in parts[:7]])
            except ValueError as exc:
                raise ValueError(f"non-numeric customer row: {ln!r}") from exc
    if fleet_size is None or capacity is None:
        raise ValueError("missing or malformed VEHICLE section")
    if not rows:
        raise ValueError("no customer rows found")
    if not 1 <= n_customers <= len(rows) - 1:
        raise ValueError(f"requested {n_customers} customers, file provides {len(rows) - 1}")

    depot = rows[0]
    horizon_end = depot[5]  # depot due date
    custs = rows[1 : 1 + n_customers]
    xy = np.array([[depot[1], depot[2]]] + [[r[1], r[2]] for r in custs])
    kwargs = dict(
        discounts=[0.0, 0.12],
        base_fee=40.0,
        min_options=2,
    )
    kwargs.update(overrides)
    return Instance(
        xy=xy,
        demand=np.array([r[3] for r in custs]),
        service_time=np.array([r[6] for r in custs]),
        horizon_end=horizon_end,
        fleet_size=fleet_size,
        capacity=capacity,
        slots=equal_slots(horizon_end, n_slots),
        name=f"{name}-c{n_customers}",
        **kwargs,
    )


def synthetic_instance(
    n_customers: int,
    seed: int,
    n_slots: int = 3,
    discounts: tuple = (0.0, 0.12),
    base_fee: float = 40.0,
    min_options: int = 2,
    horizon_end: float = 1236.0,
    side: float = 100.0,
    capacity: float = 200.0,
    fleet_size: int | None = None,
    vehicle_cost: float = 50.0,
    service_time: float = 10.0,
    **overrides,
) -> Instance:
    """Random desk-scale instance: uniform coordinates, depot in the center."""
    rng = np.random.default_rng(seed)
    xy = np.vstack([[side / 2.0, side / 2.0], rng.uniform(0.0, side, size=(n_customers, 2))])
    demand = rng.integers(5, 36, size=n_customers).astype(float)
    if fleet_size is None:
        fleet_size = max(2, min(25, n_customers))
    return Instance(
        xy=xy,
        demand=demand,
        service_time=np.full(n_customers, float(service_time)),
        horizon_end=horizon_end,
        fleet_size=fleet_size,
        capacity=capacity,
        slots=equal_slots(horizon_end, n_slots),
        discounts=list(discounts),
        base_fee=base_fee,
        min_options=min_options,
        vehicle_cost=vehicle_cost,
        name=f"synthetic-n{n_customers}-s{seed}",
        **overrides,
    )


@dataclass
class BehaviorSpec:
    """Normal taste distributions: per-segment time coefficients and a price
    coefficient. Zero standard deviations collapse the model to plain MNL."""

    time_mean: dict = field(default_factory=lambda: dict(DEFAULT_TIME_MEAN))
    time_std: dict = field(default_factory=lambda: dict(DEFAULT_TIME_STD))
    price_mean: float = DEFAULT_PRICE_MEAN
    price_std: float = DEFAULT_PRICE_STD

    def __post_init__(self):
        for seg in SEGMENTS:
            if seg not in self.time_mean or seg not in self.time_std:
                raise ValueError(f"missing segment {seg!r} in behavior spec")
            if self.time_std[seg] < 0:
                raise ValueError("time_std must be >= 0")
        if self.price_std < 0:
            raise ValueError("price_std must be >= 0")

    def as_mnl(self) -> "BehaviorSpec":
        """Same means, all stds zero."""
        return BehaviorSpec(
            time_mean=dict(self.time_mean),
            time_std={seg: 0.0 for seg in SEGMENTS},
            price_mean=self.price_mean,
            price_std=0.0,
        )

    def with_means(self, time_mean: float, price_mean: float) -> "BehaviorSpec":
        """Override every segment's time mean with one scalar (sweep helper)."""
        return BehaviorSpec(
            time_mean={seg: float(time_mean) for seg in SEGMENTS},
            time_std=dict(self.time_std),
            price_mean=float(price_mean),
            price_std=self.price_std,
        )

    def to_json(self) -> dict:
        return {
            "time_mean": dict(self.time_mean),
            "time_std": dict(self.time_std),
            "price_mean": self.price_mean,
            "price_std": self.price_std,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "BehaviorSpec":
        return cls(
            time_mean=dict(doc.get("time_mean", DEFAULT_TIME_MEAN)),
            time_std=dict(doc.get("time_std", DEFAULT_TIME_STD)),
            price_mean=doc.get("price_mean", DEFAULT_PRICE_MEAN),
            price_std=doc.get("price_std", DEFAULT_PRICE_STD),
        )


def _philox_key(seed: int, customer: int) -> int:
    # 128-bit key: low word = seed, high word = customer stream.
    return (int(seed) & _U64) | ((customer + 1) << 64)


def _words_per_cell(n_slots: int, n_options: int) -> int:
    # layout per (customer, scenario) cell: T time normals, 1 price normal,
    # |catalog| gumbel uniforms; padded to whole 256-bit counter blocks so a
    # cell can be reached with Philox.advance
    raw = n_slots + 1 + n_options
    return ((raw + 3) // 4) * 4


@dataclass(eq=False)
class ScenarioSet:
    """Monte Carlo draws of taste coefficients and Gumbel error terms.

    ``beta_time[s, n, r]`` is shared across the discount variants of slot
    ``s``; ``xi[i, n, r]`` has one draw per catalog option (opt-out
    included). Regeneration from the same ``(seed, R, instance shape)`` is
    bit-identical, and each (customer, scenario) cell depends only on
    ``(seed, customer, scenario)`` so generation order does not matter.
    """

    R: int
    beta_time: np.ndarray  # (|T|, n, R)
    beta_price: np.ndarray  # (n, R)
    xi: np.ndarray  # (|I|, n, R)
    seed: int

    def __post_init__(self):
        self._cache = {}

    @property
    def n_customers(self) -> int:
        return self.beta_price.shape[0]

    def subset(self, scenarios) -> "ScenarioSet":
        """A view on a subset of scenarios, e.g. a single-scenario slice."""
        idx = np.atleast_1d(np.asarray(scenarios, dtype=int))
        return ScenarioSet(
            R=len(idx),
            beta_time=self.beta_time[:, :, idx],
            beta_price=self.beta_price[:, idx],
            xi=self.xi[:, :, idx],
            seed=self.seed,
        )


def _transform_cell(u: np.ndarray, spec: BehaviorSpec, slots: list[TimeSlot], n_options: int):
    """Map one cell's uniforms to (time betas, price beta, xi draws)."""
    T = len(slots)
    u = np.maximum(u, _MIN_UNIFORM)
    z = ndtri(u[: T + 1])
    bt = np.array(
        [spec.time_mean[s.segment] + spec.time_std[s.segment] * z[i] for i, s in enumerate(slots)]
    )
    bp = spec.price_mean + spec.price_std * z[T]
    xi = -np.log(-np.log(u[T + 1 : T + 1 + n_options]))
    return bt, bp, xi


def sample_scenarios(spec: BehaviorSpec, instance: Instance, R: int, seed: int) -> ScenarioSet:
    """Draw ``R`` behavioral scenarios for every customer.

    Each (customer, scenario) cell consumes a fixed number of counter-based
    uniforms, so the draws are reproducible cell by cell (see
    :func:`sample_cell`).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    n = instance.n_customers
    T = instance.n_slots
    I = instance.n_options
    c = _words_per_cell(T, I)
    beta_time = np.empty((T, n, R))
    beta_price = np.empty((n, R))
    xi = np.empty((I, n, R))
    mu = np.array([spec.time_mean[s.segment] for s in instance.slots])
    sd = np.array([spec.time_std[s.segment] for s in instance.slots])
    for cust in range(n):
        gen = np.random.Generator(np.random.Philox(key=_philox_key(seed, cust)))
        u = np.maximum(gen.random((R, c)), _MIN_UNIFORM)
        z = ndtri(u[:, : T + 1])  # (R, T+1)
        beta_time[:, cust, :] = (mu[None, :] + sd[None, :] * z[:, :T]).T
        beta_price[cust, :] = spec.price_mean + spec.price_std * z[:, T]
        xi[:, cust, :] = (-np.log(-np.log(u[:, T + 1 : T + 1 + I]))).T
    return ScenarioSet(R=R, beta_time=beta_time, beta_price=beta_price, xi=xi, seed=seed)


def sample_cell(spec: BehaviorSpec, instance: Instance, seed: int, customer: int, scenario: int):
    """Draws for one (customer, scenario) cell, independent of all others.

    This is the parallel-generation primitive: it must (and does) agree
    bit-for-bit with the corresponding cell of :func:`sample_scenarios`.
    """
    c = _words_per_cell(instance.n_slots, instance.n_options)
    bg = np.random.Philox(key=_philox_key(seed, customer))
    bg.advance(scenario * c // 4)  # advance() moves whole 4-word blocks
    u = np.random.Generator(bg).random(c)
    return _transform_cell(u, spec, instance.slots, instance.n_options)


def degenerate_scenarios(spec: BehaviorSpec, instance: Instance) -> ScenarioSet:
    """Single noise-free scenario: betas at their means, all error terms zero."""
    n = instance.n_customers
    mu = np.array([spec.time_mean[s.segment] for s in instance.slots])
    return ScenarioSet(
        R=1,
        beta_time=np.repeat(mu[:, None, None], n, axis=1),
        beta_price=np.full((n, 1), spec.price_mean),
        xi=np.zeros((instance.n_options, n, 1)),
        seed=0,
    )


class Assortment:
    """Binary offer matrix ``gamma[n, i]`` over the option catalog."""

    def __init__(self, gamma: np.ndarray):
        self.gamma = np.asarray(gamma, dtype=np.int8)

    @classmethod
    def opt_out_only(cls, instance: Instance) -> "Assortment":
        gamma = np.zeros((instance.n_customers, instance.n_options), dtype=np.int8)
        gamma[:, OPT_OUT] = 1
        return cls(gamma)

    @classmethod
    def full_no_discount(cls, instance: Instance) -> "Assortment":
        """Every slot offered to everyone at the lowest discount rate."""
        h_idx = int(np.argmin(instance.discounts))
        gamma = np.zeros((instance.n_customers, instance.n_options), dtype=np.int8)
        gamma[:, OPT_OUT] = 1
        for slot in range(instance.n_slots):
            gamma[:, 1 + slot * len(instance.discounts) + h_idx] = 1
        return cls(gamma)

    def copy(self) -> "Assortment":
        return Assortment(self.gamma.copy())

    def validate(self, instance: Instance):
        """Raise ValueError unless the offer matrix is admissible."""
        n, I = self.gamma.shape
        if (n, I) != (instance.n_customers, instance.n_options):
            raise ValueError("assortment shape does not match instance")
        if not np.all((self.gamma == 0) | (self.gamma == 1)):
            raise ValueError("gamma must be binary")
        if not np.all(self.gamma[:, OPT_OUT] == 1):
            raise ValueError("opt-out must be offered to every customer")
        counts = self.gamma.sum(axis=1)
        if np.any(counts < instance.min_options):
            bad = int(np.argmin(counts))
            raise ValueError(
                f"customer {bad} offered {counts[bad]} option(s), floor is {instance.min_options}"
            )
        nH = len(instance.discounts)
        for slot in range(instance.n_slots):
            cols = self.gamma[:, 1 + slot * nH : 1 + (slot + 1) * nH]
            if np.any(cols.sum(axis=1) > 1):
                raise ValueError(f"slot {slot} offered at more than one price")

    def is_valid(self, instance: Instance) -> bool:
        try:
            self.validate(instance)
            return True
        except ValueError:
            return False

    def to_json(self) -> dict:
        return {"gamma": self.gamma.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Assortment":
        return cls(np.array(doc["gamma"], dtype=np.int8))

    def __eq__(self, other):
        return isinstance(other, Assortment) and np.array_equal(self.gamma, other.gamma)


def slot_for_time(instance: Instance, t: float) -> int:
    """Index of the earliest slot whose upper bound is >= ``t``."""
    uppers = [s.upper for s in instance.slots]
    idx = bisect_left(uppers, t)
    if idx >= len(uppers):
        raise ValueError(f"time {t} beyond the last slot")
    return idx


def slot_containing_latest(instance: Instance, t: float) -> int:
    """Index of the latest slot whose lower bound is <= ``t``."""
    lowers = [s.lower for s in instance.slots]
    idx = bisect_right(lowers, t) - 1
    if idx < 0:
        raise ValueError(f"time {t} before the first slot")
    return idx
