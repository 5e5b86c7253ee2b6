import numpy as np
import pytest

from slotwise.model import (
    Assortment,
    BehaviorSpec,
    Instance,
    ScenarioSet,
    TimeSlot,
    equal_slots,
    synthetic_instance,
)

DATA = __file__.rsplit("/", 1)[0] + "/data"


@pytest.fixture
def fx101_path():
    return f"{DATA}/fx101.txt"


def desk_instance(n=4, seed=0, **kw):
    """Small instance whose customers are usually profitable to serve."""
    kw.setdefault("side", 30.0)
    kw.setdefault("vehicle_cost", 20.0)
    return synthetic_instance(n, seed=seed, **kw)


def manual_instance(n_customers, slot_means, price_mean=0.0, fee=40.0,
                    discounts=(0.0,), min_options=1, coords=None, **kw):
    """Instance + degenerate behavior spec with hand-picked systematic
    utilities: slot s has V = slot_means[s] + price_mean * price."""
    n_slots = len(slot_means)
    if coords is None:
        coords = np.tile([[10.0, 10.0]], (n_customers, 1))
    xy = np.vstack([[0.0, 0.0], coords])
    kw.setdefault("capacity", 100.0)
    kw.setdefault("fleet_size", max(2, n_customers))
    kw.setdefault("vehicle_cost", 10.0)
    inst = Instance(
        xy=xy,
        demand=np.full(n_customers, 1.0),
        service_time=np.zeros(n_customers),
        horizon_end=1200.0,
        slots=equal_slots(1200.0, n_slots),
        discounts=list(discounts),
        base_fee=fee,
        min_options=min_options,
        **kw,
    )
    seg_mean = {}
    for s, mean in enumerate(slot_means):
        seg_mean.setdefault(inst.slots[s].segment, mean)
    for seg in ("morning", "afternoon", "evening"):
        seg_mean.setdefault(seg, 0.0)
    spec = BehaviorSpec(time_mean=seg_mean, time_std={k: 0.0 for k in seg_mean},
                        price_mean=price_mean, price_std=0.0)
    return inst, spec


def manual_scenarios(instance, beta_time, beta_price, xi, seed=0):
    """ScenarioSet straight from arrays (shapes (T,n,R), (n,R), (I,n,R))."""
    beta_time = np.asarray(beta_time, dtype=float)
    beta_price = np.asarray(beta_price, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return ScenarioSet(R=beta_price.shape[1], beta_time=beta_time,
                       beta_price=beta_price, xi=xi, seed=seed)


def random_assortment(instance, rng):
    """A valid random offer matrix."""
    nH = len(instance.discounts)
    gamma = np.zeros((instance.n_customers, instance.n_options), dtype=np.int8)
    gamma[:, 0] = 1
    lo = max(1, instance.min_options - 1)
    for n in range(instance.n_customers):
        k = int(rng.integers(lo, instance.n_slots + 1))
        for s in rng.choice(instance.n_slots, size=k, replace=False):
            gamma[n, 1 + int(s) * nH + int(rng.integers(nH))] = 1
    return Assortment(gamma)


def random_requests(instance, rng, n_requests=None):
    """Random service requests with slot-aligned windows."""
    from slotwise.routing import ServiceRequest

    n = instance.n_customers if n_requests is None else n_requests
    custs = rng.choice(instance.n_customers, size=n, replace=False)
    out = []
    for c in sorted(int(x) for x in custs):
        slot = instance.slots[int(rng.integers(instance.n_slots))]
        out.append(ServiceRequest(customer=c, lower=slot.lower, upper=slot.upper,
                                  demand=instance.demand[c],
                                  service_time=instance.service_time[c]))
    return out
