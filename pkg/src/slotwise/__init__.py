"""Tactical time-slot assortment and discount optimization toolkit."""

from .model import (
    Assortment,
    BehaviorSpec,
    DeliveryOption,
    Instance,
    ScenarioSet,
    TimeSlot,
    build_option_catalog,
    degenerate_scenarios,
    equal_slots,
    load_solomon,
    sample_scenarios,
    synthetic_instance,
)
from .choice import ChoiceMatrix, choose, coverage_rate, empirical_probabilities, mnl_probabilities
from .routing import (
    InfeasibleRoutingError,
    RoutingPlan,
    ServiceRequest,
    cfrs_solve,
    cw_solve,
    exact_cvrptw,
    icw_solve,
    schedule_route,
    validate_plan,
)
from .evaluation import Solution, evaluate, make_router
from .constructive import rfts
from .alns import SalnsParams, salns
from .exact import deterministic_solve, evpi, exact_solve, stochastic_diagnostics, vss

__version__ = "0.1.0"
