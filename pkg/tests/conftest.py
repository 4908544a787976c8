"""Shared solved cases. Each solve takes about a second, so they are cached per session."""

import pytest

from habitfbp.dual import MarketParams, shoot_y0
from habitfbp.primal import PrimalSolution
from habitfbp.utility import concavify, make_exponential, make_power, make_sahara

# base-case market and utility, and the two non-power test utilities
BASE = MarketParams(r=0.02, mu=0.1, sigma=0.2, rho=1.0, delta=0.3)
POWER = dict(alpha=0.75, p=0.2, q=0.5, kappa=2.0)
EXPONENTIAL = dict(alpha=0.75, p=1.0, q=1.5, kappa=1.0)
SAHARA = dict(alpha=0.75, gamma1=0.5, beta1=0.1, gamma2=0.5, beta2=0.5)

SPECS = {
    "power": lambda: make_power(**POWER),
    "exponential": lambda: make_exponential(**EXPONENTIAL),
    "sahara": lambda: make_sahara(**SAHARA),
}

_cache = {}


def solved(name: str) -> PrimalSolution:
    if name not in _cache:
        spec = SPECS[name]()
        _cache[name] = PrimalSolution(shoot_y0(BASE, spec, concavify(spec)))
    return _cache[name]


@pytest.fixture(scope="session")
def power():
    return solved("power")


@pytest.fixture(scope="session", params=sorted(SPECS))
def any_case(request):
    return solved(request.param)
