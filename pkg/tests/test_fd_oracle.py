import numpy as np
import pytest

from habitfbp._numerics import SolverError
from habitfbp.dual import MarketParams
from habitfbp.fd_oracle import FdGridConfig, compare, make_grid, solve_fd
from habitfbp.primal import merton
from habitfbp.utility import concavify, make_power

from conftest import BASE


def _fd(primal, per_decade):
    d = primal.dual
    return solve_fd(d.market, d.spec, d.envelope, FdGridConfig(x_hi=1000.0 * primal.x0, per_decade=per_decade))


def test_grid_shape():
    x = make_grid(FdGridConfig(x_hi=100.0, per_decade=50))
    assert x[0] == 0.0 and x[-1] == pytest.approx(100.0)
    assert np.all(np.diff(x) > 0)


def test_boundary_value_imposed(power):
    fd = _fd(power, 100)
    assert fd.v[0] == power.dual.envelope.u_at_zero / BASE.delta


def test_cross_oracle_all_cases(any_case):
    fd = _fd(any_case, 400)
    assert compare(fd, any_case.value, any_case.x0 / 2, 10 * any_case.x0) < 1e-2
    assert fd.convex_nodes == 0
    assert fd.cap_binding == 0


def test_discrete_value_monotone_concave(power):
    fd = _fd(power, 200)
    inner = fd.x < 500 * power.x0
    v = fd.v[inner]
    assert np.all(np.diff(v) > 0)
    # interior second differences are nonpositive away from the origin patch
    x = fd.x[inner]
    d2 = np.diff(np.diff(v) / np.diff(x))
    assert np.all(d2[5:] <= 1e-12)


def test_refinement_reduces_gap(power):
    gaps = [compare(_fd(power, n), power.value, power.x0 / 2, 10 * power.x0) for n in (50, 100, 200, 400)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # observed order is close to two
    rates = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert rates.mean() > 1.0


def test_merton_limit_value():
    a = 1e-4
    m = MarketParams(rho=a)
    spec = make_power(a, 0.2, 0.5, 2.0)
    fd = solve_fd(m, spec, concavify(spec), FdGridConfig(x_hi=1000.0, per_decade=200))
    b = merton(m, 0.2)
    xs = np.linspace(0.5, 5.0, 200)
    ref = b.gammaM ** (0.2 - 1.0) * xs**0.2
    assert np.max(np.abs(fd.value_at(xs) / ref - 1)) < 5e-3


def test_non_convergence_diagnostic(power):
    d = power.dual
    with pytest.raises(SolverError):
        solve_fd(d.market, d.spec, d.envelope, FdGridConfig(x_hi=1000 * power.x0, per_decade=100, max_iter=2))
