import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnlce import analysis, nlce
from dnlce.lattice import LatticeSpec

T = np.linspace(0, 2, 201)


def _series(orders):
    return nlce.OrderSeries(T, orders)


def test_identical_orders_give_zero_delta_and_full_time():
    v = np.cos(T)
    table = analysis.delta_table(_series({1: v, 2: v.copy(), 3: v.copy()}))
    assert all(np.all(d == 0) for d in table.deltas.values())
    ct = analysis.convergence_time(table, 0.01)
    assert ct[3] == analysis.ConvergenceTime(2.0, True)


def test_single_order_rejected():
    with pytest.raises(ValueError):
        analysis.delta_table(_series({1: T}))


def test_delta_definition():
    table = analysis.delta_table(_series({4: T, 5: 2 * T, 6: 2 * T - T ** 2}))
    assert sorted(table.deltas) == [5, 6]
    assert np.allclose(table.deltas[5], T) and np.allclose(table.deltas[6], T ** 2)


def test_ed_interpolation_is_linear_in_size():
    vals = {4: np.full(3, 1.0), 6: np.full(3, 3.0), 9: np.full(3, 0.0), 12: np.full(3, 3.0)}
    table = analysis.delta_table(vals, times=np.array([0.0, 1.0, 2.0]))
    assert sorted(table.deltas) == list(range(5, 13))
    assert np.allclose(table.deltas[5], 1.0) and np.allclose(table.deltas[6], 1.0)
    assert np.allclose(table.deltas[7], 1.0) and np.allclose(table.deltas[9], 1.0)
    assert np.allclose(table.deltas[10], 1.0) and np.allclose(table.deltas[12], 1.0)
    assert table.interpolated == (5, 7, 8, 10, 11)


def test_convergence_time_threshold():
    d = np.where(T <= 0.6, 0.0, 1.0)
    table = analysis.DeltaTable(T, {8: d})
    assert analysis.convergence_time(table, 0.01, 8) == analysis.ConvergenceTime(0.6, True)
    table = analysis.DeltaTable(T, {8: np.ones_like(T)})
    assert analysis.convergence_time(table, 0.01, 8) == analysis.ConvergenceTime(0.0, False)
    with pytest.raises(ValueError):
        analysis.convergence_time(table, 0.0)


@given(st.floats(0.5, 12.0), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_power_fit_recovers_monomials(p, c):
    t = np.linspace(0.01, 0.05, 21)
    fit = analysis.leading_power(t, c * t ** p, (0.01, 0.05))
    assert fit.exponent == pytest.approx(p, abs=1e-6)
    assert fit.prefactor == pytest.approx(c, rel=1e-6)
    assert fit.n_samples == 21


def test_power_fit_errors():
    t = np.linspace(0, 0.05, 11)
    with pytest.raises(analysis.FitError):
        analysis.leading_power(t, t - 0.03, (0.01, 0.05))
    with pytest.raises(analysis.FitError):
        analysis.leading_power(t, np.zeros_like(t), (0.01, 0.05))
    with pytest.raises(analysis.FitError):
        analysis.leading_power(t, t, (0.06, 0.07))


@pytest.mark.parametrize("lattice", ["chain", "square", "cubic"])
@pytest.mark.parametrize("theta,phi", [(np.pi / 2, 0.0), (0.7, 0.3), (2.5, -1.0)])
def test_exact_h0_matches_star_oracle(lattice, theta, phi):
    for a in "xyz":
        exact = analysis.ising_h0_exact(lattice, theta, 0.8, T, a, phi)
        star = analysis.star_oracle(lattice, theta, 0.8, T, a, phi)
        assert np.abs(exact - star).max() < 1e-12


def test_exact_h0_closed_form_at_right_angle():
    for lat in ("square", "cubic"):
        z = LatticeSpec.from_name(lat).coordination
        assert np.allclose(analysis.ising_h0_exact(lat, np.pi / 2, 1.0, T), np.cos(2 * T) ** z, atol=1e-14)
    assert analysis.ising_h0_exact("cubic", 0.4, 1.0, [0.0])[0] == pytest.approx(np.sin(0.4))
