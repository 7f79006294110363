import numpy as np
import pytest

from stratum.convergence import TWO_CELL, observed_orders, rk2_study, two_cell_reference, two_cell_split, \
    splitting_study, oracle_study, format_study
from stratum.layer_models import LayerInputs, thickness_linear
from stratum.splitting import update_fraction


def test_observed_orders():
    orders = observed_orders([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4])
    assert np.allclose(orders, 2.0)
    with pytest.raises(ValueError):
        observed_orders([0.1], [1e-2])
    with pytest.raises(ValueError):
        observed_orders([0.1, 0.05], [1e-2, 0.0])


def test_rk2_order():
    result = rk2_study()
    assert np.all(result.orders >= 1.9), 'Heun substep orders ' + str(result.orders)


def test_splitting_order():
    result = splitting_study()
    assert np.all(np.diff(result.errors) < 0), 'errors must decrease under refinement'
    assert result.orders[-1] >= 0.9, 'splitting orders ' + str(result.orders)


def test_two_cell_porosity_law():
    params = dict(TWO_CELL, source=lambda t: np.zeros(2))
    phi0, u0, eta = np.array(params['phi0']), np.array(params['u0']), params['eta']

    u_ref, w_ref, phi_ref = two_cell_reference(1.0, **params)
    assert np.allclose(phi_ref, update_fraction(phi0, eta, w_ref), rtol=1e-8), 'phi = phi0 / (1 + eta w)'
    assert np.sum(phi_ref * (u_ref + w_ref)) == pytest.approx(np.dot(phi0, u0), rel=1e-8)

    u, w, phi = two_cell_split(40, 1.0, **params)
    assert np.sum(phi * (u + w)) == pytest.approx(np.dot(phi0, u0), rel=1e-12), 'no source keeps the content'
    assert np.all(phi > 0) and np.all(phi <= phi0)
    assert np.allclose(phi, phi_ref, rtol=1e-2)


def test_two_cell_split_past_inverse_eta():
    params = dict(phi0=(0.5, 0.5), u0=(0.0, 0.0), lam=50.0, eta=1.0, exchange=0.0,
                  source=lambda t: np.array([0.3, 0.0]))
    u, w, phi = two_cell_split(200, 1.0, **params)
    assert np.all(np.isfinite(u)) and np.all(np.isfinite(w))
    assert np.all(phi > 0) and np.all(phi <= 0.5)
    assert w[0] > 1.0 / params['eta'], 'the precipitate passes 1 / eta without breaking down'
    assert np.sum(phi * (u + w)) == pytest.approx(0.3, rel=1e-12)

    u_ref, w_ref, phi_ref = two_cell_reference(1.0, **params)
    assert np.allclose(w, w_ref, rtol=5e-2)
    assert np.allclose(phi, phi_ref, rtol=5e-2)


def test_oracle_refinement():
    result = oracle_study()
    predicted = thickness_linear(LayerInputs(Q=1.0, phi=0.2, lam=100.0, delta=0.1, u_gamma=2.0, t=0.2))
    assert np.all(np.diff(result.sizes) < 0)
    assert result.errors[-1] < result.errors[0]
    assert result.errors[-1] <= 0.05 * predicted


def test_format_study():
    text = format_study(rk2_study(dts=(0.1, 0.05)))
    lines = text.splitlines()
    assert lines[0] == 'rk2 convergence'
    assert len(lines) == 4
    assert lines[2].split()[-1] == '-'


if __name__ == '__main__':
    test_rk2_order()
    test_splitting_order()
    print('All tests finished successfully!')
