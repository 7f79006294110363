"""
    stratum.convergence

Convergence studies with observed orders.

* rk2: the Heun substep on du/dt = -u against exp(-t).
* splitting: the sequential scheme on two exchanging cells against a fine ODE solution.
* oracle: the 1D layer oracle against the closed-form linear thickness.
"""
import logging
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .chemistry import ReactionModel, react_step
from .layer_models import LayerInputs, thickness_linear, oracle_1d
from .splitting import update_fraction, rescale_concentrations, extrapolate, correct_fraction


__all__ = ['ConvergenceResult', 'observed_orders', 'rk2_study', 'two_cell_reference', 'two_cell_split',
           'splitting_study', 'oracle_study', 'SUITES', 'format_study']


log = logging.getLogger(__name__)


class ConvergenceResult(NamedTuple):
    name: str
    sizes: np.ndarray
    errors: np.ndarray

    @property
    def orders(self):
        return observed_orders(self.sizes, self.errors)


def observed_orders(sizes, errors):
    """Return log(e_i / e_i+1) / log(h_i / h_i+1) for successive refinements."""
    sizes = np.asarray(sizes, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if len(sizes) != len(errors) or len(sizes) < 2:
        raise ValueError('need at least two matching sizes and errors')
    elif np.any(errors <= 0):
        raise ValueError('errors must be positive to estimate an order')
    return np.log(errors[:-1] / errors[1:]) / np.log(sizes[:-1] / sizes[1:])


def rk2_study(dts=(0.1, 0.05, 0.025, 0.0125), lam=1.0, t_end=1.0):
    model = ReactionModel('linear', lam)
    errors = []
    for dt in dts:
        u, w = np.ones(1), np.zeros(1)
        for _ in range(int(round(t_end / dt))):
            u, w, _ = react_step(model, u, w, dt)
        errors.append(abs(u[0] - np.exp(-lam * t_end)))
    return ConvergenceResult('rk2', np.asarray(dts, dtype=np.float64), np.asarray(errors))


# ========== Two-cell splitting problem ==========
TWO_CELL = dict(phi0=(0.3, 0.5), u0=(1.0, 0.0), lam=1.0, eta=0.1, exchange=1.0)


def _source(t):
    return np.array([1.0 + np.sin(t), 0.0])


def two_cell_reference(t_end, phi0, u0, lam, eta, exchange, source=_source):
    """Solve d(phi u)/dt = k (u_j - u_i) + s_i - phi r and d(phi w)/dt = phi r with d(phi)/dt = -eta phi r.

    The porosity then follows phi = phi0 / (1 + eta w).
    """
    def rhs(t, y):
        u, w, phi = y[0:2], y[2:4], y[4:6]
        r = lam * u
        w_dot = r * (1 + eta * w)
        phi_dot = -eta * phi * r
        exchange_term = exchange * (u[::-1] - u)
        u_dot = (exchange_term + source(t) - phi * r - u * phi_dot) / phi
        return np.concatenate((u_dot, w_dot, phi_dot))

    y0 = np.concatenate((u0, np.zeros(2), phi0))
    solution = solve_ivp(rhs, (0.0, t_end), y0, method='DOP853', rtol=1e-12, atol=1e-14)
    if not solution.success:
        raise RuntimeError('reference solve failed: {}'.format(solution.message))
    return solution.y[0:2, -1], solution.y[2:4, -1], solution.y[4:6, -1]


def two_cell_split(n_steps, t_end, phi0, u0, lam, eta, exchange, source=_source):
    """Run the nine splitting steps on two exchanging cells and return u, w and phi at t_end.

    The cells are one subdomain with porosity as capacity. The exchange takes the place of the flow and
    transport steps; every other step is the one the simulator runs.
    """
    model = ReactionModel('linear', lam)
    dt = t_end / n_steps
    etas = {'cells': eta}
    phi = {'cells': np.array(phi0, dtype=np.float64)}
    u = {'cells': np.array(u0, dtype=np.float64)}
    w = w_prev = {'cells': np.zeros(2)}
    for n in range(n_steps):
        w_star, _ = extrapolate(w['cells'], w_prev['cells'])
        phi_star = {'cells': update_fraction(phi['cells'], eta, w_star - w['cells'])}

        A = np.array([[phi_star['cells'][0] + dt * exchange, -dt * exchange],
                      [-dt * exchange, phi_star['cells'][1] + dt * exchange]])
        u_half = np.linalg.solve(A, phi['cells'] * u['cells'] + dt * source((n + 1) * dt))
        w_half = rescale_concentrations(w, phi, phi_star)['cells']
        u_react, w_react, _ = react_step(model, u_half, w_half, dt)

        reacted = {'u': u_react, 'w': w_react}
        phi_new = correct_fraction(phi, etas, w, {'cells': w_react}, phi, phi_star)
        scaled = rescale_concentrations(reacted, dict.fromkeys(reacted, phi_star['cells']),
                                        dict.fromkeys(reacted, phi_new['cells']))
        w_prev, w, u, phi = w, {'cells': scaled['w']}, {'cells': scaled['u']}, phi_new
    return u['cells'], w['cells'], phi['cells']


def splitting_study(steps=(20, 40, 80, 160), t_end=1.0, **problem):
    params = dict(TWO_CELL, **problem)
    u_ref, w_ref, _ = two_cell_reference(t_end, **params)
    errors = []
    for n in steps:
        u, w, _ = two_cell_split(n, t_end, **params)
        errors.append(max(np.max(np.abs(u - u_ref)), np.max(np.abs(w - w_ref))))
        log.debug('splitting study: %d steps, error %.3e', n, errors[-1])
    return ConvergenceResult('splitting', t_end / np.asarray(steps, dtype=np.float64), np.asarray(errors))


def oracle_study(cells=(250, 500, 1000, 2000), inputs=None):
    inputs = inputs or LayerInputs(Q=1.0, phi=0.2, lam=100.0, delta=0.1, u_gamma=2.0, t=0.2)
    predicted = thickness_linear(inputs)
    model = ReactionModel('linear', inputs.lam)
    errors, sizes = [], []
    for n in cells:
        history = oracle_1d(model, inputs, n_cells=n)
        errors.append(abs(history.steady - predicted))
        sizes.append(history.dx)
    return ConvergenceResult('oracle', np.asarray(sizes), np.asarray(errors))


SUITES = {
    'rk2': rk2_study,
    'splitting': splitting_study,
    'oracle': oracle_study,
    }


def format_study(result):
    """Return a text table of sizes, errors and observed orders."""
    lines = ['{} convergence'.format(result.name), '{:>12s} {:>14s} {:>8s}'.format('h', 'error', 'order')]
    orders = result.orders
    for i, (h, err) in enumerate(zip(result.sizes, result.errors)):
        order = '{:8.3f}'.format(orders[i - 1]) if i > 0 else '{:>8s}'.format('-')
        lines.append('{:12.6g} {:14.6e} {}'.format(h, err, order))
    return '\n'.join(lines)
