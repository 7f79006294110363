"""
    stratum.layer_models

Closed-form layer thickness models and a brute-force 1D oracle.

The layer is the region next to the fracture, normal to it, where the solute stays above a cutoff. With a
constant outward Darcy velocity Q the solute obeys phi du/dt + Q du/ds = -phi r along the normal coordinate s,
with u = u_gamma at the fracture wall.

* Linear kinetics, cutoff delta: the front advances as Q t / phi until the decay behind it reaches delta at
  t_bar = ln(u_gamma / delta) / lambda, then it stops.
* Precipitation kinetics with g(u) = u^2, cutoff 1 + delta: the steady profile decays towards equilibrium and
  crosses the cutoff at Q / (2 lambda phi) ln(C (2 + delta) / delta) with C = (u_gamma - 1) / (u_gamma + 1).
"""
import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .chemistry import react_step


__all__ = ['LayerInputs', 'NonlinearThickness', 'ThicknessHistory', 'saturation_time', 'thickness_linear',
           'thickness_nonlinear_steady', 'profile_linear', 'profile_nonlinear_steady', 'oracle_1d']


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerInputs(object):
    """Inputs of the layer models. Fields may be scalars or per-segment arrays."""
    Q: float
    phi: float = 0.2
    lam: float = 100.0
    delta: float = 0.1
    u_gamma: float = 2.0
    t: float = 0.0


class NonlinearThickness(NamedTuple):
    thickness: object
    subsaturated: object


class ThicknessHistory(NamedTuple):
    times: np.ndarray
    thickness: np.ndarray
    cutoff: float
    dx: float

    @property
    def steady(self):
        return float(self.thickness[-1]) if len(self.thickness) else 0.0


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def _check(inputs):
    phi = np.asarray(inputs.phi, dtype=np.float64)
    if np.any(phi <= 0) or np.any(phi > 1):
        raise ValueError('layer porosity must lie in (0, 1], got {!r}'.format(inputs.phi))
    elif np.any(np.asarray(inputs.delta) <= 0):
        raise ValueError('cutoff delta must be positive, got {!r}'.format(inputs.delta))
    elif np.any(np.asarray(inputs.lam) < 0):
        raise ValueError('rate constant must be >= 0, got {!r}'.format(inputs.lam))


def saturation_time(inputs):
    """Return t_bar = ln(u_gamma / delta) / lambda, infinite without reaction and 0 when u_gamma <= delta."""
    _check(inputs)
    lam = np.asarray(inputs.lam, dtype=np.float64)
    u = np.asarray(inputs.u_gamma, dtype=np.float64)
    delta = np.asarray(inputs.delta, dtype=np.float64)
    decay = np.log(np.maximum(u, delta) / delta)
    with np.errstate(divide='ignore', invalid='ignore'):
        t_bar = np.where(lam > 0, decay / np.where(lam > 0, lam, 1.0), np.inf)
    return _scalar(t_bar)


def thickness_linear(inputs):
    """Return the layer thickness (Q / phi) min(t, t_bar) for linear kinetics, 0 without outflow or
    when u_gamma <= delta."""
    t_bar = np.asarray(saturation_time(inputs))
    Q = np.asarray(inputs.Q, dtype=np.float64)
    active = (Q > 0) & (np.asarray(inputs.u_gamma) > inputs.delta)
    growth = np.where(active, Q, 0.0) / np.asarray(inputs.phi, dtype=np.float64)
    return _scalar(np.where(active, growth * np.minimum(inputs.t, t_bar), 0.0))


def thickness_nonlinear_steady(inputs):
    """Return the steady thickness for precipitation kinetics with g(u) = u^2 and cutoff 1 + delta.

    Returns:
        NonlinearThickness(thickness, subsaturated): thickness is 0 where the cutoff already holds at the
            wall, and subsaturated flags u_gamma <= 1 (no layer).
    """
    _check(inputs)
    if np.any(np.asarray(inputs.lam) <= 0):
        raise ValueError('steady nonlinear thickness needs a positive rate constant')
    Q = np.asarray(inputs.Q, dtype=np.float64)
    u = np.asarray(inputs.u_gamma, dtype=np.float64)
    delta = np.asarray(inputs.delta, dtype=np.float64)

    subsaturated = u <= 1
    C = (u - 1) / (u + 1)
    argument = C * (2 + delta) / delta
    active = ~subsaturated & (argument > 1) & (Q > 0)
    thickness = np.where(active, Q / (2 * inputs.lam * inputs.phi) * np.log(np.maximum(argument, 1.0)), 0.0)
    if np.any(subsaturated):
        log.warning('nonlinear thickness evaluated with subsaturated fracture concentration (u_gamma <= 1): no layer')
    return NonlinearThickness(_scalar(thickness), subsaturated if subsaturated.ndim else bool(subsaturated))


def profile_linear(inputs, s):
    """Return u(s, t) = u_gamma exp(-lambda phi s / Q) behind the front s <= Q t / phi and 0 beyond it."""
    _check(inputs)
    Q = np.asarray(inputs.Q, dtype=np.float64)
    if np.any(Q <= 0):
        raise ValueError('linear profile needs outflow Q > 0, got {!r}'.format(inputs.Q))
    s = np.asarray(s, dtype=np.float64)
    front = Q * inputs.t / inputs.phi
    behind = inputs.u_gamma * np.exp(-inputs.lam * inputs.phi * s / Q)
    return _scalar(np.where(s <= front, behind, 0.0))


def profile_nonlinear_steady(inputs, s):
    """Return the steady precipitation profile (C + e) / (e - C) with e = exp(2 lambda phi s / Q)."""
    _check(inputs)
    Q = np.asarray(inputs.Q, dtype=np.float64)
    u = np.asarray(inputs.u_gamma, dtype=np.float64)
    if np.any(Q <= 0):
        raise ValueError('nonlinear profile needs outflow Q > 0, got {!r}'.format(inputs.Q))
    elif np.any(u <= 1):
        raise ValueError('nonlinear profile needs a supersaturated wall value, got {!r}'.format(inputs.u_gamma))

    C = (u - 1) / (u + 1)
    decay = C * np.exp(-2 * inputs.lam * inputs.phi * np.asarray(s, dtype=np.float64) / Q)
    denominator = 1 - decay
    if np.any(denominator <= 0):
        raise ValueError('nonlinear profile is undefined at negative distance')
    return _scalar((decay + 1) / denominator)


def _front(u, cutoff, dx):
    """Return the largest s with u > cutoff, interpolated between cell centres."""
    above = np.flatnonzero(u > cutoff)
    if len(above) == 0:
        return 0.0
    last = above[-1]
    if last == len(u) - 1:
        raise ValueError('layer front left the oracle domain; use a longer domain')
    fraction = (u[last] - cutoff) / (u[last] - u[last + 1])
    return (last + 0.5 + fraction) * dx


def oracle_1d(model, inputs, n_cells=2000, t_end=None, length=None):
    """Solve the 1D advection-reaction problem normal to the fracture and track the layer thickness.

    Advection is first-order upwind at unit Courant number (an exact shift), followed by the Heun reaction
    substep. The cutoff is delta for linear kinetics and 1 + delta otherwise.

    Args:
        model (ReactionModel): Kinetics.
        inputs (LayerInputs): Scalar Q, phi, lam (overrides model.lam), delta and u_gamma. ``t`` is the end time
            when t_end is None.
        n_cells (int)[2000]: Cells on the domain.
        t_end (float)[None]: Final time.
        length (float)[None]: Domain length. Defaults to three times the predicted thickness.

    Returns:
        ThicknessHistory: thickness after every step. Step times are multiples of dx phi / Q.
    """
    _check(inputs)
    if inputs.Q <= 0:
        raise ValueError('oracle needs outflow Q > 0, got {!r}'.format(inputs.Q))
    t_end = inputs.t if t_end is None else t_end
    if not t_end > 0:
        raise ValueError('oracle end time must be positive, got {!r}'.format(t_end))
    model = replace(model, lam=float(inputs.lam))

    if model.kind == 'linear':
        cutoff = float(inputs.delta)
        predicted = thickness_linear(replace(inputs, t=t_end))
    else:
        cutoff = 1.0 + float(inputs.delta)
        predicted = thickness_nonlinear_steady(inputs).thickness
    if length is None:
        length = 3 * predicted if predicted > 0 else 3 * inputs.Q * t_end / inputs.phi
    elif length < 3 * predicted:
        raise ValueError('oracle domain {!r} is shorter than three predicted thicknesses ({!r})'.format(
            length, 3 * predicted))

    dx = length / n_cells
    dt = dx * inputs.phi / inputs.Q
    n_steps = max(1, int(np.ceil(t_end / dt - 1e-9)))
    log.debug('oracle: %d cells, %d steps, dx=%g, cutoff=%g', n_cells, n_steps, dx, cutoff)

    u = np.zeros(n_cells)
    w = np.zeros(n_cells)
    times = dt * np.arange(1, n_steps + 1)
    thickness = np.empty(n_steps)
    for k in range(n_steps):
        u = np.concatenate(([inputs.u_gamma], u[:-1]))
        u, w, _ = react_step(model, u, w, dt)
        thickness[k] = _front(u, cutoff, dx)
    return ThicknessHistory(times, thickness, cutoff, dx)
