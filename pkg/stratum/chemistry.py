"""
    stratum.chemistry

Pointwise kinetics between the solute u and the precipitate w, and the Heun substep that advances
du/dt = -r(u, w), dw/dt = r(u, w) at fixed capacity.

Two laws are available:

* linear: r = lambda * u
* precipitation: r = lambda * (max(g(u) - 1, 0) + H(w) * min(g(u) - 1, 0)), with g the identity or the square
  and H a unit step (dissolution stops once the mineral is gone) or the ramp max(0, w).
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


__all__ = ['KINDS', 'RATE_FUNCTIONS', 'STEP_FUNCTIONS', 'ReactionModel', 'ReactionStep', 'rate', 'react_step']


log = logging.getLogger(__name__)


KINDS = ('linear', 'precipitation')

RATE_FUNCTIONS = {
    'identity': lambda u: u,
    'square': np.square,
    }

STEP_FUNCTIONS = {
    'step': lambda w: (w > 0).astype(np.float64),
    'ramp': lambda w: np.maximum(w, 0.0),
    }


@dataclass(frozen=True)
class ReactionModel(object):
    """Kinetic law with rate constant ``lam`` (1/time). The equilibrium value of g(u) is 1."""
    kind: str = 'linear'
    lam: float = 100.0
    rate_fn: str = 'identity'
    step_function: str = 'step'

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError('unknown reaction {!r}, expected one of {}'.format(self.kind, KINDS))
        elif not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError('rate constant must be finite and >= 0, got {!r}'.format(self.lam))
        elif self.rate_fn not in RATE_FUNCTIONS:
            raise ValueError('unknown rate function {!r}, expected one of {}'.format(
                self.rate_fn, tuple(RATE_FUNCTIONS)))
        elif self.step_function not in STEP_FUNCTIONS:
            raise ValueError('unknown step function {!r}, expected one of {}'.format(
                self.step_function, tuple(STEP_FUNCTIONS)))


class ReactionStep(NamedTuple):
    u: np.ndarray
    w: np.ndarray
    clamped: int


def _check_nonnegative(u, w):
    if np.any(u < 0) or np.any(w < 0):
        raise ValueError('negative concentration passed to the rate law (min u {:.3e}, min w {:.3e})'.format(
            float(np.min(u, initial=0)), float(np.min(w, initial=0))))


def _rate(model, u, w):
    if model.kind == 'linear':
        return model.lam * u

    excess = RATE_FUNCTIONS[model.rate_fn](u) - 1.0
    blocked = STEP_FUNCTIONS[model.step_function](w)
    return model.lam * (np.maximum(excess, 0.0) + blocked * np.minimum(excess, 0.0))


def rate(model, u, w):
    """Return the precipitation rate r(u, w). Positive values move solute into the precipitate.

    Raises:
        ValueError: If u or w is negative.
    """
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_nonnegative(u, w)
    return _rate(model, u, w)


def react_step(model, u, w, dt):
    """Advance (u, w) by one Heun step.

    The predictor is a full Euler step and the corrector averages the two slopes. The same increment is
    removed from u and added to w. Values pushed below zero are clamped and counted.

    Returns:
        ReactionStep(u, w, clamped)
    """
    if not dt > 0:
        raise ValueError('reaction time step must be positive, got {!r}'.format(dt))
    u = np.array(u, dtype=np.float64)
    w = np.array(w, dtype=np.float64)
    _check_nonnegative(u, w)

    slope = _rate(model, u, w)
    u_pred = u - dt * slope
    w_pred = w + dt * slope
    clamped = int(np.count_nonzero(u_pred < 0) + np.count_nonzero(w_pred < 0))
    u_pred = np.maximum(u_pred, 0.0)
    w_pred = np.maximum(w_pred, 0.0)

    increment = 0.5 * dt * (slope + _rate(model, u_pred, w_pred))
    u_new = u - increment
    w_new = w + increment

    negative = (u_new < 0) | (w_new < 0)
    clamped += int(np.count_nonzero(negative))
    if negative.any():
        u_new = np.maximum(u_new, 0.0)
        w_new = np.maximum(w_new, 0.0)
    if clamped:
        log.warning('reaction substep clamped %d negative values (lambda*dt = %g)', clamped, model.lam * dt)
    return ReactionStep(u_new, w_new, clamped)
