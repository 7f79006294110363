import functools


__all__ = ['SolverError', 'StepError', 'annotate_step']


class SolverError(RuntimeError):
    """A linear system is singular, lacks a pressure condition or was solved above tolerance."""


class StepError(RuntimeError):
    """A splitting step failed. ``step`` is the step number and ``index`` the time index."""

    def __init__(self, message, step=None, index=None):
        super().__init__(message)
        self.step = step
        self.index = index


def annotate_step(step, name=None, func=None):
    """Decorate a splitting step so any failure inside it is re-raised as a StepError naming the step.

    The wrapped function takes the simulation state as its first argument; its ``step`` attribute is
    reported as the time index.

    Args:
        step (int/function): Step number or a function to decorate as step 0.
        name (str)[None]: Step name for the message. Defaults to the function name.
        func (function) [None]: Function to wrap.

    Returns:
        wrap (function): Function that was decorated/wrapped or a function that will decorate a function.
    """
    if not isinstance(step, int):
        # Function was given decorate the function
        func = step
        step = 0

    if func is None:
        # Return a decorator
        def real_decorator(func):
            return annotate_step(step, name, func)
        return real_decorator

    label = name or func.__name__.strip('_').replace('_', ' ')

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except StepError:
            raise
        except Exception as err:
            index = getattr(args[0], 'step', None) if args else None
            msg = 'step {:d} ({:s}) failed at time index {}: {}'.format(step, label, index, err)
            raise StepError(msg, step=step, index=index) from err
    return wrapper
