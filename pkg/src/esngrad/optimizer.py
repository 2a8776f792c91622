"""Momentum gradient steps with a FISTA-style coefficient schedule."""

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = ["FistaState", "momentum_coefficient", "update_weights"]


@dataclass(frozen=True)
class FistaState:
    m_old: float = 1.0
    m_new: float = 1.0
    prev_param: np.ndarray = None


def momentum_coefficient(state):
    """Advance the scalar sequence once; return ``(beta, next_state)``.

    ``m_new = (1 + sqrt(1 + 4 m_old^2)) / 2`` and ``beta = m_old / m_new``.
    """
    m_old = state.m_new
    m_new = (1.0 + math.sqrt(1.0 + 4.0 * m_old * m_old)) / 2.0
    return m_old / m_new, replace(state, m_old=m_old, m_new=m_new)


def update_weights(param, grad, state, alpha, beta=None):
    """One step ``p - alpha * grad + beta * (p - p_prev)``.

    Works on dense matrices and on sparse value vectors alike. On the first
    call there is no previous parameter, so the momentum term vanishes.
    ``beta`` overrides the scheduled coefficient when given (the schedule is
    still advanced).
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameter {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient; clip before updating")
    scheduled, state = momentum_coefficient(state)
    if beta is None:
        beta = scheduled
    prev = param if state.prev_param is None else state.prev_param
    new = param - alpha * grad + beta * (param - prev)
    return new, replace(state, prev_param=param.copy())
