"""Closed-form ridge readout and the squared-error cost."""

import warnings

import numpy as np

from .numkernel import NumericError, solve_spd

__all__ = ["build_design", "train_readout", "cost", "stationarity_residual"]


def build_design(traj):
    """Stack hidden states over the raw inputs: ``Hc = [H; X]``."""
    H, X = traj.H, traj.X
    if H.shape[1] != X.shape[1]:
        raise ValueError(f"H has {H.shape[1]} columns but X has {X.shape[1]}")
    Hc = np.vstack([H, X])
    if Hc.shape[1] < Hc.shape[0]:
        warnings.warn(
            f"design has {Hc.shape[1]} columns for {Hc.shape[0]} features; "
            "the readout is underdetermined without ridge",
            RuntimeWarning,
            stacklevel=2,
        )
    return Hc


def train_readout(design, T, mu):
    """Ridge solution ``U = (Hc Hc^T + mu I)^{-1} Hc T^T``.

    ``design`` is ``(features, N)`` and ``T`` is ``(outputs, N)``; the result
    is ``(features, outputs)``.
    """
    Hc = np.asarray(design, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if Hc.shape[1] != T.shape[1]:
        raise ValueError(f"design has {Hc.shape[1]} columns, targets have {T.shape[1]}")
    if not (np.all(np.isfinite(Hc)) and np.all(np.isfinite(T))):
        raise ValueError("readout inputs contain NaN or Inf")
    gram = Hc @ Hc.T
    gram = 0.5 * (gram + gram.T)
    if mu:
        gram[np.diag_indices_from(gram)] += mu
    try:
        return solve_spd(gram, Hc @ T.T)
    except NumericError as exc:
        if mu == 0:
            raise NumericError(f"{exc}; the unregularized readout is singular, use mu > 0") from exc
        raise


def cost(U, design, T):
    """Squared Frobenius residual ``||U^T Hc - T||_F^2``."""
    r = np.asarray(U).T @ np.asarray(design) - np.asarray(T)
    return float(np.sum(r * r))


def stationarity_residual(U, design, T, mu):
    """Frobenius norm of the ridge objective's gradient at ``U``."""
    g = 2.0 * design @ (U.T @ design - T).T + 2.0 * mu * U
    return float(np.linalg.norm(g))
