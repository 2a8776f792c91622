"""Analytic gradients of the readout-eliminated cost.

With the readout solved in closed form, the training cost on the last block
of each truncation window depends on the input and recurrent weights only
through the hidden states ``H_n``::

    E*(H_n) = ||T_n||^2 - tr((H_n H_n^T)^{-1} H_n T_n^T T_n H_n^T)

``compute_A`` gives the derivative of the trace term with respect to
``H_n^T``; the deltas carry it back through ``n`` sigmoid layers that share
``W`` and ``W_rec``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .numkernel import NumericError, SparseMatrix, solve_spd

__all__ = [
    "ChunkSet",
    "GradReport",
    "compute_A",
    "backprop_deltas",
    "grad_input_case1",
    "grad_input_case2",
    "grad_recurrent",
    "clip_gradient",
]


@dataclass
class ChunkSet:
    """Strided blocks of a trajectory for ``depth``-step truncated gradients.

    Block ``i`` (1-based) holds frames ``i, i + n, i + 2n, ...``; column ``k``
    of every block belongs to the same window, whose preceding state is
    ``H0[:, k]``.
    """

    depth: int
    X_blocks: list
    H_blocks: list
    T_blocks: list
    H0: np.ndarray

    def __post_init__(self):
        n = self.depth
        if n < 1:
            raise ValueError("depth must be >= 1")
        if not (len(self.X_blocks) == len(self.H_blocks) == len(self.T_blocks) == n):
            raise ValueError(f"expected {n} blocks of X, H and T")
        if self.H0 is None:
            raise ValueError("chunk set has no boundary states H0")
        k = self.H0.shape[1]
        for blocks in (self.X_blocks, self.H_blocks, self.T_blocks):
            if any(b.shape[1] != k for b in blocks):
                raise ValueError("all blocks must share the column count")

    @property
    def n_windows(self):
        return self.H0.shape[1]

    def consistency_error(self, params):
        """Largest deviation of the stored blocks from re-running the recursion."""
        w_rec = params.W_rec.to_dense()
        prev = self.H0
        worst = 0.0
        for X, H in zip(self.X_blocks, self.H_blocks):
            z = params.W.T @ X + w_rec @ prev
            worst = max(worst, float(np.max(np.abs(expit(z) - H))))
            prev = H
        return worst


@dataclass
class GradReport:
    """A (possibly clipped) gradient and the norm it had before clipping.

    For the recurrent matrix ``grad`` is the vector of values aligned with
    the sparsity pattern.
    """

    grad: np.ndarray
    raw_norm: float
    clipped: bool


def clip_gradient(g, threshold):
    """Rescale ``g`` to Frobenius norm ``threshold`` if it exceeds it."""
    if threshold <= 0:
        raise ValueError("clip threshold must be > 0")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= threshold:
        return GradReport(g, norm, False)
    return GradReport(g * (threshold / norm), norm, True)


def compute_A(Hn, Tn, mu=0.0):
    """Derivative of ``tr((H H^T)^{-1} H T^T T H^T)`` with respect to ``H^T``.

    Returns the ``(K, h)`` matrix
    ``2 T^T T H^T F - 2 H^T F H T^T T H^T F`` with ``F = (H H^T + mu I)^{-1}``,
    evaluated without forming any ``K x K`` product. ``mu`` only stabilizes
    the inverse; the formula is exact for ``mu = 0``.
    """
    H = np.asarray(Hn, dtype=np.float64)
    T = np.asarray(Tn, dtype=np.float64)
    if H.shape[1] != T.shape[1]:
        raise ValueError(f"H has {H.shape[1]} columns, T has {T.shape[1]}")
    gram = H @ H.T
    gram = 0.5 * (gram + gram.T)
    if mu:
        gram[np.diag_indices_from(gram)] += mu
    try:
        P = solve_spd(gram, H).T  # H^T F, shape (K, h)
    except NumericError as exc:
        raise NumericError(f"cannot form A: {exc}") from exc
    TP = T @ P
    return 2.0 * (T.T @ TP) - 2.0 * (P @ ((H @ T.T) @ TP))


def _deltas(chunks, w_rec_dense, top):
    """Backpropagate ``top`` (dE/dH_n, shape h x K) to every pre-activation."""
    n = chunks.depth
    deltas = [None] * n
    H = chunks.H_blocks[n - 1]
    delta = H * (1.0 - H) * top
    deltas[n - 1] = delta
    for i in range(n - 2, -1, -1):
        H = chunks.H_blocks[i]
        delta = H * (1.0 - H) * (w_rec_dense.T @ delta)
        deltas[i] = delta
    return deltas


def backprop_deltas(chunks, W_rec, A):
    """Per-block error signals ``C_1 ... C_n`` (each ``K x h``) seeded by ``A``.

    ``C_n = D_n^T * A`` and ``C_i = D_i^T * (C_{i+1} W_rec)`` where
    ``D_i = H_i * (1 - H_i)``. The list is returned in block order.
    """
    h = chunks.H_blocks[0].shape[0]
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (chunks.n_windows, h):
        raise ValueError(f"A must be {(chunks.n_windows, h)}, got {A.shape}")
    w = W_rec.to_dense() if isinstance(W_rec, SparseMatrix) else np.asarray(W_rec)
    return [d.T for d in _deltas(chunks, w, A.T)]


def _case2_seed(chunks, mu, shortcut):
    Hn, Tn = chunks.H_blocks[-1], chunks.T_blocks[-1]
    h = Hn.shape[0]
    if shortcut:
        Hn = np.vstack([Hn, chunks.X_blocks[-1]])
    return compute_A(Hn, Tn, mu)[:, :h]


def grad_input_case1(chunks, params):
    """Input-weight gradient of ``||U^T [H_n; X_n] - T_n||^2`` with ``U`` frozen."""
    h = params.hidden_dim
    Hn, Xn, Tn = chunks.H_blocks[-1], chunks.X_blocks[-1], chunks.T_blocks[-1]
    if Hn.shape[0] != h or Xn.shape[0] != params.input_dim:
        raise ValueError("chunk blocks do not match the model dimensions")
    resid = params.U.T @ np.vstack([Hn, Xn]) - Tn
    S = 2.0 * (params.U[:h] @ resid).T  # K x h
    C = backprop_deltas(chunks, params.W_rec, S)
    return sum(X @ c for X, c in zip(chunks.X_blocks, C))


def grad_input_case2(chunks, params, mu=0.0, clip_threshold=None, shortcut=False):
    """Input-weight gradient of the readout-eliminated cost.

    ``shortcut=True`` differentiates the cost whose readout also sees the
    raw input (``[H_n; X_n]``), which is what training uses.
    """
    if chunks.H_blocks[0].shape[0] != params.hidden_dim:
        raise ValueError("chunk blocks do not match the model dimensions")
    A = _case2_seed(chunks, mu, shortcut)
    C = backprop_deltas(chunks, params.W_rec, A)
    g = -sum(X @ c for X, c in zip(chunks.X_blocks, C))
    if clip_threshold is None:
        return GradReport(g, float(np.linalg.norm(g)), False)
    return clip_gradient(g, clip_threshold)


def grad_recurrent(chunks, params, mu=0.0, clip_threshold=None, shortcut=False):
    """Recurrent-weight gradient, restricted to the sparsity pattern.

    ``grad`` in the report is aligned with ``params.W_rec.pattern``.
    """
    if chunks.H0 is None:
        raise ValueError("recurrent gradient needs the boundary states H0")
    A = _case2_seed(chunks, mu, shortcut)
    C = backprop_deltas(chunks, params.W_rec, A)
    prev = [chunks.H0] + list(chunks.H_blocks[:-1])
    dense = -sum(c.T @ Hp.T for c, Hp in zip(C, prev))
    g = params.W_rec.pattern.gather(dense)
    if clip_threshold is None:
        return GradReport(g, float(np.linalg.norm(g)), False)
    return clip_gradient(g, clip_threshold)
