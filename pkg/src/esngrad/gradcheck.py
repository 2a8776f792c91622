"""Finite-difference oracle for the analytic gradients.

The oracle never touches the delta recursion: it re-runs the sigmoid
recursion for ``n`` steps from the fixed boundary states, solves the
unregularized readout, and differences the resulting cost.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .gradients import ChunkSet, compute_A, grad_input_case2, grad_recurrent
from .numkernel import NumericError, SparseMatrix, SparsePattern
from .readout import cost, train_readout
from .reservoir import ModelParams

__all__ = [
    "GradInstance",
    "FdReport",
    "make_instance",
    "unroll",
    "reduced_cost",
    "fd_check_input",
    "fd_check_recurrent",
    "literal_recurrent_gradient",
    "run_grid",
]

FD_FLOOR = 1e-10


@dataclass
class GradInstance:
    """Fixed inputs, boundary states and targets for one gradient check."""

    params: ModelParams
    X_blocks: list
    H0: np.ndarray
    T: np.ndarray
    shortcut: bool = False
    label: str = ""

    @property
    def depth(self):
        return len(self.X_blocks)

    def chunks(self):
        H_blocks = unroll(self.params.W, self.params.W_rec, self.X_blocks, self.H0)
        T_blocks = [np.zeros_like(self.T)] * (self.depth - 1) + [self.T]
        return ChunkSet(self.depth, list(self.X_blocks), H_blocks, T_blocks, self.H0)


@dataclass
class FdReport:
    """Entrywise comparison of an analytic gradient with central differences."""

    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def max_rel_error(self):
        mask = np.abs(self.numeric) > FD_FLOOR
        return float(self.rel_error[mask].max()) if mask.any() else 0.0

    @property
    def passed(self):
        mask = np.abs(self.numeric) <= FD_FLOOR
        # entries excluded from the relative test must still agree in absolute terms
        small_ok = bool(np.all(np.abs(self.analytic[mask]) <= 10 * FD_FLOOR)) if mask.any() else True
        return self.max_rel_error < self.tol and small_ok

    def worst_entry(self):
        masked = np.where(np.abs(self.numeric) > FD_FLOOR, self.rel_error, -1.0)
        k = int(np.argmax(masked))
        return k, float(self.analytic.flat[k]), float(self.numeric.flat[k]), float(self.rel_error.flat[k])

    def to_tsv(self):
        lines = ["entry\tanalytic\tnumeric\trel_error"]
        for k in range(self.analytic.size):
            lines.append(
                f"{k}\t{self.analytic.flat[k]:.17g}\t{self.numeric.flat[k]:.17g}\t{self.rel_error.flat[k]:.3e}"
            )
        return "\n".join(lines) + "\n"


def unroll(W, W_rec, X_blocks, H0):
    """Hidden-state blocks from running the recursion ``len(X_blocks)`` steps."""
    w_rec = W_rec.to_dense() if isinstance(W_rec, SparseMatrix) else np.asarray(W_rec)
    out = []
    prev = H0
    for X in X_blocks:
        prev = expit(W.T @ X + w_rec @ prev)
        out.append(prev)
    return out


def reduced_cost(W, W_rec, X_blocks, H0, T, shortcut=False, check_tol=1e-10):
    """Cost with the readout eliminated, as a function of the weights alone.

    Computed twice: as the residual of the fitted unregularized readout and
    as ``||T||^2 - tr(F H T^T T H^T)``. A disagreement beyond ``check_tol``
    (relative to ``||T||^2``) raises :class:`NumericError`, which usually
    means the instance is too ill-conditioned to be useful.
    """
    Hn = unroll(W, W_rec, X_blocks, H0)[-1]
    if shortcut:
        Hn = np.vstack([Hn, X_blocks[-1]])
    T = np.asarray(T, dtype=np.float64)
    t2 = float(np.sum(T * T))
    if t2 == 0.0:
        return 0.0
    U = train_readout(Hn, T, 0.0)
    via_residual = cost(U, Hn, T)
    HT = Hn @ T.T
    via_trace = t2 - float(np.sum(HT * U))  # U = F H T^T
    if abs(via_residual - via_trace) > check_tol * max(1.0, t2):
        raise NumericError(
            f"reduced cost routes disagree ({via_residual!r} vs {via_trace!r}); "
            "instance is ill-conditioned"
        )
    return via_residual


def _relative_errors(analytic, numeric):
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(denom > 0, np.abs(analytic - numeric) / denom, 0.0)
    return rel


def make_instance(d=3, h=6, K=10, n=2, seed=0, o=3, density=0.4, shortcut=False,
                  input_scale=1.0, rec_scale=1.5, zero_targets=False):
    """Random well-conditioned tiny instance for gradient checks."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(-input_scale, input_scale, size=(d, h))
    mask = rng.random((h, h)) < density
    mask[np.arange(h), rng.integers(0, h, size=h)] = True  # every row gets a nonzero
    pattern = SparsePattern.from_mask(mask)
    values = rng.uniform(-rec_scale, rec_scale, size=pattern.nnz)
    W_rec = SparseMatrix(pattern, values)
    U = np.zeros((h + d, o))
    params = ModelParams(W=W, W_rec=W_rec, U=U)
    X_blocks = [rng.standard_normal((d, K)) for _ in range(n)]
    H0 = rng.uniform(0.05, 0.95, size=(h, K))
    T = np.zeros((o, K)) if zero_targets else rng.standard_normal((o, K))
    label = f"d={d} h={h} K={K} n={n} seed={seed}"
    return GradInstance(params, X_blocks, H0, T, shortcut=shortcut, label=label)


def fd_check_input(instance, eps=1e-5, tol=1e-4):
    """Compare the analytic input-weight gradient with central differences."""
    p = instance.params
    analytic = grad_input_case2(instance.chunks(), p, mu=0.0, shortcut=instance.shortcut).grad
    numeric = np.zeros_like(p.W)
    for idx in np.ndindex(*p.W.shape):
        Wp = p.W.copy()
        Wm = p.W.copy()
        Wp[idx] += eps
        Wm[idx] -= eps
        ep = reduced_cost(Wp, p.W_rec, instance.X_blocks, instance.H0, instance.T, instance.shortcut)
        em = reduced_cost(Wm, p.W_rec, instance.X_blocks, instance.H0, instance.T, instance.shortcut)
        numeric[idx] = (ep - em) / (2 * eps)
    return FdReport(analytic, numeric, _relative_errors(analytic, numeric), tol,
                    label=f"W {instance.label}")


def literal_recurrent_gradient(chunks, params, mu=0.0):
    """Recurrent gradient evaluated with the matrix-power form taken literally.

    ``-sum_i W_rec^(n-i) H_(i-1) C_i`` with ``C_i = D_i^T * C_(i+1)`` (no
    recurrent factor inside the deltas), transposed into ``W_rec``'s layout
    and masked. Kept only to document how far it is from the true gradient.
    """
    n = chunks.depth
    A = compute_A(chunks.H_blocks[-1], chunks.T_blocks[-1], mu)
    C = [None] * n
    H = chunks.H_blocks[-1]
    C[n - 1] = (H * (1 - H)).T * A
    for i in range(n - 2, -1, -1):
        H = chunks.H_blocks[i]
        C[i] = (H * (1 - H)).T * C[i + 1]
    w = params.W_rec.to_dense()
    prev = [chunks.H0] + list(chunks.H_blocks[:-1])
    total = np.zeros_like(w)
    for i in range(n):
        total += np.linalg.matrix_power(w, n - 1 - i) @ prev[i] @ C[i]
    return params.W_rec.pattern.gather(-total.T)


def fd_check_recurrent(instance, eps=1e-5, tol=1e-4):
    """As :func:`fd_check_input`, perturbing only the recurrent nonzeros."""
    p = instance.params
    chunks = instance.chunks()
    analytic = grad_recurrent(chunks, p, mu=0.0, shortcut=instance.shortcut).grad
    numeric = np.zeros_like(analytic)
    for k in range(analytic.size):
        vp = p.W_rec.values.copy()
        vm = p.W_rec.values.copy()
        vp[k] += eps
        vm[k] -= eps
        ep = reduced_cost(p.W, p.W_rec.with_values(vp), instance.X_blocks, instance.H0,
                          instance.T, instance.shortcut)
        em = reduced_cost(p.W, p.W_rec.with_values(vm), instance.X_blocks, instance.H0,
                          instance.T, instance.shortcut)
        numeric[k] = (ep - em) / (2 * eps)
    report = FdReport(analytic, numeric, _relative_errors(analytic, numeric), tol,
                      label=f"W_rec {instance.label}")
    if not instance.shortcut:
        literal = literal_recurrent_gradient(chunks, p)
        mask = np.abs(numeric) > FD_FLOOR
        lit_err = _relative_errors(literal, numeric)
        report.extra["literal_max_rel_error"] = float(lit_err[mask].max()) if mask.any() else 0.0
    return report


def run_grid(depths=(1, 2, 3), seeds=range(5), hidden=(6, 8), d=3, K=10, eps=1e-5, tol=1e-4):
    """Input and recurrent checks over a grid of tiny instances."""
    reports = []
    for n in depths:
        for h in hidden:
            for s in seeds:
                inst = make_instance(d=d, h=h, K=K, n=n, seed=1000 * n + 10 * h + s)
                reports.append(fd_check_input(inst, eps, tol))
                reports.append(fd_check_recurrent(inst, eps, tol))
    return reports
