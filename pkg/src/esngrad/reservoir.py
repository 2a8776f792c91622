"""Echo state network construction and the forward pass."""

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import expit

from .numkernel import SparseMatrix, SparsePattern, spectral_radius

__all__ = [
    "EsnConfig",
    "ModelParams",
    "StateTrajectory",
    "init_network",
    "renormalize_recurrent",
    "forward_pass",
]


@dataclass
class EsnConfig:
    """Every hyperparameter of a network and its training run.

    ``lam`` is the target spectral radius of the recurrent matrix (must stay
    below 4 for a sigmoid reservoir to keep echo states), ``mu`` the ridge
    term of the readout and ``alpha`` the gradient step size. ``bptt_depth``
    is how many time steps of state dependency the gradients follow.
    ``grad_shortcut`` makes the weight gradients differentiate the cost whose
    readout also sees the raw input; by default they use the hidden-state-only
    readout the gradient formulas are derived for.
    """

    input_dim: int = 10
    hidden_dim: int = 100
    output_dim: int = 5
    lam: float = 3.9
    mu: float = 1e-8
    alpha: float = 0.07
    bptt_depth: int = 1
    washout: int = 50
    density: float = 0.02
    input_scale: float = 0.1
    clip_threshold: float = 10.0
    seed: int = 0
    grad_shortcut: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.lam < 4.0:
            raise ValueError(f"lam must lie in (0, 4) for a sigmoid reservoir, got {self.lam}")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.bptt_depth < 1:
            raise ValueError("bptt_depth must be >= 1")
        if self.washout < 0:
            raise ValueError("washout must be >= 0")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.density * self.hidden_dim < 1.0:
            raise ValueError("density * hidden_dim must be >= 1 (at least one nonzero per row on average)")
        if self.input_scale < 0:
            raise ValueError("input_scale must be >= 0")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be > 0")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(eq=False)
class ModelParams:
    """Weights of one network.

    ``W`` is ``(d, h)`` and enters as ``W.T @ x``; ``W_rec`` is the sparse
    ``(h, h)`` recurrent matrix; ``U`` is the ``(h + d, o)`` readout acting on
    the hidden state stacked over the raw input.
    """

    W: np.ndarray
    W_rec: SparseMatrix
    U: np.ndarray
    lam: float = 3.9
    mu: float = 1e-8

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        d, h = self.W.shape
        if self.W_rec.shape != (h, h):
            raise ValueError(f"W_rec shape {self.W_rec.shape} does not match hidden size {h}")
        if self.U.ndim != 2 or self.U.shape[0] != h + d:
            raise ValueError(f"U must have {h + d} rows, got shape {self.U.shape}")

    @property
    def input_dim(self):
        return self.W.shape[0]

    @property
    def hidden_dim(self):
        return self.W.shape[1]

    @property
    def output_dim(self):
        return self.U.shape[1]

    def replace(self, **changes):
        kw = dict(W=self.W, W_rec=self.W_rec, U=self.U, lam=self.lam, mu=self.mu)
        kw.update(changes)
        return ModelParams(**kw)

    def copy(self):
        return self.replace(W=self.W.copy(), U=self.U.copy())

    def equals(self, other):
        return (
            np.array_equal(self.W, other.W)
            and self.W_rec.pattern == other.W_rec.pattern
            and np.array_equal(self.W_rec.values, other.W_rec.values)
            and np.array_equal(self.U, other.U)
            and self.lam == other.lam
            and self.mu == other.mu
        )


@dataclass
class StateTrajectory:
    """Hidden states recorded after the washout.

    ``H0[:, k]`` is the state that preceded ``H[:, k]``, so any column can
    serve as the boundary state of a truncated-gradient window.
    """

    H: np.ndarray
    H0: np.ndarray
    X: np.ndarray
    T: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.H.shape[1]
        if self.H0.shape != self.H.shape or self.X.shape[1] != n:
            raise ValueError("trajectory blocks must share the column count")
        if self.T is not None and self.T.shape[1] != n:
            raise ValueError("targets must have one column per recorded state")

    @property
    def n_steps(self):
        return self.H.shape[1]

    @property
    def final_state(self):
        return self.H[:, -1].copy()


def renormalize_recurrent(w, lam):
    """Rescale ``w`` so that its spectral radius equals ``lam``."""
    radius = spectral_radius(w)
    if radius == 0.0:
        raise ValueError("recurrent matrix has zero spectral radius; cannot renormalize")
    return w.scaled(lam / radius)


def init_network(cfg):
    """Random input and sparse recurrent weights, zero readout."""
    rng = np.random.default_rng(cfg.seed)
    d, h, o = cfg.input_dim, cfg.hidden_dim, cfg.output_dim
    W = rng.uniform(-cfg.input_scale, cfg.input_scale, size=(d, h))
    mask = rng.random((h, h)) < cfg.density
    pattern = SparsePattern.from_mask(mask)
    if pattern.nnz == 0:
        raise ValueError("sampled recurrent matrix is empty; raise density or hidden_dim")
    values = rng.uniform(-1.0, 1.0, size=pattern.nnz)
    w_rec = SparseMatrix(pattern, values)
    try:
        w_rec = renormalize_recurrent(w_rec, cfg.lam)
    except ValueError:
        raise ValueError(
            "sampled recurrent matrix has zero spectral radius; the spectral "
            "radius target is unachievable at this density"
        ) from None
    U = np.zeros((h + d, o))
    return ModelParams(W=W, W_rec=w_rec, U=U, lam=cfg.lam, mu=cfg.mu)


def forward_pass(params, x_seq, h_init=None, washout=0, targets=None):
    """Run the reservoir over ``x_seq`` (``d`` x ``steps``).

    Iterates ``h <- sigmoid(W.T x + W_rec h)`` from ``h_init`` (zeros by
    default) and drops the first ``washout`` states.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    d, h = params.W.shape
    if x_seq.ndim != 2 or x_seq.shape[0] != d:
        raise ValueError(f"inputs must be {d} x steps, got shape {x_seq.shape}")
    steps = x_seq.shape[1]
    if washout >= steps:
        raise ValueError(f"washout {washout} leaves no states out of {steps} steps")
    state = np.zeros(h) if h_init is None else np.array(h_init, dtype=np.float64)
    if state.shape != (h,):
        raise ValueError(f"h_init must have length {h}")

    drive = params.W.T @ x_seq
    w_rec = params.W_rec.to_dense()
    states = np.empty((h, steps + 1))
    states[:, 0] = state
    for t in range(steps):
        z = drive[:, t] + w_rec @ states[:, t]
        states[:, t + 1] = expit(z)

    if targets is not None:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape[1] != steps:
            raise ValueError("targets must have one column per input step")
        targets = targets[:, washout:]
    return StateTrajectory(
        H=states[:, washout + 1:],
        H0=states[:, washout:steps],
        X=x_seq[:, washout:],
        T=targets,
    )
