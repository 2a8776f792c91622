"""Training loop: chunking, gradient steps, renormalization, readout refits."""

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .gradients import ChunkSet, grad_input_case2, grad_recurrent
from .numkernel import spectral_radius
from .optimizer import FistaState, update_weights
from .readout import build_design, cost, train_readout
from .reservoir import forward_pass, renormalize_recurrent

__all__ = [
    "LearnMode",
    "EpochRecord",
    "TrainReport",
    "TrainState",
    "TrainingError",
    "make_chunks",
    "predict_scores",
    "evaluate",
    "run_epoch",
    "fit",
]


class TrainingError(RuntimeError):
    """An epoch stage failed; the message names the stage."""


class LearnMode(enum.Enum):
    FIXED = "fixed"
    LEARN_W = "learn-w"
    LEARN_W_WREC = "learn-w-wrec"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for mode in cls:
            if mode.value == key:
                return mode
        raise ValueError(f"unknown mode {value!r}; choose from {[m.value for m in cls]}")

    @property
    def learns_input(self):
        return self is not LearnMode.FIXED

    @property
    def learns_recurrent(self):
        return self is LearnMode.LEARN_W_WREC


@dataclass
class EpochRecord:
    epoch: int
    cost: float
    train_error: float
    valid_error: float
    grad_w_norm: float
    grad_wrec_norm: float
    clipped_w: bool
    clipped_wrec: bool
    spectral_radius: float
    wall_time: float


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    best_epoch: int = 0

    COLUMNS = ("epoch", "cost", "train_error", "valid_error", "grad_w_norm",
               "grad_wrec_norm", "clipped_w", "clipped_wrec", "spectral_radius", "wall_time")

    @staticmethod
    def header():
        return "\t".join(TrainReport.COLUMNS)

    @staticmethod
    def format_row(row, timing=True):
        vals = []
        for name in TrainReport.COLUMNS:
            v = getattr(row, name)
            if name == "wall_time" and not timing:
                vals.append("-")
            elif isinstance(v, bool):
                vals.append(str(int(v)))
            elif isinstance(v, float):
                vals.append(f"{v:.10g}")
            else:
                vals.append(str(v))
        return "\t".join(vals)

    def to_tsv(self, timing=True):
        """Tab-delimited text, one epoch per line after a header.

        ``timing=False`` blanks the wall-clock column so that two identical
        runs produce identical bytes.
        """
        lines = [self.header()] + [self.format_row(r, timing) for r in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class TrainState:
    """Mutable bookkeeping carried between epochs."""

    fista_w: FistaState = field(default_factory=FistaState)
    fista_wrec: FistaState = field(default_factory=FistaState)
    trajectory: object = None


def make_chunks(traj, n):
    """Split a trajectory into ``n`` strided blocks (frames ``j, j+n, ...``).

    Trailing frames that do not fill a whole window are dropped.
    """
    N = traj.n_steps
    if n < 1:
        raise ValueError("depth must be >= 1")
    if N < n:
        raise ValueError(f"trajectory has {N} frames, fewer than the depth {n}")
    K = N // n
    cut = K * n
    X_blocks = [traj.X[:, j:cut:n] for j in range(n)]
    H_blocks = [traj.H[:, j:cut:n] for j in range(n)]
    if traj.T is None:
        raise ValueError("trajectory carries no targets")
    T_blocks = [traj.T[:, j:cut:n] for j in range(n)]
    return ChunkSet(n, X_blocks, H_blocks, T_blocks, traj.H0[:, 0:cut:n])


def predict_scores(params, frames, h_init=None):
    """Readout outputs ``U^T [h; x]`` for every frame (no washout)."""
    traj = forward_pass(params, frames, h_init=h_init)
    return params.U.T @ build_design(traj)


def evaluate(params, data):
    """Fraction of frames whose arg-max output differs from the label."""
    if len(data) == 0:
        return 0.0
    pred = np.argmax(predict_scores(params, data.frames), axis=0)
    return float(np.mean(pred != data.labels))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise TrainingError(f"{name} failed: {exc}") from exc


def _trajectory(params, data, cfg):
    return forward_pass(params, data.frames, washout=cfg.washout, targets=data.targets())


def run_epoch(params, data, cfg, mode, state=None, epoch=1, valid=None):
    """One pass of the training procedure.

    Order: forward pass, chunking, input-weight step, recurrent-weight step
    with renormalization, fresh forward pass, readout refit, evaluation.
    Both weight gradients come from the same pre-update forward pass.
    Returns ``(params, record, state)``.
    """
    mode = LearnMode.parse(mode)
    state = state or TrainState()
    t0 = time.perf_counter()

    traj = state.trajectory
    if traj is None:
        traj = _stage("forward pass", _trajectory, params, data, cfg)
    gw = gr = None
    new = params
    if mode.learns_input:
        chunks = _stage("chunking", make_chunks, traj, cfg.bptt_depth)
        gw = _stage("input gradient", grad_input_case2, chunks, params, mu=cfg.mu,
                    clip_threshold=cfg.clip_threshold, shortcut=cfg.grad_shortcut)
        if mode.learns_recurrent:
            gr = _stage("recurrent gradient", grad_recurrent, chunks, params, mu=cfg.mu,
                        clip_threshold=cfg.clip_threshold, shortcut=cfg.grad_shortcut)
        W, state.fista_w = _stage("input update", update_weights, params.W, gw.grad,
                                  state.fista_w, cfg.alpha)
        new = new.replace(W=W)
        if gr is not None:
            vals, state.fista_wrec = _stage("recurrent update", update_weights,
                                            params.W_rec.values, gr.grad, state.fista_wrec, cfg.alpha)
            w_rec = _stage("renormalization", renormalize_recurrent,
                           params.W_rec.with_values(vals), cfg.lam)
            new = new.replace(W_rec=w_rec)
        traj = _stage("forward pass", _trajectory, new, data, cfg)

    design = build_design(traj)
    U = _stage("readout", train_readout, design, traj.T, cfg.mu)
    new = new.replace(U=U)
    state.trajectory = traj

    pred = np.argmax(U.T @ design, axis=0)
    train_err = float(np.mean(pred != np.argmax(traj.T, axis=0)))
    valid_err = _stage("evaluation", evaluate, new, valid) if valid is not None else float("nan")
    record = EpochRecord(
        epoch=epoch,
        cost=cost(U, design, traj.T),
        train_error=train_err,
        valid_error=valid_err,
        grad_w_norm=gw.raw_norm if gw else 0.0,
        grad_wrec_norm=gr.raw_norm if gr else 0.0,
        clipped_w=bool(gw and gw.clipped),
        clipped_wrec=bool(gr and gr.clipped),
        spectral_radius=spectral_radius(new.W_rec),
        wall_time=time.perf_counter() - t0,
    )
    return new, record, state


def fit(params, data_train, data_valid, cfg, mode, epochs=20, on_epoch=None):
    """Run ``epochs`` epochs and keep the parameters with the best validation error.

    Ties go to the earliest epoch. Without validation data the last epoch
    wins. ``on_epoch`` is called with every :class:`EpochRecord`.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    report = TrainReport()
    state = TrainState()
    best, best_err = None, np.inf
    for epoch in range(1, epochs + 1):
        params, row, state = run_epoch(params, data_train, cfg, mode, state, epoch, data_valid)
        report.rows.append(row)
        if on_epoch is not None:
            on_epoch(row)
        score = row.valid_error if data_valid is not None else -epoch
        if score < best_err:
            best, best_err = params, score
            report.best_epoch = epoch
    return best, report

