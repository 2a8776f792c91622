"""Frame datasets, context windows, the synthetic task and model files."""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkernel import SparseMatrix, SparsePattern
from .reservoir import ModelParams

__all__ = [
    "FormatError",
    "FrameDataset",
    "load_frames",
    "save_frames",
    "window_context",
    "gen_synthetic",
    "synthetic_class_means",
    "split_dataset",
    "one_hot",
    "save_model",
    "load_model",
    "MODEL_MAGIC",
    "MODEL_VERSION",
]

MODEL_MAGIC = b"ESN1"
MODEL_VERSION = 1
# magic, version, d, h, o, nnz, lam, mu
_HEADER = struct.Struct("<4sIQQQQdd")


class FormatError(ValueError):
    """Malformed frame or model file."""


@dataclass
class FrameDataset:
    """Feature frames (``feature_dim x N``) with one integer label per frame.

    ``boundaries`` lists the frame indices where utterances start.
    """

    frames: np.ndarray
    labels: np.ndarray
    num_classes: int
    boundaries: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 2 or self.labels.shape != (self.frames.shape[1],):
            raise ValueError("frames must be feature_dim x N with N labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        self.boundaries = [int(b) for b in self.boundaries] or [0]
        b = self.boundaries
        if b[0] != 0 or any(x >= y for x, y in zip(b, b[1:])) or (self.labels.size and b[-1] >= self.labels.size):
            raise ValueError("boundaries must be strictly increasing, start at 0 and index existing frames")

    @property
    def feature_dim(self):
        return self.frames.shape[0]

    def __len__(self):
        return self.frames.shape[1]

    def targets(self):
        return one_hot(self.labels, self.num_classes)


def one_hot(labels, num_classes):
    """``num_classes x N`` indicator matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    T = np.zeros((num_classes, labels.size))
    T[labels, np.arange(labels.size)] = 1.0
    return T


def save_frames(ds, path):
    """One frame per line: features then the integer label, tab separated.

    A blank line separates utterances. Floats are written with 17
    significant digits so a reload is exact.
    """
    starts = set(ds.boundaries[1:])
    with open(path, "w") as fh:
        fh.write(f"# classes={ds.num_classes}\n")
        for t in range(len(ds)):
            if t in starts:
                fh.write("\n")
            feats = "\t".join(f"{v:.17g}" for v in ds.frames[:, t])
            fh.write(f"{feats}\t{ds.labels[t]}\n")


def load_frames(path, num_classes=None):
    """Parse a frame file written by :func:`save_frames` (or by hand).

    ``num_classes`` defaults to the ``# classes=`` header when present, else
    to one more than the largest label.
    """
    rows, labels, boundaries = [], [], [0]
    header_classes = None
    pending_break = False
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                if line[1:].strip().startswith("classes="):
                    header_classes = int(line.split("=", 1)[1])
                continue
            if not line:
                pending_break = bool(rows)
                continue
            fields_ = line.replace(",", " ").split()
            if len(fields_) < 2:
                raise FormatError(f"{path}:{lineno}: need at least one feature and a label")
            if width is None:
                width = len(fields_)
            elif len(fields_) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, found {len(fields_)}")
            try:
                feats = [float(v) for v in fields_[:-1]]
                label = int(fields_[-1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
            if not np.all(np.isfinite(feats)):
                raise FormatError(f"{path}:{lineno}: non-finite feature")
            if pending_break:
                boundaries.append(len(rows))
                pending_break = False
            rows.append(feats)
            labels.append(label)
            limit = num_classes or header_classes
            if label < 0 or (limit is not None and label >= limit):
                raise FormatError(f"{path}:{lineno}: label {label} out of range")
    if not rows:
        raise FormatError(f"{path}: no frames")
    n_cls = num_classes or header_classes or (max(labels) + 1)
    return FrameDataset(np.array(rows).T, np.array(labels), n_cls, boundaries)


def window_context(ds, width):
    """Stack each frame with its ``(width - 1) / 2`` neighbours on both sides.

    Neighbours beyond an utterance edge are replaced by the edge frame.
    """
    if width < 1 or width % 2 == 0:
        raise ValueError(f"context width must be a positive odd number, got {width}")
    if width == 1:
        return FrameDataset(ds.frames.copy(), ds.labels.copy(), ds.num_classes, list(ds.boundaries))
    half = (width - 1) // 2
    n = len(ds)
    edges = list(ds.boundaries) + [n]
    index = np.empty((width, n), dtype=np.int64)
    for start, stop in zip(edges[:-1], edges[1:]):
        t = np.arange(start, stop)
        for j, off in enumerate(range(-half, half + 1)):
            index[j, start:stop] = np.clip(t + off, start, stop - 1)
    frames = ds.frames[:, index]  # (dim, width, n)
    frames = frames.transpose(1, 0, 2).reshape(width * ds.feature_dim, n)
    return FrameDataset(frames, ds.labels.copy(), ds.num_classes, list(ds.boundaries))


def _class_means(rng, num_classes, feature_dim, layout, spread, jitter):
    if layout == "gaussian":
        return rng.standard_normal((feature_dim, num_classes))
    if layout == "line":
        axis = rng.standard_normal(feature_dim)
        axis /= np.linalg.norm(axis)
        pos = spread * np.linspace(-1.0, 1.0, num_classes)
        return np.outer(axis, pos) + jitter * rng.standard_normal((feature_dim, num_classes))
    raise ValueError(f"unknown layout {layout!r}; use 'line' or 'gaussian'")


def synthetic_class_means(num_classes=5, feature_dim=10, seed=0, layout="line", spread=2.0, jitter=0.3):
    """The class mean vectors :func:`gen_synthetic` uses for these arguments."""
    rng = np.random.default_rng(seed)
    return _class_means(rng, num_classes, feature_dim, layout, spread, jitter)


def gen_synthetic(num_classes=5, feature_dim=10, length=20000, memory_strength=0.5, seed=0,
                  noise=0.5, self_transition=0.9, layout="line", spread=2.0, jitter=0.3):
    """Frame classification task whose best answer needs temporal context.

    Classes follow a sticky Markov chain. Frame ``t`` emits its class mean,
    minus ``memory_strength`` times the class mean of frame ``t - 1``, plus
    isotropic Gaussian noise of standard deviation ``noise``. The carried-over
    term masks the current class from a frame-by-frame classifier, while a
    model that remembers the previous frames can undo it.

    With ``layout="line"`` the class means sit evenly along a random axis
    (from ``-spread`` to ``+spread``) plus ``jitter`` Gaussian offsets. Inner
    classes on a line cannot be isolated by one linear score per class, so a
    least-squares readout needs nonlinear features of the input, as with real
    acoustic frames. ``layout="gaussian"`` draws unit-variance means instead.
    """
    if num_classes < 2 or feature_dim < 1 or length < 1:
        raise ValueError("need num_classes >= 2, feature_dim >= 1 and length >= 1")
    rng = np.random.default_rng(seed)
    means = _class_means(rng, num_classes, feature_dim, layout, spread, jitter)
    jump = rng.integers(1, num_classes, size=length)
    stay = rng.random(length) < self_transition
    labels = np.empty(length, dtype=np.int64)
    labels[0] = rng.integers(num_classes)
    for t in range(1, length):
        labels[t] = labels[t - 1] if stay[t] else (labels[t - 1] + jump[t]) % num_classes
    prev = np.concatenate([labels[:1], labels[:-1]])
    frames = (
        means[:, labels]
        - memory_strength * means[:, prev]
        + noise * rng.standard_normal((feature_dim, length))
    )
    return FrameDataset(frames, labels, num_classes, [0])


def split_dataset(ds, sizes):
    """Cut consecutive pieces of the given sizes off the front of ``ds``."""
    if sum(sizes) > len(ds):
        raise ValueError(f"split sizes {sizes} exceed {len(ds)} frames")
    out, start = [], 0
    for size in sizes:
        stop = start + size
        bounds = [0] + [b - start for b in ds.boundaries if start < b < stop]
        out.append(FrameDataset(ds.frames[:, start:stop], ds.labels[start:stop], ds.num_classes, bounds))
        start = stop
    return out


def save_model(params, path):
    """Binary little-endian model file.

    Layout: header ``magic, version(u32), d, h, o, nnz (u64), lam, mu (f64)``,
    then ``W`` (d*h f64, row-major), then ``nnz`` records of
    ``row(i64), col(i64), value(f64)``, then ``U`` ((h+d)*o f64, row-major).
    """
    d, h = params.W.shape
    o = params.output_dim
    pat = params.W_rec.pattern
    triples = np.empty(pat.nnz, dtype=[("r", "<i8"), ("c", "<i8"), ("v", "<f8")])
    triples["r"] = pat.row_idx
    triples["c"] = pat.col_idx
    triples["v"] = params.W_rec.values
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, d, h, o, pat.nnz, params.lam, params.mu))
        fh.write(np.ascontiguousarray(params.W, dtype="<f8").tobytes())
        fh.write(triples.tobytes())
        fh.write(np.ascontiguousarray(params.U, dtype="<f8").tobytes())


def model_file_size(d, h, o, nnz):
    return _HEADER.size + 8 * (d * h + 3 * nnz + (h + d) * o)


def load_model(path):
    """Read a file written by :func:`save_model`, validating every section."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at offset {len(data)} (need {_HEADER.size} bytes)")
    magic, version, d, h, o, nnz, lam, mu = _HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    expected = model_file_size(d, h, o, nnz)
    if len(data) != expected:
        raise FormatError(f"{path}: file is {len(data)} bytes, layout needs {expected} (truncated at offset {min(len(data), expected)})")
    off = _HEADER.size
    W = np.frombuffer(data, "<f8", d * h, off).reshape(d, h).astype(np.float64)
    off += 8 * d * h
    triples = np.frombuffer(data, [("r", "<i8"), ("c", "<i8"), ("v", "<f8")], nnz, off)
    off += 24 * nnz
    U = np.frombuffer(data, "<f8", (h + d) * o, off).reshape(h + d, o).astype(np.float64)
    try:
        pattern = SparsePattern(h, h, triples["r"].astype(np.int64), triples["c"].astype(np.int64))
        w_rec = SparseMatrix(pattern, triples["v"].astype(np.float64))
    except ValueError as exc:
        raise FormatError(f"{path}: bad recurrent section at offset {_HEADER.size + 8 * d * h}: {exc}") from None
    return ModelParams(W=W, W_rec=w_rec, U=U, lam=lam, mu=mu)
