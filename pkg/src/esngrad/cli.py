"""Command-line entry point: ``esngrad {gen,train,eval,gradcheck}``.

Exit codes: 0 success, 1 config or data error, 2 shape mismatch,
3 numeric failure.
"""

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .dataio import FormatError, gen_synthetic, load_frames, load_model, save_frames, save_model, split_dataset
from .gradcheck import run_grid
from .numkernel import NumericError
from .reservoir import EsnConfig, init_network
from .trainer import LearnMode, TrainingError, evaluate, fit

EXIT_OK, EXIT_CONFIG, EXIT_SHAPE, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_DIR_ENV = "ESNGRAD_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for shape errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class ShapeError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    """Everything ``train`` needs. Input and output sizes come from the data."""

    train: str = ""
    valid: str = ""
    model: str = "model.esn"
    report: str = "report.tsv"
    mode: str = "learn-w-wrec"
    epochs: int = 20
    hidden_dim: int = 100
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
    threads: int = 1
    timing: bool = False

    def esn_config(self, input_dim, output_dim):
        esn = {f: getattr(self, f) for f in EsnConfig.field_names() if hasattr(self, f)}
        return EsnConfig(input_dim=input_dim, output_dim=output_dim, **esn)

    def lines(self):
        return [f"{f.name}={getattr(self, f.name)}" for f in dataclasses.fields(self)]


def _coerce(name, text):
    kind = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    try:
        if kind in (bool, "bool"):
            low = str(text).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return low in ("1", "true", "yes")
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return str(text)


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val)
    return values


def output_path(path):
    """Relative output paths land under ``$ESNGRAD_OUTPUT_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",")]
    except ValueError:
        raise ConfigError(f"--split expects comma-separated integers, got {text!r}") from None
    if len(sizes) not in (2, 3) or min(sizes) < 1:
        raise ConfigError("--split takes two or three positive sizes")
    return sizes


def cmd_gen(args):
    sizes = _sizes(args.split) if args.split else None
    length = args.length if sizes is None else sum(sizes)
    ds = gen_synthetic(args.classes, args.dim, length, args.memory_strength, seed=args.seed,
                       noise=args.noise, layout=args.layout)
    out = output_path(args.out)
    if sizes is None:
        save_frames(ds, out)
        print(f"wrote {len(ds)} frames to {out}")
        return EXIT_OK
    for name, part in zip(("train", "valid", "test"), split_dataset(ds, sizes)):
        dest = out.with_name(f"{out.stem}.{name}{out.suffix or '.txt'}")
        save_frames(part, dest)
        print(f"wrote {len(part)} frames to {dest}")
    return EXIT_OK


# flag dest -> RunConfig field
_TRAIN_FLAGS = {
    "train": "train", "valid": "valid", "model": "model", "report": "report", "mode": "mode",
    "epochs": "epochs", "depth": "bptt_depth", "lam": "lam", "alpha": "alpha", "mu": "mu",
    "hidden": "hidden_dim", "seed": "seed", "washout": "washout", "density": "density",
    "input_scale": "input_scale", "clip": "clip_threshold", "threads": "threads",
    "timing": "timing", "grad_shortcut": "grad_shortcut",
}


def resolve_config(args):
    values = read_config(args.config) if args.config else {}
    for dest, name in _TRAIN_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    LearnMode.parse(cfg.mode)
    if not cfg.train:
        raise ConfigError("no training data: pass --train or set train= in the config file")
    return cfg


def cmd_train(args):
    cfg = resolve_config(args)
    for line in cfg.lines():
        print(f"# {line}", file=sys.stderr)
    train = load_frames(cfg.train)
    valid = load_frames(cfg.valid, train.num_classes) if cfg.valid else None
    if valid is not None and valid.feature_dim != train.feature_dim:
        raise ShapeError(f"validation data has {valid.feature_dim} features, training data {train.feature_dim}")
    esn = cfg.esn_config(train.feature_dim, train.num_classes)
    with threadpool_limits(limits=cfg.threads):
        params = init_network(esn)
        best, report = fit(params, train, valid, esn, cfg.mode, epochs=cfg.epochs)
    save_model(best, output_path(cfg.model))
    output_path(cfg.report).write_text(report.to_tsv(timing=cfg.timing))
    row = report.rows[report.best_epoch - 1]
    print(f"best_epoch\t{report.best_epoch}")
    print(f"train_error\t{row.train_error:.6f}")
    print(f"valid_error\t{row.valid_error:.6f}")
    return EXIT_OK


def cmd_eval(args):
    params = load_model(args.model)
    data = load_frames(args.data, params.output_dim)
    if data.feature_dim != params.input_dim:
        raise ShapeError(f"model expects {params.input_dim} features, data has {data.feature_dim}")
    if data.num_classes != params.output_dim:
        raise ShapeError(f"model has {params.output_dim} outputs, data has {data.num_classes} classes")
    with threadpool_limits(limits=args.threads):
        err = evaluate(params, data)
    print(f"frame_error\t{err:.6f}")
    return EXIT_OK


def cmd_gradcheck(args):
    with threadpool_limits(limits=args.threads):
        reports = run_grid(depths=tuple(args.depth), seeds=range(args.seeds), eps=args.epsilon, tol=args.tol)
    worst = max(reports, key=lambda r: r.max_rel_error)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(f"{r.label}\t{r.max_rel_error:.3e}\t{'ok' if r.passed else 'FAIL'}")
    k, a, n, e = worst.worst_entry()
    print(f"worst\t{worst.label}\tentry={k}\tanalytic={a:.10g}\tnumeric={n:.10g}\trel_error={e:.3e}")
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


def build_parser():
    p = _Parser(prog="esngrad", description="Echo state networks with gradient-trained input and recurrent weights.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic frame classification dataset")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--dim", type=int, default=10)
    g.add_argument("--length", type=int, default=20000)
    g.add_argument("--memory-strength", type=float, default=0.5)
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--layout", choices=["line", "gaussian"], default="line")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", help="comma-separated train,valid[,test] sizes")
    g.add_argument("--out", default="synthetic.txt")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a network and write the model and per-epoch report")
    t.add_argument("--config", help="key=value file; flags override its values")
    t.add_argument("--train")
    t.add_argument("--valid")
    t.add_argument("--model")
    t.add_argument("--report")
    t.add_argument("--mode", choices=[m.value for m in LearnMode])
    t.add_argument("--epochs", type=int)
    t.add_argument("--depth", type=int, help="time steps followed by the gradients")
    t.add_argument("--lambda", dest="lam", type=float, help="target spectral radius")
    t.add_argument("--alpha", type=float, help="step size")
    t.add_argument("--mu", type=float, help="ridge term")
    t.add_argument("--hidden", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--washout", type=int)
    t.add_argument("--density", type=float)
    t.add_argument("--input-scale", type=float)
    t.add_argument("--clip", type=float)
    t.add_argument("--grad-shortcut", action="store_const", const=True)
    t.add_argument("--timing", action="store_const", const=True, help="record wall time in the report")
    t.add_argument("--threads", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print the frame error rate of a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    c.add_argument("--epsilon", type=float, default=1e-5)
    c.add_argument("--depth", type=int, nargs="+", default=[1, 2, 3])
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--threads", type=int, default=1)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return args.func(args)
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TrainingError as exc:
        numeric = isinstance(exc.__cause__, (NumericError, FloatingPointError))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_CONFIG
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
