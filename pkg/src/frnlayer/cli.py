"""Command-line front end.

Subcommands: ``gradcheck`` (finite-difference validation of every analytic
gradient), ``curve`` (single-activation normalization response for a list
of eps values), ``train`` (one training run), ``sweep`` (batch-size sweep
with sample-count equalization). All output is CSV with '.' decimals, full
round-trip float precision and LF line endings; every invocation is
deterministic in its flags, so re-running produces byte-identical files.

Exit codes: 0 success, 1 check failure, 2 usage or config error,
3 divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .activation import ActKind
from .gradcheck import check_layer
from .norm import (ConfigError, Fixed, Learned, LEARNED_EPS_INIT, NormKind,
                   NormSpec, frn_scalar)
from .tensor import make_rng
from .trainer import NormAct, TrainConfig, linear_scaled_lr, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

GRADCHECK_SCHEMES = ("frn", "in", "bn", "gn", "ln", "gfrn", "lfrn")
ACT_NAMES = tuple(kind.value for kind in ActKind)
NORM_NAMES = tuple(kind.value for kind in NormKind)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows, comments: list[str] = ()) -> None:
    with open(path, "w", newline="\n") as f:
        for line in comments:
            f.write(f"# {line}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_eps_token(token: str):
    token = token.strip()
    if token == "learned":
        return Learned(LEARNED_EPS_INIT)
    if token.startswith("learned:"):
        return Learned(float(token.split(":", 1)[1]))
    return Fixed(float(token))


def _eps_label(policy) -> str:
    if isinstance(policy, Learned):
        return f"learned:{_fmt(policy.eps_l)}"
    return f"fixed:{_fmt(policy.value)}"


def _parse_shape(token: str) -> tuple[int, ...]:
    dims = tuple(int(d) for d in token.lower().split("x"))
    if len(dims) != 4:
        raise ValueError(f"shape must have four dimensions, got {token!r}")
    return dims


def _norm_spec(kind_name: str, eps_policy, group_size: int | None) -> NormSpec:
    kind = NormKind(kind_name)
    if kind not in (NormKind.GN, NormKind.GFRN):
        group_size = None
    return NormSpec(kind=kind, group_size=group_size, eps_policy=eps_policy)


def cmd_gradcheck(args) -> int:
    try:
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        for s in schemes:
            if s not in GRADCHECK_SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from "
                                  f"{', '.join(GRADCHECK_SCHEMES)}")
        acts = [a.strip() for a in args.acts.split(",") if a.strip()]
        for a in acts:
            if a not in ACT_NAMES:
                raise ConfigError(f"unknown activation {a!r}; choose from "
                                  f"{', '.join(ACT_NAMES)}")
        shapes = [_parse_shape(t) for t in args.shapes.split(",")]
        eps_policies = [_parse_eps_token(t) for t in args.eps_list.split(",")]
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    # keep the everything-below-this-is-zero floor two decades under the
    # requested tolerance so tightening the tolerance actually tightens
    # the check
    abs_floor = min(1e-8, args.tolerance * 1e-2)
    header = ["scheme", "act", "shape", "eps", "seed", "surface",
              "max_rel_error", "max_abs_error", "worst_index", "passed"]
    rows = []
    worst = None
    all_passed = True
    for scheme in schemes:
        for act in acts:
            for shape in shapes:
                for policy in eps_policies:
                    try:
                        spec = _norm_spec(scheme, policy, args.group_size)
                        for seed in range(args.seeds):
                            layer = NormAct(shape[3], spec, ActKind(act))
                            reports = check_layer(
                                layer, shape, make_rng(seed),
                                tolerance=args.tolerance,
                                abs_floor=abs_floor)
                            for r in reports:
                                rows.append([scheme, act,
                                             "x".join(map(str, shape)),
                                             _eps_label(policy), seed, r.name,
                                             r.max_rel_error, r.max_abs_error,
                                             r.worst_index, r.passed])
                                if not r.passed:
                                    all_passed = False
                                    if (worst is None
                                            or r.max_rel_error > worst[1]):
                                        worst = (rows[-1], r.max_rel_error)
                    except ConfigError as exc:
                        print(f"error: {exc}", file=sys.stderr)
                        return EXIT_USAGE
    if args.out:
        _write_csv(args.out, header, rows)
    if not all_passed:
        row = worst[0]
        print(f"gradcheck FAILED; worst offender: scheme={row[0]} act={row[1]} "
              f"shape={row[2]} eps={row[3]} seed={row[4]} surface={row[5]} "
              f"max_rel_error={_fmt(row[6])}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"gradcheck passed: {len(rows)} gradient surfaces within "
          f"{_fmt(args.tolerance)} relative")
    return EXIT_OK


def cmd_curve(args) -> int:
    try:
        eps_values = [float(t) for t in args.eps_list.split(",")]
        if any(e < 0 for e in eps_values):
            raise ValueError("eps values must be >= 0")
        if args.samples < 2:
            raise ValueError("need at least 2 samples")
        if not (np.isfinite(args.x_min) and np.isfinite(args.x_max)):
            raise ValueError("x range must be finite")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    xs = np.linspace(args.x_min, args.x_max, args.samples)
    if args.x_min == -args.x_max:
        # make a symmetric range exactly mirror-symmetric so the odd
        # symmetry of x/sqrt(x^2+eps) survives in the output bit for bit
        xs = 0.5 * (xs - xs[::-1])
    header = ["x"] + [f"eps={_fmt(e)}" for e in eps_values]
    rows = [[float(x)] + [frn_scalar(float(x), e) for e in eps_values]
            for x in xs]
    _write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} curve rows to {args.out}")
    return EXIT_OK


def _build_train_config(args, batch_size=None, total_steps=None,
                        base_lr=None, warmup_steps=None) -> TrainConfig:
    eps_policy = (Learned(args.eps_learnable) if args.eps_learnable is not None
                  else Fixed(args.eps))
    spec = _norm_spec(args.norm, eps_policy, args.group_size)
    batch = batch_size if batch_size is not None else args.batch_size
    lr = base_lr if base_lr is not None else args.lr
    if lr is None:
        lr = linear_scaled_lr(batch)
    return TrainConfig(
        norm=spec, act=ActKind(args.act), batch_size=batch,
        total_steps=total_steps if total_steps is not None else args.steps,
        base_lr=lr,
        warmup_steps=warmup_steps if warmup_steps is not None else args.warmup_steps,
        momentum=args.momentum, weight_decay=args.weight_decay,
        seed=args.seed, dataset=args.dataset, eval_every=args.eval_every)


def _config_comments(config: TrainConfig) -> list[str]:
    items = [("norm", config.norm.kind.value),
             ("group_size", config.norm.group_size),
             ("eps", _eps_label(config.norm.eps_policy)),
             ("act", config.act.value),
             ("batch_size", config.batch_size),
             ("total_steps", config.total_steps),
             ("base_lr", config.base_lr),
             ("warmup_steps", config.warmup_steps),
             ("momentum", config.momentum),
             ("weight_decay", config.weight_decay),
             ("seed", config.seed),
             ("dataset", config.dataset)]
    return [f"{k},{_fmt(v)}" for k, v in items]


METRICS_HEADER = ["step", "lr", "train_loss", "train_acc", "eval_acc"]


def _run_and_write(config: TrainConfig, out: str, print_config: bool):
    result = train(config)
    rows = [[r.step, r.lr, r.train_loss, r.train_acc, r.eval_acc]
            for r in result.rows]
    comments = _config_comments(config) if print_config else ()
    _write_csv(out, METRICS_HEADER, rows, comments)
    return result


def cmd_train(args) -> int:
    try:
        config = _build_train_config(args)
        result = _run_and_write(config, args.out, args.print_config)
    except (ConfigError, ValueError) as exc:
        # some config problems (e.g. group size vs channel count) only
        # surface once the network is built
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if result.diverged:
        print(f"training diverged at step {result.rows[-1].step}; "
              f"metrics truncated", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"finished {config.total_steps} steps; final eval accuracy "
          f"{_fmt(result.final_eval_acc)}; wrote {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        pairs = []
        pair_tokens = args.pairs if args.pairs else f"{args.norm}:{args.act}"
        for token in pair_tokens.split(","):
            norm_name, _, act_name = token.strip().partition(":")
            if norm_name not in NORM_NAMES or act_name not in ACT_NAMES:
                raise ConfigError(f"bad pair {token!r}; expected NORM:ACT")
            pairs.append((norm_name, act_name))
        batch_sizes = [int(t) for t in args.batch_sizes.split(",")]
        if not batch_sizes or any(b < 1 for b in batch_sizes):
            raise ConfigError("batch sizes must be positive integers")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    max_batch = max(batch_sizes)
    summary = []
    for norm_name, act_name in pairs:
        for batch in batch_sizes:
            # equalize the total number of samples each run sees
            steps = (args.steps * max_batch + batch - 1) // batch
            lr = (args.lr * batch / max_batch if args.lr is not None
                  else linear_scaled_lr(batch))
            warmup = int(round(args.warmup_frac * steps))
            cell_args = argparse.Namespace(
                **{**vars(args), "norm": norm_name, "act": act_name})
            try:
                config = _build_train_config(cell_args, batch_size=batch,
                                             total_steps=steps, base_lr=lr,
                                             warmup_steps=warmup)
            except (ConfigError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            run_path = out_dir / f"run_{norm_name}-{act_name}_b{batch}.csv"
            try:
                result = _run_and_write(config, str(run_path),
                                        args.print_config)
            except (ConfigError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            acc = float("nan") if result.diverged else result.final_eval_acc
            summary.append([f"{norm_name}+{act_name}", batch, acc])
            status = "diverged" if result.diverged else f"eval_acc={_fmt(acc)}"
            print(f"{norm_name}+{act_name} batch={batch} steps={steps}: {status}")
    _write_csv(str(out_dir / "summary.csv"),
               ["scheme", "batch_size", "final_eval_acc"], summary)
    print(f"wrote {out_dir / 'summary.csv'}")
    return EXIT_OK


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--norm", choices=NORM_NAMES, default="frn")
    p.add_argument("--act", choices=ACT_NAMES, default="tlu")
    p.add_argument("--group-size", type=int, default=8,
                   help="channel group size for gn/gfrn")
    eps = p.add_mutually_exclusive_group()
    eps.add_argument("--eps", type=float, default=1e-6,
                     help="fixed denominator offset")
    eps.add_argument("--eps-learnable", type=float, nargs="?",
                     const=LEARNED_EPS_INIT, default=None, metavar="INIT",
                     help="learn the denominator offset, starting from INIT")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=4e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", default="synthetic",
                   help="'synthetic' or 'idx:IMAGES:LABELS'")
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--print-config", action="store_true",
                   help="prepend the resolved config as CSV comment lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frnlayer",
        description="Batch-independent normalization layers: gradient "
                    "checks, response curves, training runs and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gradcheck",
                       help="validate analytic gradients against central "
                            "finite differences")
    g.add_argument("--schemes", default=",".join(GRADCHECK_SCHEMES))
    g.add_argument("--acts", default=",".join(ACT_NAMES))
    g.add_argument("--shapes", default="2x3x3x4,2x1x1x4")
    g.add_argument("--eps-list", default="1e-6,1e-2,learned:1e-4")
    g.add_argument("--seeds", type=int, default=5)
    g.add_argument("--tolerance", type=float, default=1e-6)
    g.add_argument("--group-size", type=int, default=2)
    g.add_argument("--out", default=None)
    g.set_defaults(fn=cmd_gradcheck)

    c = sub.add_parser("curve",
                       help="tabulate x / sqrt(x^2 + eps) for several eps")
    c.add_argument("--eps-list", default="1e-6,1e-4,1e-2,1e-1,1")
    c.add_argument("--x-min", type=float, default=-5.0)
    c.add_argument("--x-max", type=float, default=5.0)
    c.add_argument("--samples", type=int, default=201)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_curve)

    t = sub.add_parser("train", help="run one training job")
    _add_train_flags(t)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--lr", type=float, default=None,
                   help="base learning rate; default 0.1*batch/256")
    t.add_argument("--warmup-steps", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep",
                       help="train across batch sizes with equalized sample "
                            "counts")
    _add_train_flags(s)
    s.add_argument("--pairs", default=None,
                   help="comma list of NORM:ACT pairs; default --norm:--act")
    s.add_argument("--batch-sizes", default="1,2,4,8,32")
    s.add_argument("--steps", type=int, default=2000,
                   help="steps at the largest batch size; smaller batches "
                        "run proportionally more")
    s.add_argument("--lr", type=float, default=None,
                   help="base lr at the largest batch size, scaled linearly "
                        "per batch; default 0.1*batch/256")
    s.add_argument("--warmup-frac", type=float, default=0.05,
                   help="warm-up fraction of each cell's steps")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
