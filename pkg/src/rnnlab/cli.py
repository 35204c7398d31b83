"""Command-line entry point.

Subcommands: gen-data, train, eval, sweep, fixed-points, precision,
trace, verify.  Every run is reproducible from its flags alone; the only
environment dependence is the optional RNNLAB_SEED variable, which
overrides --seed / --data-seed when set.  Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fixed_points, harness, nn_core, precision, sampling, trace
from .languages import grammar_by_name, verify_cm_equivalence
from .errors import RnnLabError

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; our contract reserves 2 for
    # runtime failures and uses 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _env_seed(default: int) -> int:
    val = os.environ.get("RNNLAB_SEED")
    return int(val) if val else default


def _add_config_flags(p: _Parser):
    """One flag per ExperimentConfig field, names matching 1:1."""
    for f in dataclasses.fields(harness.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "seeds":
            p.add_argument(flag, type=str, default=None,
                           help="comma-separated training seeds")
        elif f.type == "bool":
            p.add_argument(flag, action="store_true", default=None)
        elif f.type == "int":
            p.add_argument(flag, type=int, default=None)
        elif f.type == "float":
            p.add_argument(flag, type=float, default=None)
        else:
            p.add_argument(flag, type=str, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="config file; flags given on the command line win")


def _config_from_args(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.config_from_text(Path(args.config).read_text())
    else:
        cfg = harness.ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(harness.ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name == "seeds":
            v = tuple(int(s) for s in v.split(",") if s.strip())
        overrides[f.name] = v
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if os.environ.get("RNNLAB_SEED"):
        cfg = dataclasses.replace(cfg, data_seed=_env_seed(cfg.data_seed))
    return cfg


def _parse_range(text: str):
    lo, hi, step = (float(x) for x in text.split(":"))
    return np.arange(lo, hi + step / 2, step)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = sampling.DatasetSpec(args.grammar, args.hardness, args.len_min,
                                args.len_max, args.size, args.decay,
                                _env_seed(args.seed))
    rows = sampling.build_dataset(spec)
    sampling.write_dataset(args.out, rows, spec)
    n_pos = sum(r.label for r in rows)
    print(f"wrote {len(rows)} strings ({n_pos} positive, "
          f"{len(rows) - n_pos} negative) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    seed = cfg.seeds[0]
    datasets = harness.load_datasets(cfg)
    result = harness.run_training(cfg, seed, datasets)
    ev = harness.evaluate(cfg.cell, result.params, result.classifier,
                          datasets[2], cfg.bucket_width)
    if args.out:
        nn_core.save_checkpoint(
            args.out, cfg.cell, result.params, result.classifier,
            meta={"grammar": cfg.grammar, "seed": seed,
                  "stopped_at": result.stopped_at,
                  "best_val_loss": result.best_val_loss})
    if args.log:
        harness.log_to_csv(args.log, result.log)
        if args.plot:
            from . import plots
            plots.plot_training_log(
                str(Path(args.log).with_suffix(".png")), result.log)
    state = "diverged" if result.diverged else "stopped"
    print(f"{cfg.cell} on {cfg.grammar} {cfg.hardness} seed {seed}: "
          f"{state} at iter {result.stopped_at}, "
          f"best val loss {result.best_val_loss:.4f}, "
          f"test accuracy {ev.accuracy:.2f}%")
    for lo in sorted(ev.per_length_bucket):
        hi = lo + cfg.bucket_width - 1
        print(f"  lengths {lo}-{hi}: {ev.per_length_bucket[lo]:.2f}% "
              f"({ev.bucket_counts[lo]} strings)")
    return 0


def cmd_eval(args) -> int:
    cell, params, clf, meta = nn_core.load_checkpoint(args.checkpoint)
    rows, spec = sampling.read_dataset(
        args.data, grammar_by_name(args.grammar) if args.grammar else None)
    n_in = nn_core.input_size(params)
    n_sym = 1 + max(max(r.s, default=0) for r in rows if r.s)
    if n_sym > n_in:
        raise RnnLabError(f"dataset uses {n_sym} symbols but the "
                          f"checkpoint expects at most {n_in}")
    ev = harness.evaluate(cell, params, clf, rows, args.bucket_width)
    print(f"{cell} checkpoint on {len(rows)} strings: "
          f"accuracy {ev.accuracy:.2f}%")
    for lo in sorted(ev.per_length_bucket):
        hi = lo + args.bucket_width - 1
        print(f"  lengths {lo}-{hi}: {ev.per_length_bucket[lo]:.2f}%")
    if args.out:
        summary = harness.aggregate([ev.accuracy], [ev.per_length_bucket])
        harness.buckets_to_csv(args.out, summary)
        if args.plot:
            from . import plots
            plots.plot_length_buckets(
                str(Path(args.out).with_suffix(".png")),
                ev.per_length_bucket, args.bucket_width,
                title=f"{cell} on {meta.get('grammar', '?')}")
    return 0


# module-level so it pickles for the process pool
_WORKER_CACHE: dict = {}


def _sweep_task(cfg: harness.ExperimentConfig, seed: int):
    key = (cfg.grammar, cfg.hardness, cfg.train_size, cfg.data_seed)
    if key not in _WORKER_CACHE:
        _WORKER_CACHE[key] = harness.load_datasets(cfg)
    datasets = _WORKER_CACHE[key]
    tr = harness.run_training(cfg, seed, datasets)
    ev = harness.evaluate(cfg.cell, tr.params, tr.classifier, datasets[2],
                          cfg.bucket_width)
    return ev.accuracy, ev.per_length_bucket, tr.diverged


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    hardnesses = args.hardnesses.split(",") if args.hardnesses else None
    cells = args.cells.split(",") if args.cells else None
    inits = args.inits.split(",") if args.inits else None

    if args.jobs <= 1:
        def progress(cfg, seed, tr, ev):
            print(f"  {cfg.cell}/{cfg.hardness}/{cfg.strategy} seed {seed}: "
                  f"{ev.accuracy:.2f}% (iter {tr.stopped_at})", flush=True)
        rows = harness.run_sweep(base, hardnesses, cells, inits,
                                 progress=progress)
    else:
        configs = [dataclasses.replace(base, hardness=h, cell=c, init=i)
                   for h in (hardnesses or [base.hardness])
                   for c in (cells or [base.cell])
                   for i in (inits or [base.init])]
        tasks = [(cfg, seed) for cfg in configs for seed in cfg.seeds]
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            outs = list(pool.map(_sweep_task, *zip(*tasks)))
        rows = []
        for cfg in configs:
            part = [o for (c, _), o in zip(tasks, outs) if c is cfg]
            accs = [a for a, _, _ in part]
            bks = [b for _, b, _ in part]
            div = [s for s, (_, _, d) in zip(cfg.seeds, part) if d]
            rows.append((cfg, harness.aggregate(accs, bks, div)))

    print(" ".join(harness.SWEEP_COLUMNS))
    for cfg, s in rows:
        print(f"{cfg.grammar} {cfg.hardness} {cfg.cell} {cfg.freeze} "
              f"{cfg.strategy} {cfg.hidden} {len(cfg.seeds)} "
              f"{s.max:.2f} {s.mean:.2f} {s.std:.2f}")
    if args.out:
        harness.sweep_to_csv(args.out, rows)
        if args.plot:
            from . import plots
            for cfg, s in rows:
                if not s.per_length_bucket:
                    continue
                stem = Path(args.out).with_suffix("")
                plots.plot_length_buckets(
                    f"{stem}_{cfg.grammar}_{cfg.hardness}_{cfg.cell}.png",
                    s.per_length_bucket, cfg.bucket_width,
                    title=f"{cfg.cell} {cfg.grammar} {cfg.hardness}")
    return 0


def cmd_fixed_points(args) -> int:
    kind = fixed_points.Kind(args.kind)
    if args.w_range or args.b_range:
        if not (args.w_range and args.b_range):
            raise RnnLabError("--w-range and --b-range go together")
        ws = _parse_range(args.w_range)
        bs = _parse_range(args.b_range)
        grid = fixed_points.count_region_sweep(kind, ws, bs)
        print(f"{kind.value} sweep: {grid.shape[0]}x{grid.shape[1]} cells, "
              f"counts {sorted(set(int(v) for v in grid.ravel()))}")
        if args.out:
            fixed_points.sweep_to_csv(args.out, kind, ws, bs, grid)
            if args.plot:
                from . import plots
                plots.plot_fixed_point_sweep(
                    str(Path(args.out).with_suffix(".png")),
                    kind.value, ws, bs, grid)
        return 0
    act = fixed_points.ActivationParams(kind, args.w, args.b)
    report = fixed_points.find_fixed_points(act)
    print(f"{kind.value}({args.w:g}*x{args.b:+g}): "
          f"{report.count} fixed point(s)")
    for p in report.points:
        print(f"  xi = {p.xi:.12f}  |f'(xi)| = "
              f"{p.derivative_magnitude:.6f}  {p.stability.value}")
    if args.critical:
        wc = fixed_points.critical_weight(kind, args.b)
        print(f"  critical weight at b={args.b:g}: {wc:.6f}")
    if args.out:
        fixed_points.report_to_csv(args.out, report)
        if args.plot:
            from . import plots
            plots.plot_fixed_point_map(
                str(Path(args.out).with_suffix(".png")), act, report)
    return 0


def cmd_precision(args) -> int:
    p = precision.PrecisionParams(
        epsilon=args.epsilon, noticeable_factor=args.factor,
        dynamic_range=(args.range_low, args.range_high),
        conservative_factor=args.conservative)
    report = precision.estimate_nmax(p)
    print(json.dumps(report.as_dict(), indent=2))
    if args.xi_plus is not None and args.xi_minus is not None:
        alpha = precision.collapse_count(args.xi_plus, args.xi_minus,
                                         args.epsilon)
        print(f"collapse_count: {alpha}")
    return 0


def cmd_trace(args) -> int:
    cell, params, clf, meta = nn_core.load_checkpoint(args.checkpoint)
    g = grammar_by_name(args.grammar or meta.get("grammar", ""))
    seq = g.from_text(args.string)
    tr = trace.record_trace(cell, params, clf, seq)
    print(f"{args.string!r}: p(member) = {tr.probability:.6f}")
    if args.out:
        trace.export_trace_csv(tr, args.out)
        if args.plot:
            from . import plots
            plots.plot_trace(str(Path(args.out).with_suffix(".png")),
                             tr, g, use_cell_state=args.cell_state)
    return 0


def cmd_verify(args) -> int:
    """Self-check: machine/membership equivalence, gradient fidelity,
    and the three-fixed-point regime."""
    failures = 0

    def check(name, fn):
        nonlocal failures
        try:
            detail = fn()
            print(f"PASS {name}" + (f" ({detail})" if detail else ""))
        except Exception as exc:  # report and keep going
            failures += 1
            print(f"FAIL {name}: {exc}")

    for gname in ("dyck1", "anbncn", "anbncndn", "anbmambn", "anbmambm"):
        check(f"oracle equivalence {gname} len<=10",
              lambda gname=gname: f"{verify_cm_equivalence(grammar_by_name(gname), 10)} configs")

    def grad_check():
        worst = 0.0
        for cell in nn_core.CELLS:
            for seed in range(3):
                params, clf = nn_core.initialize(cell, 3, 2, nn_core.default_strategy(cell), seed)
                batch = [((0, 1, 0, 1), 1), ((1, 1, 0), 0)]
                gp, gc, _, _ = nn_core.bptt_gradients(cell, params, clf, batch)
                fp, fc = nn_core.finite_difference_grads(cell, params, clf, batch)
                worst = max(worst, nn_core.grad_relative_error(gp, fp),
                            nn_core.grad_relative_error(gc, fc))
        if worst >= 1e-4:
            raise AssertionError(f"relative error {worst:.2e}")
        return f"max rel err {worst:.2e}"
    check("gradient fidelity (BPTT vs finite differences)", grad_check)

    def fp_check():
        for kind in fixed_points.Kind:
            if fixed_points.count_fixed_points(kind, 5.0, -6.0) != 1:
                raise AssertionError(f"{kind.value} w=5 b=-6 expected 1")
            if fixed_points.count_fixed_points(kind, 13.0, -6.0) != 3:
                raise AssertionError(f"{kind.value} w=13 b=-6 expected 3")
        return "w=5 monostable, w=13 tristable"
    check("fixed-point regimes", fp_check)

    print("verify:", "OK" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else RUNTIME_ERROR


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="rnnlab", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen-data", help="generate a labeled dataset")
    g.add_argument("--grammar", required=True)
    g.add_argument("--hardness", required=True,
                   choices=("hard0", "hard1", "hard2"))
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--len-min", type=int, default=2)
    g.add_argument("--len-max", type=int, default=40)
    g.add_argument("--decay", type=float, default=0.1)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one model")
    _add_config_flags(t)
    t.add_argument("--out", help="checkpoint path (JSON)")
    t.add_argument("--log", help="training log path (CSV)")
    t.add_argument("--plot", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--grammar", help="needed if the dataset has no sidecar")
    e.add_argument("--bucket-width", type=int, default=20)
    e.add_argument("--out", help="per-bucket accuracy CSV")
    e.add_argument("--plot", action="store_true")
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("sweep", help="grid of experiments, aggregated")
    _add_config_flags(s)
    s.add_argument("--hardnesses", help="comma list, e.g. hard0,hard2")
    s.add_argument("--cells", help="comma list, e.g. lstm,o2rnn")
    s.add_argument("--inits", help="comma list of init strategies")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="sweep summary CSV")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(fn=cmd_sweep)

    f = sub.add_parser("fixed-points", help="scalar map fixed-point report")
    f.add_argument("--kind", required=True, choices=("tanh", "sigmoid"))
    f.add_argument("--w", type=float, default=1.0)
    f.add_argument("--b", type=float, default=0.0)
    f.add_argument("--w-range", help="lo:hi:step sweep over w")
    f.add_argument("--b-range", help="lo:hi:step sweep over b")
    f.add_argument("--critical", action="store_true",
                   help="also report the critical weight at b")
    f.add_argument("--out")
    f.add_argument("--plot", action="store_true")
    f.set_defaults(fn=cmd_fixed_points)

    pr = sub.add_parser("precision", help="float-resolution count bound")
    pr.add_argument("--epsilon", type=float, default=precision.EPS32_PRESET)
    pr.add_argument("--factor", type=float, default=10.0)
    pr.add_argument("--range-low", type=float, default=-0.9)
    pr.add_argument("--range-high", type=float, default=0.9)
    pr.add_argument("--conservative", type=float, default=1.0)
    pr.add_argument("--xi-plus", type=float)
    pr.add_argument("--xi-minus", type=float)
    pr.set_defaults(fn=cmd_precision)

    tr = sub.add_parser("trace", help="record a hidden-state trajectory")
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--string", required=True)
    tr.add_argument("--grammar")
    tr.add_argument("--cell-state", action="store_true",
                    help="plot the cell state instead of the hidden state")
    tr.add_argument("--out")
    tr.add_argument("--plot", action="store_true")
    tr.set_defaults(fn=cmd_trace)

    v = sub.add_parser("verify", help="oracle/gradient/fixed-point checks")
    v.set_defaults(fn=cmd_verify)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        return args.fn(args)
    except (RnnLabError, OSError, ValueError, KeyError) as exc:
        print(f"rnnlab: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
