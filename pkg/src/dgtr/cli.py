"""Command-line interface.

Every subcommand exits 0 on success and nonzero with a single-line
diagnostic on stderr otherwise.  Paths default into the directory named by
the DGTR_DATA_DIR environment variable (falling back to ./dgtr_data).
"""

from __future__ import annotations

import argparse
import os
import sys

from .configio import build_train_config, default_config, parse_config_file, render_config
from .data_synth import (SyntheticDataSpec, generate_dataset, load_dataset, write_dataset)
from .errors import ConfigError, DgtrError
from .gradcheck import check_loss_gradients, model_probe
from .model import DgtrModel
from .probes import receptive_field_probe, stitched_probe
from .profiler import cost_table
from .trainer import evaluate, restore_model, train


def data_root() -> str:
    return os.environ.get("DGTR_DATA_DIR", os.path.join(".", "dgtr_data"))


def _load_config(path: str | None):
    if path is None:
        return build_train_config(default_config())
    return build_train_config(parse_config_file(path))


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
        print(f"wrote {out}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = SyntheticDataSpec(num_sequences=args.sequences, seq_len=args.frames,
                             seed=args.seed, noise_sigma=args.noise_sigma,
                             feature_dim=args.feature_dim)
    samples = generate_dataset(spec)
    out_dir = args.out or os.path.join(data_root(), "synth")
    paths = write_dataset(samples, out_dir)
    print(f"wrote {len(paths)} sequences to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.data is not None:
        dataset = load_dataset(args.data)
    else:
        dataset = generate_dataset(cfg.data)
    out_dir = args.out or os.path.join(data_root(), "run")
    result = train(cfg, dataset, out_dir)
    print(f"trained {result.total_steps} steps, final loss {result.final_loss:.6g}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    model, cfg, step = restore_model(args.ckpt)
    dataset = load_dataset(args.data)
    report = evaluate(model, dataset, fps=args.fps, gt_as_pred=args.gt_as_pred)
    header = [f"checkpoint = {args.ckpt} (step {step})"]
    header += cfg.echo.splitlines()
    _write_or_print(report.to_csv(header_lines=header), args.out)
    return 0


def cmd_grad_check(args) -> int:
    loss_builder, model = model_probe(args.seed)
    rows = check_loss_gradients(loss_builder, model.params, eps=args.eps,
                                threshold=args.threshold, entry_cap=args.entries,
                                seed=args.seed, corrupt=args.corrupt)
    width = max(len(r.name) for r in rows)
    failed = 0
    for r in rows:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  entries={r.entries:<4d} max_rel_err={r.max_rel_err:.3e}  {status}")
        failed += 0 if r.ok else 1
    print(f"{len(rows) - failed}/{len(rows)} tensors within threshold {args.threshold:g}")
    return 0 if failed == 0 else 1


def cmd_receptive_field(args) -> int:
    cfg = _load_config(args.config)
    model = DgtrModel(cfg.model, seed=args.seed)
    results = receptive_field_probe(model, seed=args.seed)
    lines = ["frame,gma_delta,ldr_delta,ldr_bitwise_equal"]
    for r in results:
        lines.append(f"{r.frame},{r.gma_delta:.9g},{r.ldr_delta:.9g},{int(r.ldr_bitwise_equal)}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def cmd_sweep_t(args) -> int:
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"sweep: cannot parse window list '{args.values}'")
    if not values:
        raise ConfigError("sweep: no window lengths given")
    base = parse_config_file(args.config) if args.config else default_config()
    lines = [f"# {ln}" for ln in render_config(base).splitlines()]
    lines.append("seq_len,mpjpe,pa_mpjpe,mpvpe,accel_err")
    out_root = args.out_dir or os.path.join(data_root(), "sweep")
    for seq_len in values:
        overrides = dict(base)
        overrides["model.seq_len"] = seq_len
        # Sequences must cover the window or evaluation would skip them all.
        overrides["data.frames"] = max(base["data.frames"], seq_len)
        if args.steps > 0:
            overrides["train.steps"] = args.steps
            # Keep the schedule valid when the override shortens the run.
            overrides["train.warmup_steps"] = min(base["train.warmup_steps"], args.steps - 1)
        cfg = build_train_config(overrides)
        dataset = generate_dataset(cfg.data)
        result = train(cfg, dataset, os.path.join(out_root, f"T{seq_len}"))
        model, _, _ = restore_model(result.checkpoint_path)
        agg = evaluate(model, dataset, fps=args.fps).aggregate()
        if seq_len < 3:
            print(f"warning: seq_len={seq_len} cannot resolve acceleration; "
                  "ACC-ERR left empty", file=sys.stderr)
            acc = ""
        else:
            acc = f"{agg.accel_err:.9g}"
        lines.append(f"{seq_len},{agg.mpjpe:.9g},{agg.pa_mpjpe:.9g},{agg.mpvpe:.9g},{acc}")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def cmd_stitch_demo(args) -> int:
    model, cfg, _ = restore_model(args.ckpt)
    result = stitched_probe(model, seed=args.seed, reps=args.reps)
    out = args.out or os.path.join(data_root(), "stitch_deltas.csv")
    header = [f"checkpoint = {args.ckpt}", f"reps = {args.reps}", f"seam = {result.seam}"]
    header += cfg.echo.splitlines()
    _write_or_print(result.to_csv(header_lines=header), out)
    seam_frames = result.input_transitions()
    wide = result.wide_output_transitions()
    print(f"input transitions at {seam_frames}; "
          f"output transition spread over {len(wide)} frames: {wide}")
    return 0


def cmd_profile(args) -> int:
    cfg = _load_config(args.config)
    table = cost_table(cfg.model)
    if args.csv:
        _write_or_print(table.to_csv(header_lines=cfg.echo.splitlines()), args.out)
    else:
        _write_or_print(table.to_text(), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgtr", description="Dual-branch temporal mesh-recovery toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic feature sequences")
    p.add_argument("--out", help="output directory (default $DGTR_DATA_DIR/synth)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--sequences", type=int, default=4)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=2048)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="config file (defaults used when omitted)")
    p.add_argument("--data", help="directory of .dgtrfeat files (generated when omitted)")
    p.add_argument("--out", help="output directory (default $DGTR_DATA_DIR/run)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fps", type=float, default=None,
                   help="report acceleration error per second^2 instead of per frame^2")
    p.add_argument("--gt-as-pred", action="store_true",
                   help="score the ground truth against itself (pipeline fixture)")
    p.add_argument("--out", help="write the CSV report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference check of the gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--entries", type=int, default=24, help="entries checked per tensor")
    p.add_argument("--corrupt", help="bias this tensor's gradient to demonstrate detection")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("receptive-field", help="single-frame perturbation probe")
    p.add_argument("--config", help="config file (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the CSV table here instead of stdout")
    p.set_defaults(func=cmd_receptive_field)

    p = sub.add_parser("sweep-t", help="train/evaluate across window lengths")
    p.add_argument("--values", default="2,4,8,16,24,32", help="comma-separated window lengths")
    p.add_argument("--config", help="base config file")
    p.add_argument("--steps", type=int, default=30, help="training steps per window length")
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--out", help="write the CSV table here instead of stdout")
    p.add_argument("--out-dir", help="root for per-length run artifacts")
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("stitch-demo", help="discontinuity response of a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default $DGTR_DATA_DIR/stitch_deltas.csv)")
    p.set_defaults(func=cmd_stitch_demo)

    p = sub.add_parser("profile", help="closed-form parameter and FLOP counts")
    p.add_argument("--config", help="config file (defaults used when omitted)")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of aligned text")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_profile)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DgtrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
