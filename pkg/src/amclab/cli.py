"""Command-line entry point: ``amclab <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Logs go to
standard error as ``timestamp level=... key=value`` lines.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from amclab import config as cfgmod
from amclab import channel as chan
from amclab import experiments as exp
from amclab.engine import GeniePredictor, run_link, summarize
from amclab.nn import CheckpointError, decode_checkpoint
from amclab.predictors import NoPredictor, load_predictor, save_predictor

log = logging.getLogger("amclab")

SUBCOMMANDS = ("gen-data", "train", "evaluate", "simulate", "experiment", "report", "grad-check", "inspect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s level=%(levelname)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _common(p):
    p.add_argument("--config", help="config file (key = value, sections, one include)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. --set train.epochs=10")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="amclab", description="Link-adaptation lab: channels, predictors, AMC loop, experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a dataset or trace file")
    _common(p)
    p.add_argument("--kind", choices=("dataset", "traces"), default="dataset")
    p.add_argument("--profile")
    p.add_argument("--speed-range", help="LO:HI km/h for datasets")
    p.add_argument("--velocity", type=float, help="km/h for traces")
    p.add_argument("--ttis", type=int, help="TTIs per trace")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a predictor and write a checkpoint")
    _common(p)
    p.add_argument("--model", help="transformer, rnn, lstm or gru (default model.kind)")
    p.add_argument("--data", help="training dataset file (generated from config if omitted)")
    p.add_argument("--val", help="validation dataset file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-out", help="loss curve CSV (default OUT.loss.csv)")

    p = sub.add_parser("evaluate", help="NMSE and link metrics per velocity")
    _common(p)
    p.add_argument("--checkpoint", help="predictor checkpoint; omit for the last-value baseline")
    p.add_argument("--test-dir", help="directory with pairs_v<V>.amct and traces_v<V>.amct files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output (stdout if omitted)")

    p = sub.add_parser("simulate", help="run the AMC loop over traces")
    _common(p)
    p.add_argument("--traces", "--trace", dest="traces", help="trace file (generated from config if omitted)")
    p.add_argument("--tm", type=int, help="measurement period in TTIs (timing.T_m)")
    p.add_argument("--td", type=int, help="feedback delay in TTIs (timing.T_d)")
    p.add_argument("--predictor", default="np", help="np, genie or a checkpoint path")
    p.add_argument("--velocity", type=float, default=60.0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-snr", type=float)
    p.add_argument("--out", required=True, help="per-TTI CSV log")

    p = sub.add_parser("experiment", help="run an experiment grid")
    _common(p)
    p.add_argument("kind", choices=exp.EXPERIMENT_KINDS)
    p.add_argument("--jobs", type=int, help="parallel workers (default: logical cores)")
    p.add_argument("--seeds", help="space-separated seeds (default eval.seeds)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="render a report CSV as a table and gnuplot data")
    p.add_argument("csv")
    p.add_argument("--out", help="text table output (stdout if omitted)")
    p.add_argument("--gnuplot", help="write a whitespace-separated .dat file here")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--tiny", action="store_true", help="tiny configuration (the only one supported)")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("inspect", help="print the header of a trace, dataset or checkpoint file")
    p.add_argument("file")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve(args, extra=None):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    overrides.update(extra or {})
    cfg = cfgmod.load(args.config, overrides)
    log.info("command=%s config_digest=%s", args.command, cfgmod.digest(cfg))
    return cfg


def _out_path(path):
    base = cfgmod.env_path("out_dir")
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _write(path, data):
    path = _out_path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)
    log.info("wrote=%s bytes=%d", path, len(data))
    return path


def cmd_gen_data(args):
    extra = {}
    if args.profile:
        extra["channel.profile"] = args.profile
    if args.speed_range:
        extra["train.speed_range"] = args.speed_range
    cfg = _resolve(args, extra)
    digest = cfgmod.digest(cfg)
    channel = exp.build_channel(cfg)
    timing = exp.build_timing(cfg)
    if args.kind == "dataset":
        ds = chan.sample_dataset(
            channel, args.count, args.seed, L=timing.L, T_m=timing.T_m, T_d=timing.T_d,
            speed_range=cfgmod.get_range(cfg, "train.speed_range"),
        )
        blob = chan.encode_dataset(ds, digest)
    else:
        ttis = args.ttis or cfgmod.get_int(cfg, "eval.trace_ttis")
        velocity = 60.0 if args.velocity is None else args.velocity
        traces = chan.generate_traces(replace(channel, velocity_kmh=velocity), ttis, args.count, args.seed)
        blob = chan.encode_traces(traces, digest, (timing.L, timing.T_m, timing.T_d), seed=args.seed)
    _write(args.out, blob)
    return 0


def _load_dataset(path):
    header, payload = chan.read_file(path)
    if header.kind != chan.KIND_DATASET:
        raise ValueError(f"{path} holds traces, expected a dataset")
    return payload


def cmd_train(args):
    extra = {"train.epochs": str(args.epochs)} if args.epochs is not None else {}
    cfg = _resolve(args, extra)
    digest = cfgmod.digest(cfg)
    seed = cfgmod.get_int(cfg, "train.seed") if args.seed is None else args.seed
    train_cfg = exp.build_train_config(cfg, seed)
    if args.data:
        train_set = _load_dataset(args.data)
        val_set = _load_dataset(args.val) if args.val else None
    else:
        train_set, val_set = exp.make_training_data(
            exp.build_channel(cfg), exp.build_timing(cfg), train_cfg, seed
        )
    model = exp.build_predictor(cfg, args.model, seed)
    if args.verbose:
        model.set_params(verbose=1)
    exp.train(model, train_set, val_set)
    out = _out_path(args.out)
    save_predictor(out, model, digest)
    log.info("wrote=%s best_epoch=%d", out, model.best_epoch_)
    lines = [f"# config_digest={digest} seed={seed}", "epoch,train_nmse,val_nmse"]
    for i, loss in enumerate(model.loss_curve_):
        val = model.val_curve_[i] if i < len(model.val_curve_) else float("nan")
        lines.append(f"{i},{loss:.9e},{val:.9e}")
    _write(args.loss_out or args.out + ".loss.csv", "\n".join(lines) + "\n")
    return 0


def _load_model(spec, L=None, K=None):
    if spec in (None, "np"):
        return NoPredictor()
    if spec == "genie":
        return GeniePredictor()
    return load_predictor(spec, L=L, K=K)


def load_test_dir(path, velocities):
    """Read ``pairs_v<V>.amct`` / ``traces_v<V>.amct`` for each velocity."""
    pairs, traces, absent = {}, {}, []
    for v in velocities:
        tag = f"{v:g}"
        p = os.path.join(path, f"pairs_v{tag}.amct")
        t = os.path.join(path, f"traces_v{tag}.amct")
        if not (os.path.exists(p) and os.path.exists(t)):
            absent.append(tag)
            continue
        pairs[v] = chan.read_file(p)[1]
        traces[v] = chan.read_file(t)[1]
    if absent:
        raise FileNotFoundError(f"missing test files for velocities: {', '.join(absent)} in {path}")
    return exp.TestSets(pairs, traces)


def cmd_evaluate(args):
    cfg = _resolve(args)
    digest = cfgmod.digest(cfg)
    setting = exp.Setting.from_config(cfg)
    tests = load_test_dir(args.test_dir, setting.velocities) if args.test_dir else setting.tests(args.seed)
    model = _load_model(args.checkpoint, setting.timing.L, setting.channel.K)
    rows = exp.evaluate(model, tests, setting.timing, setting.link, setting.velocities, seed=args.seed)
    report = exp.ExperimentReport(
        "evaluate", ["velocity_kmh", "predictor"], list(exp.LINK_METRICS), seeds=[args.seed], config_digest=digest,
    )
    name = "np" if args.checkpoint is None else os.path.basename(args.checkpoint)
    report.rows = [{"seed": args.seed, "velocity_kmh": r.velocity_kmh, "predictor": name, **exp._metric_row(r)} for r in rows]
    if args.out:
        _write(args.out, report.to_csv())
    sys.stdout.write(report.to_text())
    return 0


def cmd_simulate(args):
    extra = {}
    if args.tm is not None:
        extra["timing.T_m"] = str(args.tm)
    if args.td is not None:
        extra["timing.T_d"] = str(args.td)
    cfg = _resolve(args, extra)
    digest = cfgmod.digest(cfg)
    timing = exp.build_timing(cfg)
    link = exp.build_link(cfg)
    if args.traces:
        header, traces = chan.read_file(args.traces)
        if header.kind != chan.KIND_TRACES:
            raise ValueError(f"{args.traces} holds a dataset, expected traces")
    else:
        channel = replace(exp.build_channel(cfg), velocity_kmh=args.velocity)
        traces = chan.generate_traces(channel, cfgmod.get_int(cfg, "eval.trace_ttis"), args.count, args.seed)
    model = _load_model(args.predictor, timing.L, traces[0].values.shape[1])
    logs = [
        run_link(tr, model, timing, link, seed=args.seed * 1_000_003 + i, noise_snr_db=args.noise_snr)
        for i, tr in enumerate(traces)
    ]
    parts = [f"# config_digest={digest} seed={args.seed} predictor={args.predictor}\n"]
    for i, g in enumerate(logs):
        csv_text = g.to_csv()
        if i:
            csv_text = csv_text.split("\n", 1)[1]
        parts.append(csv_text)
    _write(args.out, "".join(parts))
    s = summarize(logs, group_keys=())
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in s.as_row().items()))
    return 0


def cmd_experiment(args):
    cfg = _resolve(args)
    seeds = [int(s) for s in args.seeds.split()] if args.seeds else None
    report = exp.run_experiment(args.kind, cfg, jobs=args.jobs, seeds=seeds)
    stem = os.path.join(args.out, args.kind)
    _write(stem + ".csv", report.to_csv())
    _write(stem + ".txt", report.to_text())
    sys.stdout.write(report.to_text())
    return 0


def render_report(text):
    """Aggregate a report CSV over seeds into an aligned table and gnuplot rows."""
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    columns, rows = exp.read_report_csv("\n".join(lines) + "\n")
    if not rows:
        raise ValueError("report has no rows")
    fixed = {"experiment", "config_digest", "seed"}
    numeric, keys = [], []
    for c in columns:
        if c in fixed:
            continue
        try:
            [float(r[c]) for r in rows]
            numeric.append(c)
        except ValueError:
            keys.append(c)
    # a numeric condition column (velocity, SNR, fraction) stays a key
    for c in list(numeric):
        if c.endswith(("_kmh", "_db", "fraction")) and not c.startswith("nmse"):
            numeric.remove(c)
            keys.append(c)
    keys = [c for c in columns if c in keys]
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    table, dat = [], []
    for key, members in groups.items():
        means = [float(np.mean([float(m[c]) for m in members])) for c in numeric]
        table.append(list(key) + [exp._fmt(v) for v in means])
        dat.append(" ".join([f'"{k}"' if not _is_number(k) else k for k in key] + [f"{v:.9g}" for v in means]))
    header = keys + numeric
    name = rows[0].get("experiment", "report")
    digest = rows[0].get("config_digest", "")
    seeds = sorted({r.get("seed", "") for r in rows})
    title = f"{name}  (config {digest}, seeds {' '.join(seeds)}; mean over seeds)"
    text_out = "\n".join([title] + exp.render_table(header, table)) + "\n"
    dat_out = f"# {name} config_digest={digest}\n# " + " ".join(header) + "\n" + "\n".join(dat) + "\n"
    return text_out, dat_out


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_report(args):
    with open(args.csv) as fh:
        text_out, dat_out = render_report(fh.read())
    if args.out:
        _write(args.out, text_out)
    else:
        sys.stdout.write(text_out)
    if args.gnuplot:
        _write(args.gnuplot, dat_out)
    return 0


def cmd_grad_check(args):
    from amclab.gradsuite import run_suite

    results, elapsed = run_suite(tol=args.tol)
    worst = max(r.max_rel_err for r in results)
    for r in results:
        log.info("case=%s max_rel_err=%.3e checked=%d passed=%s", r.name, r.max_rel_err, r.checked, bool(r.passed))
    print(f"max_rel_err={worst:.3e} cases={len(results)} seconds={elapsed:.2f}")
    return 0 if worst < args.tol else 2


def cmd_inspect(args):
    with open(args.file, "rb") as fh:
        blob = fh.read()
    magic = blob[:4]
    if magic == chan.AMCT_MAGIC:
        h, _ = chan.decode_header(blob)
        fields = {
            "format": "AMCT", "kind": h.kind_name, "count": h.count, "rows": h.rows, "K": h.K,
            "L": h.L, "T_m": h.T_m, "T_d": h.T_d, "tti_us": h.tti_us,
            "speed_range_kmh": f"{h.velocity_lo_mm_s * 3.6 / 1000:.1f}:{h.velocity_hi_mm_s * 3.6 / 1000:.1f}",
            "seed": h.seed, "profile": h.profile_name, "config_digest": h.digest,
            "sha256_16": chan.blob_digest(blob),
        }
    elif magic == b"AMCK":
        meta, tensors = decode_checkpoint(blob)
        fields = {
            "format": "AMCK", "kind": meta.get("kind"), "L": meta.get("L"), "K": meta.get("K"),
            "tensors": len(tensors), "values": sum(a.size for _, a, _ in tensors),
            "trainable_values": sum(a.size for _, a, t in tensors if t),
            "normalization_version": meta.get("normalization_version"),
            "best_epoch": meta.get("best_epoch"), "config_digest": meta.get("config_digest", ""),
            "sha256_16": chan.blob_digest(blob),
        }
    else:
        first = blob.split(b"\n", 1)[0].decode("utf-8", "replace")
        if first.startswith("# config_digest="):
            fields = {"format": "CSV", **dict(kv.split("=", 1) for kv in first[2:].split())}
        else:
            raise ValueError(f"{args.file}: unrecognized file format (magic {magic!r})")
    for k, v in fields.items():
        print(f"{k}={v}")
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
    "grad-check": cmd_grad_check,
    "inspect": cmd_inspect,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        sys.stderr.write(parser.format_help())
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        sys.stderr.write(f"{err}\n")
        return 1
    if args.command is None:
        sys.stderr.write(parser.format_help())
        return 1
    _setup_logging(getattr(args, "verbose", False))
    try:
        return HANDLERS[args.command](args)
    except (UsageError, cfgmod.ConfigError) as err:
        log.error("command=%s usage_error=%r", args.command, str(err))
        sys.stderr.write(parser.format_usage())
        return 1
    except (OSError, ValueError, CheckpointError, FloatingPointError, RuntimeError) as err:
        log.error("command=%s failure=%r", args.command, str(err))
        return 2


if __name__ == "__main__":
    sys.exit(main())
