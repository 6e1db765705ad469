"""Command-line entry point: ``emmix synth | train | eval | gradcheck | ablate``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or protocol
error, 3 numerical failure (including a failed gradient check).

Every command writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .attention import ConfigError
from .config import RunConfig, config_fields, parse_config
from .data import DEFAULT_DIFFICULTY, SchemaError, build_dataset, load_csv, random_profiles, save_csv, synthesize
from .evaluation import MetricError, ProtocolError, format_report, metrics, roc_export, score_verification
from .model import ABLATIONS, CheckpointError, EmMixformer, ablation_config, load_checkpoint, save_checkpoint
from .numerics import NumericalError
from .preprocessing import InputTooShortError, PreprocessConfig
from .selfcheck import SUITES, TOLERANCE, run_suites
from .siamese import InputLengthError
from .training import TrainConfig, TrainingError, train

log = logging.getLogger("emmixformer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "EMMIX_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, argv: list[str], seed: int | None, config: dict,
                   inputs: list, outputs: list) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def resolve_seed(flag: int | None, cfg: RunConfig | None = None) -> int:
    """``--seed`` wins, then the config file, then $EMMIX_SEED, then 0."""
    if flag is not None:
        return flag
    if cfg is not None and cfg.seed is not None:
        return cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _load_config(path) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands
def cmd_synth(args) -> int:
    for name in ("subjects", "sessions"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name} must be >= 1")
    if args.duration <= 0 or args.rate <= 0:
        raise UsageError("--duration and --rate must be positive")
    if not 0.0 <= args.difficulty <= 1.0:
        raise UsageError("--difficulty must lie in [0, 1]")
    seed = resolve_seed(args.seed)
    out = _out_dir(args.out)
    recs = synthesize(random_profiles(args.subjects, seed, args.difficulty), args.sessions,
                      args.duration, args.rate, seed)
    csv_path = out / "recordings.csv"
    save_csv(recs, csv_path)
    cfg = {k: getattr(args, k) for k in ("subjects", "sessions", "duration", "rate", "difficulty")}
    write_manifest(out, "synth", args.argv, seed, cfg, [], [csv_path])
    print(f"wrote {len(recs)} recordings to {csv_path}")
    return EXIT_OK


def _train_one(cfg: RunConfig, ds, seed: int, out: Path, name: str) -> tuple[EmMixformer, dict, list[Path]]:
    model = EmMixformer(cfg.model_for(len(ds.subjects), seed))
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": seed})
    result = train(model, ds, tcfg)
    log_path = out / f"{name}_log.csv"
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for r in result.history:
            w.writerow([r["epoch"], repr(r["loss"]), repr(r["accuracy"])])
    extra = {"preprocess": asdict(cfg.preprocess), "train": asdict(tcfg), "ablation": cfg.ablation,
             "final_loss": result.final_loss, "final_accuracy": result.final_accuracy}
    ckpt = out / f"{name}.ckpt"
    save_checkpoint(model, ckpt, ds.subjects, extra)
    return model, extra, [ckpt, log_path]


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = resolve_seed(args.seed, cfg)
    out = _out_dir(args.out)
    ds = build_dataset(load_csv(args.data), cfg.preprocess)
    _, extra, outputs = _train_one(cfg, ds, seed, out, "model")
    inputs = [Path(args.data)] + ([Path(args.config)] if args.config else [])
    write_manifest(out, "train", args.argv, seed, {"config": cfg.to_text()}, inputs, outputs)
    print(f"final_loss={extra['final_loss']!r} final_accuracy={extra['final_accuracy']!r}")
    print(f"checkpoint {outputs[0]} sha256={_sha256(outputs[0])}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, subjects, extra = load_checkpoint(args.model)
    prep = PreprocessConfig(**extra.get("preprocess", {}))
    ds = build_dataset(load_csv(args.data), prep)
    if sorted(ds.subjects) != sorted(subjects):
        raise ProtocolError(
            f"data subjects {sorted(ds.subjects)} do not match the checkpoint's {sorted(subjects)}")
    scores = score_verification(model, ds)
    report = metrics(scores)
    report_path = Path(args.report)
    out = _out_dir(args.out if args.out else report_path.parent)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(format_report(report))
    roc_path = out / "roc.csv"
    roc_export(scores, roc_path)
    write_manifest(out, "eval", args.argv, None, {"checkpoint_extra": extra},
                   [Path(args.model), Path(args.data)], [report_path, roc_path])
    print(format_report(report), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    names = [n.strip() for n in args.modules.split(",") if n.strip()] if args.modules else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise UsageError(f"unknown module(s) {unknown}; choose from {sorted(SUITES)}")
    seed = resolve_seed(args.seed)
    results = run_suites(names, seed)
    worst = 0.0
    for module, errs in results.items():
        for group, err in errs.items():
            flag = "ok" if err < TOLERANCE else "FAIL"
            print(f"{module:15s} {group:50s} {err:.3e} {flag}")
            worst = max(worst, err)
    print(f"max relative error {worst:.3e} (tolerance {TOLERANCE:g})")
    if args.out:
        out = _out_dir(args.out)
        res_path = out / "gradcheck.json"
        res_path.write_text(json.dumps(results, indent=1, sort_keys=True) + "\n")
        write_manifest(out, "gradcheck", args.argv, seed, {"modules": names}, [], [res_path])
    return EXIT_OK if worst < TOLERANCE else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    base = _load_config(args.config)
    seed = resolve_seed(args.seed, base)
    out = _out_dir(args.out)
    ds = build_dataset(load_csv(args.data), base.preprocess)
    rows, outputs = [], []
    for name in ABLATIONS:
        cfg = replace(base, model=ablation_config(name, base.model), ablation=name)
        log.info("ablation %s", name)
        model, extra, files = _train_one(cfg, ds, seed, out, name)
        report = metrics(score_verification(model, ds))
        rows.append((name, report, model.num_parameters(), extra["final_accuracy"]))
        outputs += files
    report_path = out / "ablation.txt"
    with open(report_path, "w") as fh:
        fh.write(f"{'config':22s} {'params':>9s} {'train_acc':>9s} {'eer':>8s} "
                 f"{'frr@0.1':>8s} {'frr@0.01':>8s} {'frr@0.001':>9s}\n")
        for name, rep, n_params, acc in rows:
            fh.write(f"{name:22s} {n_params:9d} {acc:9.4f} {rep['eer']:8.4f} "
                     f"{rep['frr@0.1']:8.4f} {rep['frr@0.01']:8.4f} {rep['frr@0.001']:9.4f}\n")
    outputs.append(report_path)
    inputs = [Path(args.data)] + ([Path(args.config)] if args.config else [])
    write_manifest(out, "ablate", args.argv, seed, {"config": base.to_text()}, inputs, outputs)
    print(report_path.read_text(), end="")
    return EXIT_OK


# ------------------------------------------------------------------ entry point
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="emmix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic gaze dataset")
    s.add_argument("--subjects", type=int, default=10)
    s.add_argument("--sessions", type=int, default=2)
    s.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    s.add_argument("--rate", type=float, default=50.0, help="sampling rate in Hz")
    s.add_argument("--difficulty", type=float, default=DEFAULT_DIFFICULTY,
                   help="0 spreads subject profiles fully, 1 makes them identical")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    keys = ", ".join(config_fields())
    t = sub.add_parser("train", help="train a model", epilog=f"config keys: {keys}")
    t.add_argument("--data", required=True, help="gaze CSV")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="cross-session verification metrics")
    e.add_argument("--model", required=True, help="checkpoint from 'train'")
    e.add_argument("--data", required=True, help="gaze CSV")
    e.add_argument("--report", required=True, help="metrics report path")
    e.add_argument("--out", help="directory for roc.csv and manifest (default: report's directory)")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient self-check")
    g.add_argument("--modules", help=f"comma-separated subset of {','.join(SUITES)} (default: all)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="optional directory for results and manifest")
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="train and evaluate every ablation configuration",
                       epilog=f"config keys: {keys}")
    a.add_argument("--data", required=True)
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"emmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"emmix: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, ProtocolError, CheckpointError, TrainingError, MetricError, InputTooShortError,
            InputLengthError, OSError, ValueError) as exc:
        print(f"emmix: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
