"""Batch front end: ``vpbridge {gen-data,train,sample,eval,verify}``.

Settings come from a flat ``key = value`` file given with ``--config``; any
key can be overridden by the flag of the same name (underscores become
dashes).  Exit codes: 0 success, 1 usage, 2 runtime failure, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .baseline import DiffusionSchedule, ddim_sample
from .data import (
    EvalReport,
    GenSpec,
    RemovalTriplet,
    evaluate,
    generate_triplet,
    read_dataset,
    read_triplet,
    write_dataset,
)
from .model import VelocityModel, frames_of, make_condition
from .sampler import SamplerConfig, sample
from .schedule import NoiseSchedule
from .tensorio import FormatError, read_checkpoint, read_tensor, write_checkpoint, write_tensor
from .training import DivergenceError, LossKind, TrainConfig, train
from .verify import CHECKS, run_checks

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

DEFAULTS = {
    "beta_min": 0.01,
    "beta_max": 50.0,
    "normalized": True,
    "paradigm": "bridge",
    "lr": 1e-3,
    "weight_decay": 0.0,
    "batch_size": 8,
    "total_steps": 2000,
    "steps_infer": 50,
    "t_clamp_hi": 1.0 - 1e-4,
    "seed": 0,
    "F": 4,
    "H": 16,
    "W": 16,
    "dataset_dir": "data",
    "checkpoint": "model.brw",
    "amm_enabled": True,
}

PARADIGMS = ("bridge", "diffusion")


class UsageError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            return _parse_bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def load_config(path=None, overrides=None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        cfg.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = _coerce(key, value)
    if cfg["paradigm"] not in PARADIGMS:
        raise UsageError(f"paradigm must be one of {PARADIGMS}, got {cfg['paradigm']!r}")
    return cfg


def schedule_from(cfg) -> NoiseSchedule:
    return NoiseSchedule(cfg["beta_min"], cfg["beta_max"], normalized=cfg["normalized"])


def train_config_from(cfg) -> TrainConfig:
    kind = LossKind.BRIDGE_VELOCITY if cfg["paradigm"] == "bridge" else LossKind.DIFFUSION_NOISE
    return TrainConfig(
        lr=cfg["lr"],
        weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"],
        total_steps=cfg["total_steps"],
        t_clamp_hi=cfg["t_clamp_hi"],
        seed=cfg["seed"],
        loss_kind=kind,
        amm=cfg["amm_enabled"],
    )


# -- subcommands -------------------------------------------------------------


def cmd_gen_data(cfg, count: int, variant: str = "normal", out=sys.stdout) -> Path:
    spec = GenSpec(frames=cfg["F"], height=cfg["H"], width=cfg["W"], seed=cfg["seed"], large=variant == "large")
    root = Path(cfg["dataset_dir"])
    triplets = [generate_triplet(spec, i) for i in range(count)]
    try:
        write_dataset(root, triplets)
    except OSError as exc:
        raise RuntimeError(f"cannot write dataset to {root}: {exc}") from None
    print(f"wrote {count} {variant} triplets to {root}", file=out)
    return root


def default_loss_csv(checkpoint) -> Path:
    return Path(str(checkpoint) + ".loss.csv")


def cmd_train(cfg, loss_csv=None, out=sys.stdout) -> Path:
    dataset = read_dataset(cfg["dataset_dir"])
    params, curve = train(dataset, train_config_from(cfg), schedule_from(cfg))
    ckpt = Path(cfg["checkpoint"])
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(ckpt, params)
    loss_csv = Path(loss_csv) if loss_csv else default_loss_csv(ckpt)
    with open(loss_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows((step, repr(loss)) for step, loss in curve)
    print(f"trained {cfg['paradigm']} for {len(curve)} steps -> {ckpt}", file=out)
    return ckpt


def _resolve_input(cfg, spec: str):
    """Return (index, source, mask, target-or-None) for an index or a *_src.brt path."""
    if spec.isdigit():
        idx = int(spec)
        tr = read_triplet(cfg["dataset_dir"], idx)
        return idx, tr.source, tr.mask, tr.target
    path = Path(spec)
    if not path.name.endswith("_src.brt"):
        raise UsageError(f"--input must be an index or a *_src.brt path, got {spec!r}")
    stem = path.name[: -len("_src.brt")]
    source = read_tensor(path)
    mask = read_tensor(path.with_name(f"{stem}_mask.brt"))
    tgt_path = path.with_name(f"{stem}_tgt.brt")
    target = read_tensor(tgt_path) if tgt_path.exists() else None
    idx = int(stem) if stem.isdigit() else stem
    return idx, source, mask, target


def _append_metrics(path: Path, row: dict):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        if new:
            w.writeheader()
        w.writerow(row)


def _out_name(idx) -> str:
    return f"{idx:04d}_out.brt" if isinstance(idx, int) else f"{idx}_out.brt"


def cmd_sample(cfg, input_spec: str, steps=None, out_dir=None, metrics_csv=None, out=sys.stdout) -> Path:
    ckpt = Path(cfg["checkpoint"])
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint {ckpt} does not exist")
    params = read_checkpoint(ckpt)
    idx, source, mask, target = _resolve_input(cfg, input_spec)
    if frames_of(params) != source.shape[0]:
        raise ValueError(
            f"checkpoint expects inputs of shape ({frames_of(params)}, H, W) "
            f"but the input has shape {source.shape}"
        )
    steps = int(steps or cfg["steps_infer"])
    s = schedule_from(cfg)
    cond = make_condition(mask, source)
    model = VelocityModel(params)
    if cfg["paradigm"] == "bridge":
        sc = SamplerConfig(steps=steps, t_max=min(cfg["t_clamp_hi"], 1.0), seed=cfg["seed"])
        output = sample(model, source, cond, sc, s)
    else:
        output = ddim_sample(model, source, cond, steps, DiffusionSchedule(), seed=cfg["seed"], clip=1.0)

    out_dir = Path(out_dir or cfg["dataset_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / _out_name(idx)
    write_tensor(out_path, output)
    if target is not None:
        report = evaluate(output, RemovalTriplet(source, target, mask))
        row = {"index": idx, "paradigm": cfg["paradigm"], "steps": steps, "seed": cfg["seed"], **report.as_row()}
        _append_metrics(Path(metrics_csv) if metrics_csv else out_dir / "metrics.csv", row)
    print(f"wrote {out_path}", file=out)
    return out_path


def cmd_eval(cfg, input_spec: str, output_path=None, metrics_csv=None, out=sys.stdout) -> EvalReport:
    idx, source, mask, target = _resolve_input(cfg, input_spec)
    if target is None:
        raise FileNotFoundError(f"no target tensor for input {input_spec}")
    output_path = Path(output_path) if output_path else Path(cfg["dataset_dir"]) / _out_name(idx)
    report = evaluate(read_tensor(output_path), RemovalTriplet(source, target, mask))
    row = {"index": idx, **report.as_row()}
    w = csv.DictWriter(out, fieldnames=list(row))
    w.writeheader()
    w.writerow(row)
    if metrics_csv:
        _append_metrics(Path(metrics_csv), row)
    return report


def cmd_verify(cfg, only=None, out=sys.stdout) -> bool:
    results = run_checks(schedule_from(cfg), only=only)
    for r in results:
        print(r.line(), file=out)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed", file=out)
    return ok


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    group = common.add_argument_group("config overrides")
    for key, default in DEFAULTS.items():
        group.add_argument(_flag(key), dest=f"cfg_{key}", default=None, metavar="VALUE",
                           help=f"override {key} (default {default})")

    parser = _Parser(prog="vpbridge", description="Bridge-model object removal on synthetic clips.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic triplet dataset")
    p.add_argument("--count", type=int, required=True, help="number of triplets")
    p.add_argument("--variant", choices=("normal", "large"), default="normal", help="blob size regime")

    p = sub.add_parser("train", parents=[common], help="train a model on dataset_dir")
    p.add_argument("--loss-csv", help="loss curve path (default <checkpoint>.loss.csv)")

    p = sub.add_parser("sample", parents=[common], help="remove the object from one input")
    p.add_argument("--input", required=True, help="dataset index or path to a *_src.brt file")
    p.add_argument("--steps", type=int, help="sampling steps (default steps_infer)")
    p.add_argument("--out-dir", help="where NNNN_out.brt goes (default dataset_dir)")
    p.add_argument("--metrics-csv", help="metrics file to append to (default <out-dir>/metrics.csv)")

    p = sub.add_parser("eval", parents=[common], help="score an output tensor against its triplet")
    p.add_argument("--input", required=True, help="dataset index or path to a *_src.brt file")
    p.add_argument("--output", help="output tensor (default dataset_dir/NNNN_out.brt)")
    p.add_argument("--metrics-csv", help="also append the row to this file")

    p = sub.add_parser("verify", parents=[common], help="run the numerical check battery")
    p.add_argument("--only", action="append", choices=sorted(CHECKS), help="run just this check (repeatable)")
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
        cfg = load_config(args.config, overrides)
        if args.command == "gen-data":
            if args.count < 1:
                raise UsageError("--count must be >= 1")
            cmd_gen_data(cfg, args.count, args.variant, out=out)
        elif args.command == "train":
            cmd_train(cfg, args.loss_csv, out=out)
        elif args.command == "sample":
            cmd_sample(cfg, args.input, args.steps, args.out_dir, args.metrics_csv, out=out)
        elif args.command == "eval":
            cmd_eval(cfg, args.input, args.output, args.metrics_csv, out=out)
        elif args.command == "verify":
            return EXIT_OK if cmd_verify(cfg, args.only, out=out) else EXIT_VERIFY
    except UsageError as exc:
        print(f"vpbridge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, FormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"vpbridge: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
