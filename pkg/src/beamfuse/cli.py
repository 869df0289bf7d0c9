"""Operator entry points: generate | train | eval | gradcheck | report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from .checkpoint import CheckpointError, read_checkpoint
from .config import ConfigError, echo_config, load_config
from .dataio import DataError, read_dataset, write_dataset
from .evaluate import PROTOCOLS, load_model, run_evaluation
from .gradcheck import micro_config, run_gradcheck
from .scenario import SceneParams, generate_windows
from .train import train_model

DATA_ENV = "BEAMFUSE_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beamfuse",
                     description="Multimodal beam prediction workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the relevant seed")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override a single config key")

    g = sub.add_parser("generate", help="synthesize a dataset")
    common(g)
    g.add_argument("--out", required=True, help="output dataset directory")

    t = sub.add_parser("train", help="train a model")
    common(t)
    t.add_argument("--data", help=f"dataset dir (default ${DATA_ENV})")
    t.add_argument("--out", required=True, help="run directory")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--data", help=f"dataset dir (default ${DATA_ENV})")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--protocol", default="all",
                   choices=list(PROTOCOLS) + ["all"])

    c = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(c)
    c.add_argument("--coords", type=int, default=50)

    r = sub.add_parser("report", help="merge run CSVs into one long table")
    r.add_argument("runs", nargs="+", help="run directories")
    r.add_argument("--out", required=True)
    return parser


def _resolve_config(args, seed_key: str | None) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects K=V, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.seed is not None and seed_key:
        overrides[seed_key] = str(args.seed)
    return load_config(args.config, overrides)


def _data_dir(args) -> Path:
    raw = getattr(args, "data", None) or os.environ.get(DATA_ENV)
    if not raw:
        raise UsageError(
            f"no dataset directory: pass --data or set ${DATA_ENV}")
    return Path(raw)


def _split_dir(root: Path, split: str) -> Path:
    cand = root / split
    if (cand / "manifest.csv").exists():
        return cand
    if (root / "manifest.csv").exists():
        return root
    raise DataError(f"no manifest under {root} or {cand}")


# ----------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _resolve_config(args, "scene.seed")
    out = Path(args.out)
    scene = SceneParams.from_config(cfg)
    train, test = generate_windows(scene, cfg["scene.seed"])
    write_dataset(train, out / "train")
    write_dataset(test, out / "test")
    echo_config(cfg, out)
    tags = Counter(w.scenario for w in train + test)
    lines = [f"train_windows {len(train)}", f"test_windows {len(test)}"]
    lines += [f"scenario {k} {v}" for k, v in sorted(tags.items())]
    (out / "generation_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args, "train.seed")
    data = _split_dir(_data_dir(args), "train")
    windows = read_dataset(data)
    summary = train_model(cfg, windows, args.out)
    print(f"trained {summary['epochs']} epochs, final loss "
          f"{summary['final_loss']:.4f}, best val top1 "
          f"{summary['best_val_top1']:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args, "eval.seed")
    data = _split_dir(_data_dir(args), "test")
    windows = read_dataset(data)
    model = load_model(cfg, read_checkpoint(args.checkpoint))
    protocols = list(PROTOCOLS) if args.protocol == "all" else [args.protocol]
    echo_config(cfg, args.out)
    summary = run_evaluation(model, cfg, windows, args.out, protocols)
    for protocol, points in summary.items():
        for x, top1 in points.items():
            print(f"{protocol} {x}: top1 {top1:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    overrides = {}
    for item in args.set:
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg = micro_config(overrides) if args.config is None else \
        load_config(args.config, overrides)
    report = run_gradcheck(seed=args.seed or 0, n_coords=args.coords,
                           config=cfg)
    for path, worst in sorted(report.worst_by_path().items()):
        print(f"{path}: {worst:.3e}")
    print(f"max relative error {report.max_rel_error:.3e} over "
          f"{len(report.coords)} coordinates "
          f"({'PASS' if report.passed else 'FAIL'})")
    return 0 if report.passed else 3


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["run,protocol,x,metric,value"]
    warned = False
    for run in args.runs:
        run_dir = Path(run)
        name = run_dir.name
        found = False
        epochs = run_dir / "epochs.csv"
        if epochs.exists():
            found = True
            header, *data = epochs.read_text().strip().splitlines()
            cols = header.split(",")
            for line in data:
                vals = dict(zip(cols, line.split(",")))
                for metric in cols[1:]:
                    rows.append(f"{name},train,{vals['epoch']},{metric},"
                                f"{vals[metric]}")
        for protocol in PROTOCOLS:
            path = run_dir / f"{protocol}.csv"
            if not path.exists():
                continue
            found = True
            header, *data = path.read_text().strip().splitlines()
            cols = header.split(",")
            for line in data:
                vals = dict(zip(cols, line.split(",")))
                if protocol == "full":
                    x = vals["split"]
                elif vals.get("split") != "all":
                    continue
                else:
                    x = vals[cols[0]]
                for metric in ("top1", "top3", "top5", "dba"):
                    rows.append(f"{name},{protocol},{x},{metric},{vals[metric]}")
        if not found:
            print(f"warning: no report inputs in {run_dir}", file=sys.stderr)
            warned = True
    (out / "report.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {len(rows) - 1} rows to {out / 'report.csv'}"
          + (" (with warnings)" if warned else ""))
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
