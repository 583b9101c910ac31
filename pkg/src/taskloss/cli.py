"""Command-line entry point: ``taskloss {train,benchmark,eval,gradcheck}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

import argparse
import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import gradcheck as gc
from .config import ExperimentConfig
from .engine import benchmark, train_model
from .errors import CheckpointError, ConfigError, ParseError, TasklossError
from .nn import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

RESULTS_HEADER = ["model", "seed", "split", "reward", "threshold", "best_epoch"]
EPOCHS_HEADER = ["model", "seed", "epoch", "val_reward", "mean_surrogate", "mean_true_loss", "mean_discrepancy"]
BENCH_HEADER = ["model", "mean_reward", "stderr", "n", "seeds"]


class UsageError(Exception):
    pass


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _result_rows(runs):
    rows = []
    for r in runs:
        rows.append([r.model, r.seed, "val", r.val_reward, r.threshold, r.best_epoch])
        rows.append([r.model, r.seed, "test", r.test_reward, r.threshold, r.best_epoch])
    return rows


def _epoch_rows(runs):
    return [
        [r.model, r.seed, e.epoch, e.val_reward, e.mean_surrogate, e.mean_true_loss, e.mean_discrepancy]
        for r in runs
        for e in r.epochs
    ]


def _out_dir(args, cfg):
    out = args.out or cfg.out
    if not out:
        raise UsageError("--out is required (or set \"out\" in the config)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _checkpoint_name(model, seed):
    return f"{model}_seed{seed}.tlf"


def cmd_train(args):
    cfg = ExperimentConfig.load(args.config)
    if cfg.model is None:
        raise ConfigError("model", "train needs a single \"model\"")
    out = _out_dir(args, cfg)
    splits = cfg.make_splits()
    task = cfg.make_task()
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    def run_seed(seed):
        return train_model(cfg.model, cfg.train, splits, task, seed)

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        runs = list(pool.map(run_seed, cfg.train.seeds))
    # all file writes stay on this thread
    for run in runs:
        meta = {
            "config": cfg.to_dict(),
            "model": run.model,
            "seed": run.seed,
            "test_reward": run.test_reward,
            "threshold": run.threshold,
            "best_epoch": run.best_epoch,
        }
        save_checkpoint(ckpt_dir / _checkpoint_name(run.model, run.seed), run.predictor, meta)
        print(f"{run.model} seed={run.seed} best_epoch={run.best_epoch} test_reward={run.test_reward:.6g}"
              + ("" if run.threshold is None else f" threshold={run.threshold:.6g}"))
    (out / "config.json").write_text(cfg.to_json())
    _write_csv(out / "results.csv", RESULTS_HEADER, _result_rows(runs))
    _write_csv(out / "epochs.csv", EPOCHS_HEADER, _epoch_rows(runs))
    return EXIT_OK


def format_table(rows):
    lines = [f"{'model':<18} {'mean_reward':>12} {'stderr':>10} {'n':>3}"]
    for r in rows:
        lines.append(f"{r.model:<18} {r.mean_reward:>12.4f} {r.stderr:>10.4f} {len(r.seeds):>3}")
    return "\n".join(lines) + "\n"


def cmd_benchmark(args):
    cfg = ExperimentConfig.load(args.config)
    if len(cfg.models) < 2:
        raise ConfigError("models", f"benchmark needs at least 2 model variants, got {len(cfg.models)}")
    if len(cfg.train.seeds) < 2:
        raise ConfigError("train.seeds", "benchmark needs at least 2 seeds for a standard error")
    out = _out_dir(args, cfg)
    splits = cfg.make_splits()
    task = cfg.make_task()
    rows = benchmark(cfg.models, cfg.train, splits, task, threads=args.threads)
    runs = [r for row in rows for r in row.runs]
    (out / "config.json").write_text(cfg.to_json())
    _write_csv(out / "results.csv", RESULTS_HEADER, _result_rows(runs))
    _write_csv(out / "epochs.csv", EPOCHS_HEADER, _epoch_rows(runs))
    _write_csv(
        out / "benchmark.csv",
        BENCH_HEADER,
        [[r.model, r.mean_reward, r.stderr, len(r.seeds), " ".join(map(str, r.seeds))] for r in rows],
    )
    table = format_table(rows)
    (out / "benchmark.txt").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_eval(args):
    ckpt = args.checkpoint
    if ckpt is None and args.config:
        ckpt = ExperimentConfig.load(args.config).checkpoint
    if not ckpt:
        raise UsageError("eval needs --checkpoint (or \"checkpoint\" in the config)")
    model, meta = load_checkpoint(ckpt)
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif "config" in meta:
        cfg = ExperimentConfig.from_dict(meta["config"])
    else:
        raise UsageError("checkpoint carries no config; pass --config")
    splits = cfg.make_splits()
    task = cfg.make_task()
    reward, threshold, pred = task.evaluate(model, splits.val, splits.test)
    print(f"reward={reward!r}")
    if threshold is not None:
        print(f"threshold={threshold!r}")
    out = Path(args.out or cfg.out or Path(ckpt).parent)
    out.mkdir(parents=True, exist_ok=True)
    labels = splits.test.labels
    _write_csv(out / "predictions.csv", ["index", "prediction", "label"],
               [[i, float(p), float(y)] for i, (p, y) in enumerate(zip(pred, labels))])
    return EXIT_OK


def cmd_gradcheck(args):
    results = gc.run_suite()
    for name, err in results:
        status = "ok" if err < gc.TOLERANCE else "FAIL"
        print(f"{name:<20} {err:.3e} {status}")
    bad = gc.failures(results)
    if bad:
        print(f"gradcheck failed: {', '.join(bad)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"train": cmd_train, "benchmark": cmd_benchmark, "eval": cmd_eval, "gradcheck": cmd_gradcheck}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="taskloss", description="Learned task-loss training and benchmarking.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("train", "benchmark", "eval"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "eval")
        s.add_argument("--out")
        s.add_argument("--threads", type=int, default=1)
        if name == "eval":
            s.add_argument("--checkpoint")
    sub.add_parser("gradcheck")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ParseError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TasklossError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
