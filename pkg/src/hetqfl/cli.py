"""Command-line experiment runner.

    hetqfl --config exp.yaml [--seed S] [--out DIR] [--algo NAME] [--quiet]
    hetqfl --compare RUN_DIR RUN_DIR [...] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, dump_config, parse_config
from .experiment import ExperimentResult, run_experiment
from .fed import RoundRecord, summarize

log = logging.getLogger("hetqfl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

JSONL_KEYS = (
    "round",
    "seed",
    "algo",
    "client_id",
    "train_loss",
    "val_acc",
    "participated",
    "weight",
    "test_acc",
    "test_loss",
    "num_participants",
    "tau",
)
ROUNDS_CSV_COLUMNS = (
    "round",
    "algo",
    "n_seeds",
    "test_acc_mean",
    "test_acc_std",
    "test_loss_mean",
    "test_loss_std",
    "participants_mean",
)
COMPARISON_COLUMNS = (
    "algo",
    "n_seeds",
    "final_acc_mean",
    "final_acc_std",
    "final_loss_mean",
    "final_loss_std",
)


def _num(x):
    """JSON-safe float: NaN becomes null."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def record_lines(algo: str, seed: int, record: RoundRecord) -> list[dict]:
    """One line per client followed by a round summary line (client_id null)."""
    lines = []
    for i, (loss, acc, part, w) in enumerate(
        zip(record.train_loss, record.val_acc, record.participated, record.weights)
    ):
        lines.append(
            dict(
                round=record.round,
                seed=seed,
                algo=algo,
                client_id=i,
                train_loss=_num(loss),
                val_acc=_num(acc),
                participated=bool(part),
                weight=_num(w),
                test_acc=None,
                test_loss=None,
                num_participants=None,
                tau=_num(record.tau),
            )
        )
    lines.append(
        dict(
            round=record.round,
            seed=seed,
            algo=algo,
            client_id=None,
            train_loss=_num(sum(record.train_loss) / len(record.train_loss)),
            val_acc=_num(sum(record.val_acc) / len(record.val_acc)),
            participated=None,
            weight=None,
            test_acc=_num(record.test_acc),
            test_loss=_num(record.test_loss),
            num_participants=record.num_participants,
            tau=_num(record.tau),
        )
    )
    return lines


class MetricWriter:
    """Single funnel for every metrics file of a run."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.timing: dict[str, float] = {}

    def _algo_dir(self, algo: str) -> Path:
        d = self.out_dir / algo
        d.mkdir(parents=True, exist_ok=True)
        return d

    def start(self, algo: str, seed: int) -> None:
        (self._algo_dir(algo) / f"seed_{seed}.jsonl").write_text("")

    def round(self, algo: str, seed: int, record: RoundRecord, clients) -> None:
        path = self._algo_dir(algo) / f"seed_{seed}.jsonl"
        with path.open("a") as fh:
            for line in record_lines(algo, seed, record):
                fh.write(json.dumps(line, sort_keys=False) + "\n")
        key = f"{algo}/seed_{seed}"
        self.timing[key] = self.timing.get(key, 0.0) + record.wall_time

    def finish(self, config: ExperimentConfig, result: ExperimentResult) -> str:
        for algo in config.algorithms:
            runs = result.by_algo(algo)
            rows = []
            for k in range(config.rounds):
                recs = [r.records[k] for r in runs if len(r.records) > k]
                acc = summarize([r.test_acc for r in recs])
                loss = summarize([r.test_loss for r in recs])
                parts = sum(r.num_participants for r in recs) / len(recs)
                rows.append((k, algo, len(recs), *acc, *loss, parts))
            _write_csv(self._algo_dir(algo) / "rounds.csv", ROUNDS_CSV_COLUMNS, rows)
        rows = []
        for algo in config.algorithms:
            n = len([r for r in result.by_algo(algo) if r.records])
            rows.append((algo, n, *result.final_accuracy(algo), *result.final_loss(algo)))
        _write_csv(self.out_dir / "comparison.csv", COMPARISON_COLUMNS, rows)
        (self.out_dir / "timing.json").write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")
        return format_table(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def format_table(rows) -> str:
    lines = [f"{'algorithm':<12} {'seeds':>5} {'final acc (%)':>18} {'final loss':>16}"]
    for algo, n, am, asd, lm, lsd in rows:
        lines.append(f"{algo:<12} {n:>5} {100 * am:>9.2f} ± {100 * asd:<6.2f} {lm:>8.4f} ± {lsd:<6.4f}")
    return "\n".join(lines)


def run(config: ExperimentConfig, quiet: bool = False) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "effective_config.json")
    writer = MetricWriter(out)
    for algo in config.algorithms:
        for seed in config.seeds:
            writer.start(algo, seed)

    def on_round(algo, seed, record, clients):
        writer.round(algo, seed, record, clients)
        if not quiet:
            log.info(
                "%s seed=%d round=%d test_acc=%.4f participants=%d",
                algo,
                seed,
                record.round,
                record.test_acc,
                record.num_participants,
            )

    result = run_experiment(config, on_round)
    table = writer.finish(config, result)
    if not quiet:
        print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Comparison of finished runs
# ---------------------------------------------------------------------------


def _read_run(run_dir: Path) -> dict[int, list[dict]]:
    """round -> summary lines (one per seed) from every seed_*.jsonl of a run."""
    files = sorted(run_dir.glob("seed_*.jsonl"))
    if not files:
        raise FileNotFoundError(f"{run_dir}: no seed_*.jsonl files")
    rounds: dict[int, list[dict]] = {}
    for f in files:
        for line in f.read_text().splitlines():
            rec = json.loads(line)
            if rec["client_id"] is None:
                rounds.setdefault(rec["round"], []).append(rec)
    return rounds


def compare(run_dirs, out_dir=None) -> str:
    """Per-round mean accuracy/loss curves and final-round deltas (percentage
    points) of every run against the first one."""
    dirs = [Path(d) for d in run_dirs]
    if len(dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    missing = [str(d) for d in dirs if not d.is_dir()]
    if missing:
        raise FileNotFoundError(f"run directory not found: {', '.join(missing)}")
    runs = [_read_run(d) for d in dirs]
    lengths = [len(r) for r in runs]
    common = min(lengths)
    if len(set(lengths)) > 1:
        log.warning("round counts differ (%s); comparing the first %d rounds", lengths, common)
    names = [d.name if d.name else str(d) for d in dirs]

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else float("nan")

    curve_rows = []
    for k in range(common):
        row = [k]
        for r in runs:
            row += [mean(x["test_acc"] for x in r[k]), mean(x["test_loss"] for x in r[k])]
        curve_rows.append(row)
    columns = ["round"] + [f"{n}_{m}" for n in names for m in ("test_acc", "test_loss")]

    finals = [(mean(x["test_acc"] for x in r[common - 1]), mean(x["test_loss"] for x in r[common - 1])) for r in runs] if common else []
    delta_rows = []
    for name, (acc, loss) in zip(names, finals):
        delta_rows.append((name, acc, 100 * (acc - finals[0][0]), loss, loss - finals[0][1]))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "compare_curves.csv", columns, curve_rows)
        _write_csv(out / "compare_final.csv", ("run", "final_acc", "delta_acc_pp", "final_loss", "delta_loss"), delta_rows)

    lines = [f"{'run':<16} {'final acc (%)':>14} {'delta (pp)':>11} {'final loss':>11}"]
    for name, acc, dacc, loss, _ in delta_rows:
        lines.append(f"{name:<16} {100 * acc:>14.2f} {dacc:>+11.2f} {loss:>11.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetqfl", description="Heterogeneous quantum federated learning experiments")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--config", metavar="PATH", help="experiment config (YAML or JSON)")
    mode.add_argument("--compare", nargs="+", metavar="RUN_DIR", help="compare finished per-algorithm run directories")
    p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
    p.add_argument("--algo", help="run only this algorithm")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.compare:
        try:
            print(compare(args.compare, args.out))
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK
    try:
        config = parse_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seeds"] = [args.seed]
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.algo is not None:
            overrides["algorithm"] = args.algo
        config = replace(config, **overrides).validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(config, quiet=args.quiet)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
