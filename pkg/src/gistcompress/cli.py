"""Command-line entry point: gen-data, pretrain, train-compressor, eval, verbalize, sweep.

Every subcommand takes ``--config PATH`` (JSON), ``--seed`` and ``--out``.
Flags override config-file values, which override defaults. Exit status is
0 on success, 1 on usage errors and 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DataFormatError
from .evaluate import CONDITIONS, verbalize_batch, write_csv, write_report
from .experiment import SuiteConfig, build_suite, compressor_on_suite, evaluate_on, load_suite, save_suite
from .gist import assemble_batch, compress
from .model import ModelConfig
from .tensor import ContractError, NumericError, no_grad
from .tokenizer import Vocab
from .training import TrainConfig, pretrain_teacher

log = logging.getLogger("gistcompress")

TEACHER_FILE = "teacher.ckpt"
COMPRESSOR_FILE = "compressor.ckpt"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a subcommand needs; written to ``config.json`` in its output."""

    command: str = ""
    seed: int = 0
    out: str = "runs/out"
    data: str | None = None
    teacher: str | None = None
    checkpoint: str | None = None
    epochs: int = 8
    lr: float = 1e-4
    batch_size: int = 16
    gist_count: int = 10
    unified_gists: bool = False
    k_passages_train: int = 1
    k_passages_teacher: int = 5
    k_passages: int = 5
    conditions: list[str] = field(default_factory=lambda: list(CONDITIONS))
    gist_counts: list[int] = field(default_factory=lambda: [1, 5, 10])
    max_len: int = 24
    kl_direction: str = "as_paper"
    clip_norm: float | None = None
    model: dict = field(default_factory=dict)
    suite: dict = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            k_passages_train=self.k_passages_train,
            k_passages_teacher=self.k_passages_teacher,
            kl_direction=self.kl_direction,
            clip_norm=self.clip_norm,
        )

    def model_config(self, vocab: Vocab) -> ModelConfig:
        return ModelConfig(vocab_size=len(vocab), **self.model)

    def suite_config(self) -> SuiteConfig:
        return SuiteConfig(**{**self.suite, "seed": self.seed})


_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gistcompress", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        # default=None so that unset flags do not clobber config-file values
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    def training(p):
        p.add_argument("--data")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--gist-count", type=int)
        p.add_argument("--unified-gists", type=_bool, nargs="?", const=True)
        p.add_argument("--k-passages-train", type=int)
        p.add_argument("--clip-norm", type=float)

    p = sub.add_parser("gen-data", help="write a synthetic suite (corpus + train/dev/eval jsonl)")
    common(p)

    p = sub.add_parser("pretrain", help="train the full-prompt teacher with cross-entropy")
    common(p)
    training(p)

    p = sub.add_parser("train-compressor", help="distil a frozen teacher into a gist compressor")
    common(p)
    training(p)
    p.add_argument("--teacher", help="teacher checkpoint file or a directory holding teacher.ckpt")

    p = sub.add_parser("eval", help="score no_prompt / gist / full_prompt conditions")
    common(p)
    p.add_argument("--checkpoint", help="run directory or checkpoint file")
    p.add_argument("--data")
    p.add_argument("--k-passages", type=int)
    p.add_argument("--conditions", type=_str_list)
    p.add_argument("--max-len", type=int)

    p = sub.add_parser("verbalize", help="decode gist states into text")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--k-passages", type=int)
    p.add_argument("--max-len", type=int)

    p = sub.add_parser("sweep", help="train and evaluate one compressor per gist count")
    common(p)
    training(p)
    p.add_argument("--teacher")
    p.add_argument("--gist-counts", type=_int_list)
    p.add_argument("--k-passages", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        loaded = json.loads(args.config.read_text())
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(loaded) - _KEYS)
        if unknown:
            raise UsageError(f"{args.config}: unknown config keys: {', '.join(unknown)}")
        values.update(loaded)
    for key, value in vars(args).items():
        if key in _KEYS and value is not None:
            values[key] = value
    cfg = RunConfig(command=args.command, **values)
    for key in ("model", "suite"):
        allowed = {f.name for f in fields(ModelConfig if key == "model" else SuiteConfig)} - {"vocab_size", "seed"}
        unknown = sorted(set(getattr(cfg, key)) - allowed)
        if unknown:
            raise UsageError(f"unknown {key} config keys: {', '.join(unknown)}")
    bad = [c for c in cfg.conditions if c not in CONDITIONS]
    if bad:
        raise UsageError(f"unknown conditions: {', '.join(bad)} (choose from {', '.join(CONDITIONS)})")
    return cfg


# -- output helpers --------------------------------------------------------


class RunLog:
    """Human log lines on stderr plus ``log.jsonl`` in the output directory."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "log.jsonl"
        self.path.write_text("")

    def __call__(self, record: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        if record.get("stage") == "pretrain":
            log.info("pretrain epoch %d  train_ce %.4f  dev_ce %s  %.1fs", record["epoch"], record["train_loss"],
                     "n/a" if record["dev_loss"] is None else f"{record['dev_loss']:.4f}", record["seconds"])
        elif record.get("stage") == "compress":
            log.info("compress epoch %d  kl %.4f  %.1fs", record["epoch"], record["train_loss"] or 0.0, record["seconds"])
        elif record.get("stage") == "summary":
            log.info("done: %s", json.dumps({k: v for k, v in record.items() if k != "stage"}, sort_keys=True))


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return out


def _teacher_path(path: str | None) -> Path:
    if not path:
        raise UsageError("a teacher checkpoint is required (--teacher)")
    p = Path(path)
    if p.is_dir():
        p = p / TEACHER_FILE
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def _load_run(path: str | None):
    """(teacher, compressor or None, pools or None) from a run directory or file."""
    if not path:
        raise UsageError("--checkpoint is required")
    p = Path(path)
    if p.is_dir():
        teacher_file, comp_file = p / TEACHER_FILE, p / COMPRESSOR_FILE
        if not teacher_file.is_file():
            raise FileNotFoundError(f"checkpoint not found: {teacher_file}")
        comp_file = comp_file if comp_file.is_file() else None
    elif p.is_file():
        teacher_file, comp_file = p, None
    else:
        raise FileNotFoundError(f"checkpoint not found: {p}")
    teacher, _ = load_checkpoint(teacher_file)
    teacher.freeze()
    compressor = pools = None
    if comp_file is not None:
        compressor, pools = load_checkpoint(comp_file)
    return teacher, compressor, pools


def _data(cfg: RunConfig):
    if not cfg.data:
        raise UsageError("--data is required")
    return load_suite(cfg.data)


def _stamp(cfg: RunConfig) -> dict:
    return {"run_config": asdict(cfg)}


# -- subcommands -----------------------------------------------------------


def cmd_gen_data(cfg: RunConfig) -> dict:
    out = _prepare_out(cfg)
    suite = build_suite(cfg.suite_config())
    save_suite(suite, out)
    (out / "suite.json").write_text(json.dumps(suite.config.to_dict(), indent=2, sort_keys=True) + "\n")
    return {k: len(v) for k, v in suite.splits.items()}


def cmd_pretrain(cfg: RunConfig) -> dict:
    vocab = Vocab()
    suite = _data(cfg)
    out = _prepare_out(cfg)
    logger = RunLog(out)
    history: list = []
    teacher = pretrain_teacher(cfg.train_config(), cfg.model_config(vocab), suite.splits["train"], suite.splits["dev"], vocab,
                               history, on_epoch=logger)
    save_checkpoint(teacher, None, out / TEACHER_FILE, extra=_stamp(cfg))
    summary = {"stage": "summary", "epochs": cfg.epochs, "final_dev_loss": history[-1]["dev_loss"] if history else None,
               "checksum": teacher.checksum()}
    logger(summary)
    return summary


def cmd_train_compressor(cfg: RunConfig) -> dict:
    vocab = Vocab()
    teacher_file = _teacher_path(cfg.teacher)
    suite = _data(cfg)
    teacher, _ = load_checkpoint(teacher_file)
    teacher.freeze()
    out = _prepare_out(cfg)
    logger = RunLog(out)
    before = teacher.checksum()
    history: list = []
    compressor, pools = compressor_on_suite(teacher, suite.splits["train"], cfg.train_config(), vocab, cfg.gist_count,
                                            cfg.unified_gists, history, on_epoch=logger)
    if teacher.checksum() != before:
        raise ContractError("teacher parameters changed during compressor training")
    # copy the teacher so the run directory is self-contained for eval
    if teacher_file.resolve() != (out / TEACHER_FILE).resolve():
        shutil.copyfile(teacher_file, out / TEACHER_FILE)
    save_checkpoint(compressor, pools, out / COMPRESSOR_FILE, extra=_stamp(cfg))
    steps = [r for r in history if r["stage"] == "compress_step"]
    with (out / "steps.jsonl").open("w") as fh:
        for r in steps:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    summary = {"stage": "summary", "steps": len(steps), "final_kl": steps[-1]["loss"] if steps else None,
               "teacher_checksum": before}
    logger(summary)
    return summary


def cmd_eval(cfg: RunConfig) -> dict:
    vocab = Vocab()
    teacher, compressor, pools = _load_run(cfg.checkpoint)
    if "gist" in cfg.conditions and compressor is None:
        raise FileNotFoundError(f"gist condition needs {Path(cfg.checkpoint) / COMPRESSOR_FILE}")
    suite = _data(cfg)
    out = _prepare_out(cfg)
    report = evaluate_on(teacher, compressor, pools, suite.splits["eval"], vocab, cfg.conditions, cfg.k_passages,
                         metadata={"seed": cfg.seed, "run_config": asdict(cfg)})
    write_report(report, out, "report")
    return {name: {"accuracy": r.accuracy, "rouge_l": r.rouge_l} for name, r in report.per_condition.items()}


def cmd_verbalize(cfg: RunConfig) -> dict:
    vocab = Vocab()
    teacher, compressor, pools = _load_run(cfg.checkpoint)
    if compressor is None:
        raise FileNotFoundError(f"verbalize needs {Path(cfg.checkpoint) / COMPRESSOR_FILE}")
    suite = _data(cfg)
    out = _prepare_out(cfg)
    rows = []
    with no_grad():
        for kind in ("rag", "instruction"):
            exs = suite.select("eval", kind)
            for i in range(0, len(exs), 64):
                batch = exs[i : i + 64]
                states = compress(compressor, assemble_batch(batch, compressor, pools, vocab, cfg.k_passages))
                for ex, v in zip(batch, verbalize_batch(teacher, states, vocab, cfg.max_len)):
                    rows.append({"id": ex.id, "task_type": ex.task_type, "layout": v.source_layout, "text": v.text,
                                 "tokens": len(v.tokens), "target": ex.target})
    with (out / "verbalized.jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    for r in rows[:5]:
        print(f"{r['id']}\t{r['text']!r}")
    return {"n": len(rows)}


def cmd_sweep(cfg: RunConfig) -> dict:
    vocab = Vocab()
    teacher_file = _teacher_path(cfg.teacher)
    suite = _data(cfg)
    teacher, _ = load_checkpoint(teacher_file)
    teacher.freeze()
    out = _prepare_out(cfg)
    logger = RunLog(out)
    table = []
    for n in cfg.gist_counts:
        start = time.perf_counter()
        compressor, pools = compressor_on_suite(teacher, suite.splits["train"], cfg.train_config(), vocab, n,
                                                cfg.unified_gists, on_epoch=logger)
        save_checkpoint(compressor, pools, out / f"compressor_n{n}.ckpt", extra=_stamp(cfg))
        report = evaluate_on(teacher, compressor, pools, suite.splits["eval"], vocab, ("gist",), cfg.k_passages,
                             metadata={"seed": cfg.seed, "gist_count": n, "run_config": asdict(cfg)})
        write_report(report, out, f"report_n{n}")
        r = report.per_condition["gist"]
        if r.accuracy is not None:
            table.append((f"N={n}", "rag", "accuracy", r.accuracy))
        if r.rouge_l is not None:
            table.append((f"N={n}", "instruction", "rouge_l", r.rouge_l))
        logger({"stage": "sweep", "gist_count": n, "accuracy": r.accuracy, "rouge_l": r.rouge_l,
                "seconds": time.perf_counter() - start})
    write_csv(table, out / "sweep.csv")
    return {"reports": [f"report_n{n}.json" for n in cfg.gist_counts]}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "train-compressor": cmd_train_compressor,
    "eval": cmd_eval,
    "verbalize": cmd_verbalize,
    "sweep": cmd_sweep,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        cfg = resolve_config(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        result = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, CheckpointError, DataFormatError, ContractError, NumericError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
