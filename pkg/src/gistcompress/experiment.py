"""Synthetic suite construction and the train/evaluate pipeline shared by the CLI,
the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import (
    Example,
    attach_passages,
    generate_instruction_tasks,
    generate_passage_qa,
    load_corpus,
    load_jsonl,
    save_corpus,
    save_jsonl,
)
from .evaluate import CONDITIONS, EvalReport, run_eval
from .gist import GistPools, init_compressor
from .model import ModelConfig, ModelParams
from .retrieval import Corpus
from .tokenizer import Vocab
from .training import TrainConfig, pretrain_teacher, train_compressor

SPLITS = ("train", "dev", "eval")


@dataclass
class SuiteConfig:
    seed: int = 0
    n_rag_train: int = 1500
    n_rag_dev: int = 100
    n_rag_eval: int = 500
    n_instruction_train: int = 1000
    n_instruction_dev: int = 50
    n_instruction_eval: int = 200
    n_distractors: int = 200
    # passages stored per rag example; training and eval slice a prefix
    k_retrieved: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Suite:
    corpus: Corpus
    splits: dict[str, list[Example]]
    config: SuiteConfig = field(default_factory=SuiteConfig)

    def select(self, split: str, task_type: str | None = None) -> list[Example]:
        exs = self.splits[split]
        return exs if task_type is None else [ex for ex in exs if ex.task_type == task_type]


def build_suite(cfg: SuiteConfig) -> Suite:
    n_rag = cfg.n_rag_train + cfg.n_rag_dev + cfg.n_rag_eval
    corpus, rag = generate_passage_qa(cfg.seed, n_rag, cfg.n_distractors)
    rag = attach_passages(rag, corpus, cfg.k_retrieved)
    n_ins = cfg.n_instruction_train + cfg.n_instruction_dev + cfg.n_instruction_eval
    ins = generate_instruction_tasks(cfg.seed + 1, n_ins) if n_ins else []

    a, b = cfg.n_rag_train, cfg.n_rag_train + cfg.n_rag_dev
    c, d = cfg.n_instruction_train, cfg.n_instruction_train + cfg.n_instruction_dev
    splits = {
        "train": rag[:a] + ins[:c],
        "dev": rag[a:b] + ins[c:d],
        "eval": rag[b:] + ins[d:],
    }
    return Suite(corpus, splits, cfg)


def save_suite(suite: Suite, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_corpus(suite.corpus, out_dir / "corpus.jsonl")
    for name in SPLITS:
        save_jsonl(suite.splits[name], out_dir / f"{name}.jsonl")


def load_suite(data_dir) -> Suite:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    splits = {}
    for name in SPLITS:
        path = data_dir / f"{name}.jsonl"
        splits[name] = load_jsonl(path) if path.exists() else []
    if not any(splits.values()):
        raise FileNotFoundError(f"no train/dev/eval jsonl files in {data_dir}")
    corpus_path = data_dir / "corpus.jsonl"
    corpus = load_corpus(corpus_path) if corpus_path.exists() else Corpus([])
    return Suite(corpus, splits)


def teacher_on_suite(suite: Suite, train_cfg: TrainConfig, model_cfg: ModelConfig, vocab: Vocab, history=None) -> ModelParams:
    teacher = pretrain_teacher(train_cfg, model_cfg, suite.splits["train"], suite.splits["dev"], vocab, history)
    return teacher.freeze()


def compressor_on_suite(
    teacher: ModelParams,
    train: list[Example],
    train_cfg: TrainConfig,
    vocab: Vocab,
    n_gist: int,
    unified: bool = False,
    history=None,
    on_epoch=None,
) -> tuple[ModelParams, GistPools]:
    """Train a fresh compressor. Unified pools get 2N rows, matching the
    disentangled budget of N instruction plus N passage rows."""
    compressor, pools = init_compressor(teacher, vocab, n_gist, unified=unified)
    return train_compressor(train_cfg, teacher, compressor, pools, train, vocab, history, on_epoch)


def evaluate_on(
    teacher: ModelParams,
    compressor: ModelParams | None,
    pools: GistPools | None,
    examples: list[Example],
    vocab: Vocab,
    conditions=CONDITIONS,
    k_passages: int = 5,
    metadata: dict | None = None,
) -> EvalReport:
    return run_eval(teacher, compressor, pools, examples, vocab, conditions, k_passages=k_passages, metadata=metadata)


def mean_score(report: EvalReport, condition: str, examples: list[Example]) -> float:
    """Per-example mean of substring accuracy (rag) and ROUGE-L (instruction)."""
    scores = [r["score"] for r in report.records if r["condition"] == condition]
    if len(scores) != len(examples):
        raise ValueError("report does not cover the given examples")
    return sum(scores) / len(scores)
