"""Verbalization, three-condition evaluation and report files."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Example
from .gist import GistPools, GistStates, assemble_batch, build_decoder_memory, compress
from .metrics import compression_ratio, rouge_l, substring_accuracy
from .model import ModelParams, encode, generate_greedy_batch, pad_batch
from .tensor import no_grad
from .tokenizer import PAD, Vocab
from .training import full_prompt_source, prompt_ids

CONDITIONS = ("no_prompt", "gist", "full_prompt")


@dataclass
class VerbalizedPrompt:
    tokens: list[int]
    text: str
    source_layout: str


@dataclass
class ConditionResult:
    name: str
    accuracy: float | None
    rouge_l: float | None
    mean_compression_ratio: float | None
    n_examples: int


@dataclass
class EvalReport:
    per_condition: dict[str, ConditionResult]
    metadata: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)

    @property
    def run_id(self) -> str:
        blob = json.dumps(self.metadata, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.metadata,
            "per_condition": {
                name: {
                    "name": r.name,
                    "accuracy": r.accuracy,
                    "rouge_l": r.rouge_l,
                    "mean_compression_ratio": r.mean_compression_ratio,
                    "n": r.n_examples,
                }
                for name, r in self.per_condition.items()
            },
        }

    def csv_rows(self) -> list[tuple[str, str, str, float]]:
        rows = []
        for name, r in self.per_condition.items():
            if r.accuracy is not None:
                rows.append((name, "rag", "accuracy", r.accuracy))
            if r.rouge_l is not None:
                rows.append((name, "instruction", "rouge_l", r.rouge_l))
            if r.mean_compression_ratio is not None:
                rows.append((name, "all", "compression_ratio", r.mean_compression_ratio))
        return rows


def write_report(report: EvalReport, out_dir, stem: str = "report") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}.csv"
    json_path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    write_csv(report.csv_rows(), csv_path)
    with (out_dir / f"{stem}.predictions.jsonl").open("w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return json_path, csv_path


def write_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["condition", "task", "metric", "value"])
        for condition, task, metric, value in rows:
            writer.writerow([condition, task, metric, f"{value:.6f}"])


def verbalize_batch(teacher: ModelParams, states: GistStates, vocab: Vocab, max_len: int) -> list[VerbalizedPrompt]:
    """Greedy-decode gist states alone (no encoded input) into text."""
    h = states.h if states.h.ndim == 3 else states.h.reshape(1, *states.h.shape)
    seqs = generate_greedy_batch(teacher, h, max_len)
    return [VerbalizedPrompt(s, vocab.decode(s), states.layout) for s in seqs]


def verbalize(teacher: ModelParams, states: GistStates, vocab: Vocab, max_len: int) -> VerbalizedPrompt:
    return verbalize_batch(teacher, states, vocab, max_len)[0]


def _score(example: Example, generated: str) -> float:
    if example.task_type == "rag":
        return float(substring_accuracy(generated, example.target))
    return rouge_l(generated, example.target)


def _batches(examples: list[Example], size: int):
    # contiguous same-type runs keep input order stable
    for kind in ("rag", "instruction"):
        group = [ex for ex in examples if ex.task_type == kind]
        for i in range(0, len(group), size):
            yield group[i : i + size]


def generate_condition(
    condition: str,
    batch: list[Example],
    teacher: ModelParams,
    compressor: ModelParams | None,
    pools: GistPools | None,
    vocab: Vocab,
    k_passages: int,
    max_len: int,
    with_verbalization: bool = False,
):
    """Generated texts for one homogeneous batch (plus verbalizations for gist)."""
    xs = [vocab.encode(ex.input) for ex in batch]
    verbal = None
    with no_grad():
        if condition == "no_prompt":
            ids = pad_batch(xs)
            memory, valid = encode(teacher, ids), ids != PAD
        elif condition == "full_prompt":
            ids = pad_batch([full_prompt_source(ex, vocab, k_passages) for ex in batch])
            memory, valid = encode(teacher, ids), ids != PAD
        elif condition == "gist":
            if compressor is None or pools is None:
                raise ValueError("gist condition needs a compressor and gist pools")
            states = compress(compressor, assemble_batch(batch, compressor, pools, vocab, k_passages))
            memory, valid = build_decoder_memory(states, teacher, xs)
            if with_verbalization:
                verbal = verbalize_batch(teacher, states, vocab, max_len)
        else:
            raise ValueError(f"unknown condition {condition!r}")
        seqs = generate_greedy_batch(teacher, memory, max_len, valid)
    return [vocab.decode(s) for s in seqs], verbal


def run_eval(
    teacher: ModelParams,
    compressor: ModelParams | None,
    pools: GistPools | None,
    examples: list[Example],
    vocab: Vocab,
    conditions=CONDITIONS,
    k_passages: int = 5,
    max_len: int = 24,
    verbalize_prompts: bool = True,
    batch_size: int = 64,
    metadata: dict | None = None,
) -> EvalReport:
    if not examples:
        raise ValueError("no examples to evaluate")
    results: dict[str, ConditionResult] = {}
    records: list[dict] = []
    for condition in conditions:
        scores = {"rag": [], "instruction": []}
        ratios = []
        for batch in _batches(examples, batch_size):
            texts, verbal = generate_condition(
                condition, batch, teacher, compressor, pools, vocab, k_passages, max_len,
                with_verbalization=verbalize_prompts and condition == "gist",
            )
            for i, (ex, text) in enumerate(zip(batch, texts)):
                score = _score(ex, text)
                scores[ex.task_type].append(score)
                rec = {"condition": condition, "id": ex.id, "task_type": ex.task_type, "generated": text, "target": ex.target, "score": score}
                if verbal is not None:
                    n_prompt = len(prompt_ids(ex, vocab, k_passages))
                    ratio = compression_ratio(n_prompt, len(verbal[i].tokens))
                    ratios.append(ratio)
                    rec.update(verbalized=verbal[i].text, prompt_tokens=n_prompt, verbalized_tokens=len(verbal[i].tokens), compression_ratio=ratio)
                records.append(rec)
        results[condition] = ConditionResult(
            name=condition,
            accuracy=float(np.mean(scores["rag"])) if scores["rag"] else None,
            rouge_l=float(np.mean(scores["instruction"])) if scores["instruction"] else None,
            mean_compression_ratio=float(np.mean(ratios)) if ratios else None,
            n_examples=len(examples),
        )
    meta = {"k_passages": k_passages, "max_len": max_len, "conditions": list(conditions), **(metadata or {})}
    if pools is not None:
        # rows per pool; a unified pool of 2N rows matches N + N disentangled
        meta.setdefault("gist_rows", pools.n_gist)
        meta.setdefault("unified_gists", pools.unified)
    return EvalReport(results, meta, records)
