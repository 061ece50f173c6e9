"""Teacher pretraining (cross-entropy) and compressor distillation (KL)."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .data import Example
from .gist import GistPools, assemble_batch, build_decoder_memory, compress
from .model import (
    ModelConfig,
    ModelParams,
    decode_logprobs,
    decoder_logits,
    encode,
    init_model,
    pad_batch,
    teacher_distribution,
)
from .optim import AdamState, adam_step, clip_grad_norm
from .tensor import ContractError, NumericError
from .tokenizer import PAD, Vocab

log = logging.getLogger(__name__)


class TrainingDivergedError(NumericError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 8
    batch_size: int = 16
    seed: int = 0
    k_passages_train: int = 1
    # teacher sees 1..k passages per rag example, drawn each epoch
    k_passages_teacher: int = 5
    kl_direction: str = "as_paper"
    train_memory_includes_x: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kl_direction not in ("as_paper", "reversed"):
            raise ValueError("kl_direction must be 'as_paper' or 'reversed'")

    def to_dict(self) -> dict:
        return asdict(self)


def make_batches(examples: list[Example], batch_size: int, rng: np.random.Generator) -> list[list[Example]]:
    """Shuffle, split by task type into same-type batches, shuffle batch order."""
    batches = []
    for kind in ("instruction", "rag"):
        group = [ex for ex in examples if ex.task_type == kind]
        order = rng.permutation(len(group))
        group = [group[i] for i in order]
        batches += [group[i : i + batch_size] for i in range(0, len(group), batch_size)]
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def prompt_ids(example: Example, vocab: Vocab, k_passages: int | None) -> list[int]:
    return [t for seg in example.prompt_segments(k_passages) for t in vocab.encode(seg)]


def full_prompt_source(example: Example, vocab: Vocab, k_passages: int | None) -> list[int]:
    return prompt_ids(example, vocab, k_passages) + vocab.encode(example.input)


def _check_finite(loss: float, where: str) -> None:
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss} at {where}")


def teacher_loss(teacher: ModelParams, sources: list[list[int]], targets: list[list[int]]) -> T.Tensor:
    src = pad_batch(sources)
    memory = encode(teacher, src)
    logits, tgt = decoder_logits(teacher, memory, pad_batch(targets), src != PAD)
    return T.cross_entropy(logits, tgt, tgt != PAD)


def dev_loss(teacher: ModelParams, examples: list[Example], vocab: Vocab, k_passages: int, batch_size: int = 64) -> float:
    total, count = 0.0, 0
    with T.no_grad():
        for i in range(0, len(examples), batch_size):
            chunk = examples[i : i + batch_size]
            src = [full_prompt_source(ex, vocab, k_passages) for ex in chunk]
            tgt = [vocab.encode(ex.target) for ex in chunk]
            n = sum(map(len, tgt))
            total += float(teacher_loss(teacher, src, tgt).data) * n
            count += n
    return total / max(count, 1)


def pretrain_teacher(
    config: TrainConfig,
    model_config: ModelConfig,
    train: list[Example],
    dev: list[Example],
    vocab: Vocab,
    history: list | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> ModelParams:
    """Cross-entropy training of the full-prompt teacher (c;x -> y*)."""
    teacher = init_model(model_config, seed=config.seed, role="teacher")
    state = AdamState(learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        start = time.perf_counter()
        losses = []
        for step, batch in enumerate(make_batches(train, config.batch_size, rng)):
            ks = rng.integers(1, config.k_passages_teacher + 1, size=len(batch))
            src = [full_prompt_source(ex, vocab, int(k)) for ex, k in zip(batch, ks)]
            tgt = [vocab.encode(ex.target) for ex in batch]
            teacher.zero_grad()
            loss = teacher_loss(teacher, src, tgt)
            value = float(loss.data)
            _check_finite(value, f"epoch {epoch} step {step}")
            T.backward(loss)
            if config.clip_norm:
                clip_grad_norm([teacher], config.clip_norm)
            adam_step(teacher, state)
            losses.append(value)
        record = {
            "stage": "pretrain",
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "dev_loss": dev_loss(teacher, dev, vocab, config.k_passages_teacher) if dev else None,
            "seconds": time.perf_counter() - start,
        }
        log.info("pretrain epoch %d train %.4f dev %s (%.1fs)", epoch, record["train_loss"], record["dev_loss"], record["seconds"])
        if history is not None:
            history.append(record)
        if on_epoch:
            on_epoch(record)
    teacher.zero_grad()
    return teacher


def compressor_loss(
    config: TrainConfig,
    teacher: ModelParams,
    compressor: ModelParams,
    pools: GistPools,
    batch: list[Example],
    vocab: Vocab,
    k_passages: int | None,
) -> T.Tensor:
    """KL between the gist-conditioned P and the raw-prompt Q for one batch."""
    targets = [vocab.encode(ex.target) for ex in batch]
    q = teacher_distribution(
        teacher,
        [prompt_ids(ex, vocab, k_passages) for ex in batch],
        [vocab.encode(ex.input) for ex in batch],
        targets,
    )
    assembled = assemble_batch(batch, compressor, pools, vocab, k_passages)
    states = compress(compressor, assembled)
    memory, valid = build_decoder_memory(
        states, teacher, [vocab.encode(ex.input) for ex in batch], include_input=config.train_memory_includes_x
    )
    p = decode_logprobs(teacher, memory, pad_batch(targets), valid)
    return T.kl_divergence(p, q, direction=config.kl_direction)


def train_compressor(
    config: TrainConfig,
    teacher: ModelParams,
    compressor: ModelParams,
    pools: GistPools,
    examples: list[Example],
    vocab: Vocab,
    history: list | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[ModelParams, GistPools]:
    """Distil the frozen teacher into the compressor encoder and gist pools.

    ``history`` receives one record per step (loss, teacher grad mass) and
    one per epoch.
    """
    if not teacher.frozen:
        raise ContractError("teacher must be frozen before compressor training")
    if compressor.frozen:
        raise ContractError("compressor is frozen")
    compressor_state = AdamState(learning_rate=config.learning_rate)
    pool_state = AdamState(learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        start = time.perf_counter()
        losses = []
        for step, batch in enumerate(make_batches(examples, config.batch_size, rng)):
            compressor.zero_grad()
            pools.zero_grad()
            loss = compressor_loss(config, teacher, compressor, pools, batch, vocab, config.k_passages_train)
            value = float(loss.data)
            _check_finite(value, f"epoch {epoch} step {step}")
            T.backward(loss)
            mass = teacher.grad_mass()
            if mass != 0.0 or not teacher.frozen:
                raise ContractError("teacher received gradient during compressor training")
            # a pool untouched by this batch (pure instruction batch) gets zero grad
            for _, t in pools.named_tensors():
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
            if config.clip_norm:
                clip_grad_norm([compressor, pools], config.clip_norm)
            adam_step(compressor, compressor_state)
            adam_step(pools, pool_state)
            losses.append(value)
            if history is not None:
                history.append({"stage": "compress_step", "epoch": epoch, "step": step, "loss": value, "teacher_grad_mass": mass})
        record = {
            "stage": "compress",
            "epoch": epoch,
            "train_loss": float(np.mean(losses)) if losses else None,
            "seconds": time.perf_counter() - start,
        }
        log.info("compress epoch %d kl %.4f (%.1fs)", epoch, record["train_loss"] or 0.0, record["seconds"])
        if history is not None:
            history.append(record)
        if on_epoch:
            on_epoch(record)
    compressor.zero_grad()
    pools.zero_grad()
    return compressor, pools
