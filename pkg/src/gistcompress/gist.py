"""Gist pools, compression-encoder input assembly, gist extraction, decoder memory.

Compressor input layouts (rows top to bottom):

* instruction task: ``[g_instruction] ; instruction ; x``
* rag task:         ``[g_passage] ; [g_instruction] ; passages... ; instruction ; x``
* unified pool:     ``[g_unified] ; prompt segments ; x`` for every task

Each text segment is tokenized with its own trailing EOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Example
from .model import ModelParams, SequenceTooLongError, encode, encode_embedded, encoder_names, pad_batch
from .tensor import Tensor
from .tokenizer import PAD, Vocab

INSTRUCTION_ONLY = "instruction_only"
PASSAGE_THEN_INSTRUCTION = "passage_then_instruction"
UNIFIED = "unified"


@dataclass
class GistPools:
    """Trainable gist embeddings.

    In unified mode ``g_instruction`` holds the single shared pool and
    ``g_passage`` is None.
    """

    g_instruction: Tensor
    g_passage: Tensor | None
    frozen: bool = False

    @property
    def unified(self) -> bool:
        return self.g_passage is None

    @property
    def n_gist(self) -> int:
        return self.g_instruction.shape[0]

    def named_tensors(self):
        if self.unified:
            return [("gist.unified", self.g_instruction)]
        return [("gist.instruction", self.g_instruction), ("gist.passage", self.g_passage)]

    def zero_grad(self) -> None:
        for _, t in self.named_tensors():
            t.grad = None

    def rows_for(self, task_type: str) -> tuple[Tensor, str]:
        if self.unified:
            return self.g_instruction, UNIFIED
        if task_type == "rag":
            return T.concat([self.g_passage, self.g_instruction], axis=0), PASSAGE_THEN_INSTRUCTION
        return self.g_instruction, INSTRUCTION_ONLY


@dataclass
class GistStates:
    h: Tensor
    layout: str


@dataclass
class AssembledInput:
    """Embedded compressor input for a homogeneous batch (or one example)."""

    embedded: Tensor
    valid: np.ndarray
    gist_ranges: list[tuple[int, int]]
    layout: str
    segment_lengths: list[list[int]]


def init_compressor(teacher: ModelParams, vocab: Vocab, n_gist: int | None = None, unified: bool = False):
    """Clone the teacher encoder and seed gist rows from placeholder embeddings.

    Disentangled pools use placeholder ids ``0..N-1`` (instruction) and
    ``max_gist..max_gist+N-1`` (passage); a unified pool of ``2N`` rows
    uses ids ``0..2N-1``.
    """
    n = n_gist or teacher.config.n_gist
    if n < 1:
        raise ValueError("n_gist must be >= 1")
    if n > vocab.max_gist:
        raise ValueError(f"n_gist {n} exceeds the {vocab.max_gist} reserved placeholder ids per pool")
    compressor = teacher.clone(encoder_names(teacher), role="compressor")
    compressor.config.n_gist = n
    compressor.unfreeze()
    emb = teacher["tok_emb"].data

    def rows(ids):
        return T.parameter(emb[[vocab.gist_id(i) for i in ids]])

    if unified:
        pools = GistPools(rows(range(2 * n)), None)
    else:
        pools = GistPools(rows(range(n)), rows(range(vocab.max_gist, vocab.max_gist + n)))
    return compressor, pools


def fit_segments(passages: list[list[int]], rest: list[list[int]], fixed: int, budget: int) -> list[list[int]]:
    """Drop lowest-ranked passages until everything fits in ``budget`` rows."""
    passages = list(passages)

    def total():
        return fixed + sum(map(len, passages)) + sum(map(len, rest))

    while total() > budget and len(passages) > 1:
        passages.pop()
    if total() > budget:
        lens = ", ".join(str(len(s)) for s in [*passages, *rest])
        raise SequenceTooLongError(
            f"assembled input needs {total()} rows but the budget is {budget} "
            f"(gist rows {fixed}; segment lengths {lens})"
        )
    return passages + rest


def example_segments(example: Example, vocab: Vocab, k_passages: int | None, fixed: int, budget: int) -> list[list[int]]:
    """Token segments of prompt then input, truncated to fit the budget."""
    passages = []
    if example.task_type == "rag":
        chosen = example.passages if k_passages is None else example.passages[:k_passages]
        passages = [vocab.encode(p) for p in chosen]
    rest = [vocab.encode(example.instruction), vocab.encode(example.input)]
    return fit_segments(passages, rest, fixed, budget)


def assemble_batch(examples: list[Example], compressor: ModelParams, pools: GistPools, vocab: Vocab, k_passages: int | None) -> AssembledInput:
    kinds = {ex.task_type for ex in examples}
    if len(kinds) != 1:
        raise ValueError("a compressor batch must hold a single task type")
    gist_rows, layout = pools.rows_for(kinds.pop())
    g = gist_rows.shape[0]
    budget = compressor.config.max_seq_len
    segs = [example_segments(ex, vocab, k_passages, g, budget) for ex in examples]
    ids = pad_batch([[t for s in seg for t in s] for seg in segs])
    b = len(examples)
    tokens = T.embedding(compressor["tok_emb"], ids)
    gists = T.broadcast_to(gist_rows, (b, g, gist_rows.shape[1]))
    embedded = T.concat([gists, tokens], axis=1)
    valid = np.concatenate([np.ones((b, g), dtype=bool), ids != PAD], axis=1)
    if layout == PASSAGE_THEN_INSTRUCTION:
        half = pools.n_gist
        ranges = [(0, half), (half, 2 * half)]
    else:
        ranges = [(0, g)]
    return AssembledInput(embedded, valid, ranges, layout, [[len(s) for s in seg] for seg in segs])


def assemble_compressor_input(example: Example, compressor: ModelParams, pools: GistPools, vocab: Vocab, k_passages: int | None = None) -> AssembledInput:
    """One example's embedded input ``[L, d]`` plus its gist index ranges."""
    b = assemble_batch([example], compressor, pools, vocab, k_passages)
    return AssembledInput(b.embedded[0], b.valid[0], b.gist_ranges, b.layout, b.segment_lengths)


def compress(compressor: ModelParams, assembled: AssembledInput) -> GistStates:
    """Encode the assembled input and keep only the final-layer gist rows."""
    emb = assembled.embedded
    single = emb.ndim == 2
    if single:
        emb = T.reshape(emb, (1, *emb.shape))
    valid = np.asarray(assembled.valid).reshape(emb.shape[:2])
    hidden = encode_embedded(compressor, emb, valid)
    end = assembled.gist_ranges[-1][1]
    h = hidden[:, :end, :]
    return GistStates(h[0] if single else h, assembled.layout)


def build_decoder_memory(states: GistStates, teacher: ModelParams, input_ids, include_input: bool = True):
    """Gist rows followed by the teacher's encoding of x.

    For one example returns a ``[G + |x|, d]`` tensor. For a batch
    (``input_ids`` a list of id lists) returns ``(memory [B, G + Lx, d],
    valid [B, G + Lx])``.
    """
    h = states.h
    single = h.ndim == 2
    if single:
        if not include_input:
            return h
        x = encode(teacher, np.asarray(input_ids, dtype=np.int64))
        total = h.shape[0] + x.shape[0]
        if total > teacher.config.max_seq_len:
            raise SequenceTooLongError(f"decoder memory needs {total} rows, max_seq_len {teacher.config.max_seq_len}")
        return T.concat([h, x], axis=0)
    b, g = h.shape[:2]
    if not include_input:
        return h, np.ones((b, g), dtype=bool)
    ids = pad_batch(input_ids)
    total = g + ids.shape[1]
    if total > teacher.config.max_seq_len:
        raise SequenceTooLongError(f"decoder memory needs {total} rows, max_seq_len {teacher.config.max_seq_len}")
    x = encode(teacher, ids)
    memory = T.concat([h, x], axis=1)
    valid = np.concatenate([np.ones((b, g), dtype=bool), ids != PAD], axis=1)
    return memory, valid
