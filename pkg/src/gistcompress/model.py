"""Pre-norm encoder-decoder transformer with learned absolute positions.

Functions accept a single sequence (1-D ids, 2-D memory) or a right-padded
batch (2-D ids, 3-D memory). Encoder padding is inferred from PAD ids.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import ContractError, Distribution, Tensor
from .tokenizer import EOS, PAD

NEG_INF = -1e9


class SequenceTooLongError(ContractError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    max_seq_len: int = 512
    n_gist: int = 10

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_gist < 1:
            raise ValueError("n_gist must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    """Named tensors of one transformer (or of its encoder half)."""

    config: ModelConfig
    tensors: dict[str, Tensor]
    role: str = "teacher"
    frozen: bool = False

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def named_tensors(self):
        return self.tensors.items()

    def freeze(self) -> ModelParams:
        self.frozen = True
        for t in self.tensors.values():
            t.requires_grad = False
            t.grad = None
        return self

    def unfreeze(self) -> ModelParams:
        self.frozen = False
        for t in self.tensors.values():
            t.requires_grad = True
        return self

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grad_mass(self) -> float:
        return float(sum(np.abs(t.grad).sum() for t in self.tensors.values() if t.grad is not None))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.tensors[name].data).tobytes())
        return h.hexdigest()

    def clone(self, names=None, role: str | None = None) -> ModelParams:
        names = list(self.tensors) if names is None else list(names)
        tensors = {n: T.parameter(self.tensors[n].data, requires_grad=not self.frozen) for n in names}
        return ModelParams(copy.deepcopy(self.config), tensors, role or self.role, self.frozen)


def _init_tensors(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, ff = cfg.d_model, cfg.d_ff
    out: dict[str, np.ndarray] = {
        "tok_emb": rng.normal(0.0, d**-0.5, (cfg.vocab_size, d)),
        "enc.pos": rng.normal(0.0, 0.02, (cfg.max_seq_len, d)),
        "dec.pos": rng.normal(0.0, 0.02, (cfg.max_seq_len, d)),
        "out_bias": np.zeros(cfg.vocab_size),
    }

    def linear(prefix, n_in, n_out):
        out[f"{prefix}.w"] = rng.normal(0.0, n_in**-0.5, (n_in, n_out))
        out[f"{prefix}.b"] = np.zeros(n_out)

    def norm(prefix):
        out[f"{prefix}.g"] = np.ones(d)
        out[f"{prefix}.b"] = np.zeros(d)

    def attn(prefix):
        for proj in ("q", "k", "v", "o"):
            linear(f"{prefix}.{proj}", d, d)

    def ffn(prefix):
        linear(f"{prefix}.fc1", d, ff)
        linear(f"{prefix}.fc2", ff, d)

    for i in range(cfg.n_enc_layers):
        p = f"enc.{i}"
        norm(f"{p}.ln1")
        attn(f"{p}.self")
        norm(f"{p}.ln2")
        ffn(f"{p}.ff")
    norm("enc.ln_f")
    for i in range(cfg.n_dec_layers):
        p = f"dec.{i}"
        norm(f"{p}.ln1")
        attn(f"{p}.self")
        norm(f"{p}.ln2")
        attn(f"{p}.cross")
        norm(f"{p}.ln3")
        ffn(f"{p}.ff")
    norm("dec.ln_f")
    return out


def init_model(config: ModelConfig, seed: int = 0, role: str = "teacher") -> ModelParams:
    rng = np.random.default_rng(seed)
    tensors = {name: T.parameter(arr.astype(np.float32)) for name, arr in _init_tensors(config, rng).items()}
    return ModelParams(config, tensors, role=role, frozen=False)


def encoder_names(params: ModelParams) -> list[str]:
    return [n for n in params.tensors if n == "tok_emb" or n.startswith("enc.")]


# -- building blocks -------------------------------------------------------


def _linear(p: ModelParams, prefix: str, x: Tensor) -> Tensor:
    return T.add(T.matmul(x, p[f"{prefix}.w"]), p[f"{prefix}.b"])


def _norm(p: ModelParams, prefix: str, x: Tensor) -> Tensor:
    return T.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def _heads(x: Tensor, n_heads: int) -> Tensor:
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def _attention(p: ModelParams, prefix: str, q_in: Tensor, kv_in: Tensor, bias: np.ndarray) -> Tensor:
    """Multi-head attention; ``bias`` is added to the [B, H, Lq, Lk] scores."""
    h = p.config.n_heads
    b, lq, d = q_in.shape
    q = _heads(_linear(p, f"{prefix}.q", q_in), h)
    k = _heads(_linear(p, f"{prefix}.k", kv_in), h)
    v = _heads(_linear(p, f"{prefix}.v", kv_in), h)
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * float((d // h) ** -0.5)
    weights = T.softmax(T.add(scores, bias.astype(scores.data.dtype)))
    ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (b, lq, d))
    return _linear(p, f"{prefix}.o", ctx)


def _ffn(p: ModelParams, prefix: str, x: Tensor) -> Tensor:
    return _linear(p, f"{prefix}.fc2", T.gelu(_linear(p, f"{prefix}.fc1", x)))


def _key_bias(valid: np.ndarray) -> np.ndarray:
    """[B, Lk] validity -> additive [B, 1, 1, Lk] bias."""
    return np.where(valid, 0.0, NEG_INF)[:, None, None, :]


def _check_len(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise SequenceTooLongError(f"{what}: required length {n} exceeds max_seq_len {limit}")


# -- encoder ---------------------------------------------------------------


def encode_embedded(params: ModelParams, x: Tensor, valid: np.ndarray) -> Tensor:
    """Run the encoder stack over already-embedded inputs [B, L, d]."""
    cfg = params.config
    _check_len(x.shape[1], cfg.max_seq_len, "encoder input")
    h = T.add(x, params["enc.pos"][: x.shape[1]])
    bias = _key_bias(valid)
    for i in range(cfg.n_enc_layers):
        a = _norm(params, f"enc.{i}.ln1", h)
        h = T.add(h, _attention(params, f"enc.{i}.self", a, a, bias))
        h = T.add(h, _ffn(params, f"enc.{i}.ff", _norm(params, f"enc.{i}.ln2", h)))
    return _norm(params, "enc.ln_f", h)


def _as_batch(ids) -> tuple[np.ndarray, bool]:
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def encode(params: ModelParams, ids) -> Tensor:
    """Final-layer encoder states: [L, d] for one sequence, [B, L, d] for a batch."""
    batch, single = _as_batch(ids)
    _check_len(batch.shape[1], params.config.max_seq_len, "encoder input")
    out = encode_embedded(params, T.embedding(params["tok_emb"], batch), batch != PAD)
    return out[0] if single else out


# -- decoder ---------------------------------------------------------------


def _decoder_hidden(params: ModelParams, memory: Tensor, memory_valid: np.ndarray, dec_in: np.ndarray) -> Tensor:
    cfg = params.config
    n = dec_in.shape[1]
    _check_len(n, cfg.max_seq_len, "decoder input")
    h = T.add(T.embedding(params["tok_emb"], dec_in), params["dec.pos"][:n])
    causal = np.triu(np.full((n, n), NEG_INF), k=1)[None, None]
    cross_bias = _key_bias(memory_valid)
    for i in range(cfg.n_dec_layers):
        a = _norm(params, f"dec.{i}.ln1", h)
        h = T.add(h, _attention(params, f"dec.{i}.self", a, a, causal))
        a = _norm(params, f"dec.{i}.ln2", h)
        h = T.add(h, _attention(params, f"dec.{i}.cross", a, memory, cross_bias))
        h = T.add(h, _ffn(params, f"dec.{i}.ff", _norm(params, f"dec.{i}.ln3", h)))
    return _norm(params, "dec.ln_f", h)


def _logits(params: ModelParams, hidden: Tensor) -> Tensor:
    return T.add(T.matmul(hidden, T.transpose(params["tok_emb"], (1, 0))), params["out_bias"])


def _memory_batch(memory: Tensor, memory_valid) -> tuple[Tensor, np.ndarray, bool]:
    if memory.ndim == 2:
        memory = T.reshape(memory, (1, *memory.shape))
        single = True
    else:
        single = False
    if memory.shape[1] == 0:
        raise ContractError("empty memory")
    if memory_valid is None:
        memory_valid = np.ones(memory.shape[:2], dtype=bool)
    else:
        memory_valid = np.asarray(memory_valid, dtype=bool).reshape(memory.shape[:2])
    return memory, memory_valid, single


def shift_right(targets: np.ndarray) -> np.ndarray:
    """Teacher-forcing inputs: PAD acts as begin-of-sequence."""
    dec_in = np.full_like(targets, PAD)
    dec_in[:, 1:] = targets[:, :-1]
    return dec_in


def decoder_logits(params: ModelParams, memory: Tensor, targets, memory_valid=None) -> tuple[Tensor, np.ndarray]:
    memory, memory_valid, single = _memory_batch(memory, memory_valid)
    tgt, _ = _as_batch(targets)
    logits = _logits(params, _decoder_hidden(params, memory, memory_valid, shift_right(tgt)))
    return logits, tgt


def decode_logprobs(params: ModelParams, memory: Tensor, targets, memory_valid=None) -> Distribution:
    """Teacher-forced log-probabilities of ``targets`` given cross-attention memory."""
    single = memory.ndim == 2
    logits, tgt = decoder_logits(params, memory, targets, memory_valid)
    lp = T.log_softmax(logits)
    mask = tgt != PAD
    if single:
        return Distribution(lp[0], mask[0])
    return Distribution(lp, mask)


def generate_greedy_batch(params: ModelParams, memory: Tensor, max_len: int, memory_valid=None) -> list[list[int]]:
    """Greedy argmax decoding; each row stops at EOS (excluded) or ``max_len``."""
    if max_len < 1:
        raise ContractError("max_len must be >= 1")
    with T.no_grad():
        memory, memory_valid, _ = _memory_batch(memory, memory_valid)
        b = memory.shape[0]
        out = np.zeros((b, 0), dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        for _ in range(max_len):
            dec_in = np.concatenate([np.full((b, 1), PAD, dtype=np.int64), out], axis=1)
            hidden = _decoder_hidden(params, memory, memory_valid, dec_in)
            logits = _logits(params, hidden[:, -1:, :]).data[:, 0, :]
            # argmax returns the first maximum, i.e. the lowest id on ties
            nxt = np.where(done, PAD, logits.argmax(axis=-1))
            out = np.concatenate([out, nxt[:, None]], axis=1)
            done |= nxt == EOS
            if done.all():
                break
    results = []
    for row in out:
        seq = []
        for tok in row:
            if tok in (EOS, PAD):
                break
            seq.append(int(tok))
        results.append(seq)
    return results


def generate_greedy(params: ModelParams, memory: Tensor, max_len: int, memory_valid=None) -> list[int]:
    if memory.ndim != 2:
        raise ContractError("generate_greedy takes one memory [m, d]; use generate_greedy_batch")
    return generate_greedy_batch(params, memory, max_len, memory_valid)[0]


# -- teacher -------------------------------------------------------------


def pad_batch(seqs, min_len: int = 1) -> np.ndarray:
    n = max([min_len, *(len(s) for s in seqs)])
    out = np.full((len(seqs), n), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def teacher_distribution(teacher: ModelParams, prompt_ids, input_ids, target_ids) -> Distribution:
    """Q(y* | c; x): the frozen teacher's distribution given the raw prompt.

    Accepts one example (flat id lists) or a batch (lists of id lists).
    The result carries no tape.
    """
    if not teacher.frozen:
        raise ContractError("teacher_distribution needs a frozen teacher")
    single = len(prompt_ids) == 0 or np.isscalar(prompt_ids[0])
    if single:
        prompt_ids, input_ids, target_ids = [prompt_ids], [input_ids], [target_ids]
    src = [list(c) + list(x) for c, x in zip(prompt_ids, input_ids)]
    for s in src:
        _check_len(len(s), teacher.config.max_seq_len, "prompt;input")
    with T.no_grad():
        memory = encode(teacher, pad_batch(src))
        valid = pad_batch(src) != PAD
        dist = decode_logprobs(teacher, memory, pad_batch(target_ids), valid)
    dist = dist.detach()
    if single:
        return Distribution(dist.logprobs[0].detach(), dist.mask[0])
    return dist
