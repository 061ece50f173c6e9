"""Scoring functions: substring accuracy, ROUGE-L F1, compression ratio."""

from __future__ import annotations


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def substring_accuracy(generated: str, gold: str) -> int:
    """1 if the normalised gold answer occurs inside the normalised generation."""
    return int(_normalize(gold) in _normalize(generated))


def lcs_length(a: list, b: list) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """ROUGE-L F1 over whitespace tokens."""
    cand, ref = candidate.split(), reference.split()
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


def compression_ratio(prompt_tokens: int, verbalized_tokens: int) -> float:
    """Fraction of prompt tokens removed by the verbalized prompt, in [0, 1]."""
    if prompt_tokens <= 0:
        raise ValueError("prompt_tokens must be positive")
    return min(1.0, max(0.0, 1.0 - verbalized_tokens / prompt_tokens))
