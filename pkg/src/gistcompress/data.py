"""Dataset records, JSONL persistence and deterministic synthetic task suites."""

from __future__ import annotations

import json
import random
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .retrieval import Corpus, retrieve_topk_many

TASK_TYPES = ("instruction", "rag")
FIELDS = ("id", "instruction", "passages", "input", "target", "task_type")


@dataclass
class Example:
    id: str
    instruction: str
    passages: list[str] = field(default_factory=list)
    input: str = ""
    target: str = ""
    task_type: str = "instruction"

    def prompt_segments(self, k_passages: int | None = None) -> list[str]:
        """Prompt pieces in assembly order: passages by rank, then instruction."""
        if self.task_type == "rag":
            passages = self.passages if k_passages is None else self.passages[:k_passages]
            return [*passages, self.instruction]
        return [self.instruction]


class DataFormatError(ValueError):
    pass


def save_jsonl(examples, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            record = {k: getattr(ex, k) for k in FIELDS}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _check_record(record, lineno: int) -> Example:
    if not isinstance(record, dict):
        raise DataFormatError(f"line {lineno}: expected a JSON object")
    for name in FIELDS:
        if name not in record:
            raise DataFormatError(f"line {lineno}: missing field {name}")
    for name in ("id", "instruction", "input", "target", "task_type"):
        if not isinstance(record[name], str):
            raise DataFormatError(f"line {lineno}: field {name} must be a string")
    if not isinstance(record["passages"], list) or not all(isinstance(p, str) for p in record["passages"]):
        raise DataFormatError(f"line {lineno}: field passages must be a list of strings")
    if record["task_type"] not in TASK_TYPES:
        raise DataFormatError(f"line {lineno}: field task_type must be one of {TASK_TYPES}")
    return Example(**{k: record[k] for k in FIELDS})


def load_jsonl(path) -> list[Example]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            out.append(_check_record(record, lineno))
    return out


def save_corpus(corpus: Corpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id, text in corpus.documents:
            fh.write(json.dumps({"doc_id": doc_id, "text": text}) + "\n")


def load_corpus(path) -> Corpus:
    docs = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                rec = json.loads(line)
                if "doc_id" not in rec or "text" not in rec:
                    raise DataFormatError(f"line {lineno}: corpus records need doc_id and text")
                docs.append((rec["doc_id"], rec["text"]))
    return Corpus(docs)


# -- passage QA ----------------------------------------------------------

RAG_INSTRUCTIONS = (
    "Answer from the passages.",
    "Reply with the value given.",
    "Find the value asked for.",
)

# letter runs already present in every passage or question
_RESERVED_RUNS = ("key", "has", "value", "what", "is", "the", "of")


def _fact(key: str, value: str) -> str:
    return f"key {key} has value {value}."


def generate_passage_qa(seed: int, n_examples: int, n_distractors: int) -> tuple[Corpus, list[Example]]:
    """Key/value lookup questions over a corpus of planted facts.

    Keys are 5-digit numbers and values 3-letter words, all distinct, so each
    value occurs in exactly one document. Distractors are facts about keys
    that no question asks for. Returned examples carry no passages yet; see
    ``attach_passages``.
    """
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    rng = random.Random(seed)
    total = n_examples + n_distractors
    keys = rng.sample(range(10000, 100000), total)
    values: list[str] = []
    used: set[str] = set()
    while len(values) < total:
        v = "".join(rng.choice(string.ascii_lowercase) for _ in range(3))
        if v in used or any(v in run for run in _RESERVED_RUNS):
            continue
        used.add(v)
        values.append(v)

    docs = [(f"d{i:06d}", _fact(str(keys[i]), values[i])) for i in range(total)]
    order = list(range(total))
    rng.shuffle(order)
    corpus = Corpus([docs[i] for i in order])

    examples = [
        Example(
            id=f"rag-{seed}-{i:06d}",
            instruction=rng.choice(RAG_INSTRUCTIONS),
            passages=[],
            input=f"what is the value of {keys[i]}?",
            target=values[i],
            task_type="rag",
        )
        for i in range(n_examples)
    ]
    return corpus, examples


def attach_passages(examples: list[Example], corpus: Corpus, k: int) -> list[Example]:
    """Fill each rag example's passages with the top-k retrieved texts."""
    rag = [ex for ex in examples if ex.task_type == "rag"]
    ranked = retrieve_topk_many(corpus, [ex.input for ex in rag], k)
    out = {}
    for ex, ids in zip(rag, ranked):
        out[ex.id] = Example(**{**asdict(ex), "passages": [corpus.text(d) for d in ids]})
    return [out.get(ex.id, ex) for ex in examples]


# -- instruction tasks ---------------------------------------------------

INSTRUCTION_TEMPLATES = {
    "reverse": (
        "Please take the text that is given to you below and write every one of its characters in the opposite order.",
        "Your job here is to reverse the provided text completely, so that the last character comes first and so on.",
        "Read the input carefully and then produce it backwards, character by character, from the end to the start.",
    ),
    "uppercase": (
        "Please rewrite the text that is given to you below so that every single letter in it becomes a capital letter.",
        "Your job here is to convert the provided text to upper case, keeping the spaces exactly where they were.",
        "Read the input carefully and then produce the very same words again, but written entirely in capitals.",
    ),
    "repeat_last": (
        "Please look at the text that is given to you below and write its final word two times, separated by a space.",
        "Your job here is to find the last word of the provided text and repeat that word twice in your answer.",
        "Read the input carefully and then produce only its closing word, said once and then said once again.",
    ),
    "swap": (
        "Please take the two words that are given to you below and write them again with their order exchanged.",
        "Your job here is to swap the two words of the provided text, so that the second word is written first.",
        "Read the input carefully and then produce the same pair of words, but with the first and second switched.",
    ),
}


# instruction inputs are two distinct words from this list
LEXICON = (
    "ant", "bee", "cat", "cow", "dog", "eel", "elk", "emu", "fox", "hen",
    "owl", "pig", "ram", "yak", "bear", "crab", "deer", "duck", "frog", "goat",
    "hawk", "lion", "mole", "moth", "mule", "newt", "seal", "slug", "swan", "toad",
    "wasp", "wolf",
)


def apply_task(task: str, text: str) -> str:
    words = text.split()
    if task == "reverse":
        return text[::-1]
    if task == "uppercase":
        return text.upper()
    if task == "repeat_last":
        return f"{words[-1]} {words[-1]}"
    if task == "swap":
        return " ".join([words[1], words[0], *words[2:]])
    raise ValueError(f"unknown task {task!r}")


def generate_instruction_tasks(seed: int, n_examples: int) -> list[Example]:
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    rng = random.Random(seed)
    tasks = sorted(INSTRUCTION_TEMPLATES)
    out = []
    for i in range(n_examples):
        task = tasks[i % len(tasks)] if i < len(tasks) else rng.choice(tasks)
        text = " ".join(rng.sample(LEXICON, 2))
        out.append(
            Example(
                id=f"ins-{seed}-{i:06d}",
                instruction=rng.choice(INSTRUCTION_TEMPLATES[task]),
                passages=[],
                input=text,
                target=apply_task(task, text),
                task_type="instruction",
            )
        )
    return out


def task_of(example: Example) -> str | None:
    """Recover the template family of an instruction example."""
    for task, texts in INSTRUCTION_TEMPLATES.items():
        if example.instruction in texts:
            return task
    return None
