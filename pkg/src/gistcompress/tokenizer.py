"""Character-level vocabulary with reserved ids for padding, EOS, UNK and gists."""

from __future__ import annotations

from dataclasses import dataclass, field

PAD = 0
EOS = 1
UNK = 2
FIRST_GIST = 3

DEFAULT_SYMBOLS = "".join(chr(c) for c in range(32, 127))


@dataclass
class Vocab:
    """Maps characters to dense ids.

    Ids ``3 .. 3 + 2*max_gist - 1`` are placeholders never produced by
    ``encode``; their embeddings seed the gist pools.
    """

    symbols: str = DEFAULT_SYMBOLS
    max_gist: int = 32
    _to_id: dict[str, int] = field(init=False, repr=False)
    _to_sym: dict[int, str] = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        base = FIRST_GIST + 2 * self.max_gist
        self._to_id = {s: base + i for i, s in enumerate(self.symbols)}
        self._to_sym = {i: s for s, i in self._to_id.items()}

    def __len__(self) -> int:
        return FIRST_GIST + 2 * self.max_gist + len(self.symbols)

    @property
    def size(self) -> int:
        return len(self)

    def gist_id(self, i: int) -> int:
        if not 0 <= i < 2 * self.max_gist:
            raise IndexError(f"gist placeholder {i} outside [0, {2 * self.max_gist})")
        return FIRST_GIST + i

    def encode(self, text: str, eos: bool = True) -> list[int]:
        ids = [self._to_id.get(ch, UNK) for ch in text]
        if eos:
            ids.append(EOS)
        return ids

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i in (PAD, EOS):
                continue
            out.append(self._to_sym.get(i, "�" if i == UNK else ""))
        return "".join(out)

