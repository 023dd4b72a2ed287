from __future__ import annotations

from typing import Dict, Iterable, List, Optional

PAD = "<PAD>"
UNK = "<UNK>"
PAD_ID = 0
UNK_ID = 1


class AlphabetError(KeyError):
    pass


class Alphabet:
    """Frozen-able bidirectional string/index map.

    Index 0 is always PAD. Index 1 is UNK unless ``use_unk`` is false (labels).
    """

    def __init__(self, name: str, use_unk: bool = True):
        self.name = name
        self.use_unk = use_unk
        self.frozen = False
        self._items: List[str] = [PAD] + ([UNK] if use_unk else [])
        self._index: Dict[str, int] = {s: i for i, s in enumerate(self._items)}

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __eq__(self, other) -> bool:
        return (isinstance(other, Alphabet) and self.name == other.name
                and self.use_unk == other.use_unk and self._items == other._items)

    def __repr__(self) -> str:
        return f"Alphabet({self.name!r}, size={len(self)}, frozen={self.frozen})"

    @property
    def num_reserved(self) -> int:
        return 2 if self.use_unk else 1

    def items(self) -> List[str]:
        """Inserted entries, excluding the reserved ones."""
        return self._items[self.num_reserved:]

    def add(self, item: str) -> int:
        if item in self._index:
            return self._index[item]
        if self.frozen:
            raise AlphabetError(f"cannot add {item!r} to frozen alphabet {self.name!r}")
        self._index[item] = len(self._items)
        self._items.append(item)
        return self._index[item]

    def update(self, items: Iterable[str]) -> None:
        for item in items:
            self.add(item)

    def freeze(self) -> "Alphabet":
        self.frozen = True
        return self

    def index_of(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is not None:
            return idx
        if not self.frozen:
            return self.add(item)
        if self.use_unk:
            return UNK_ID
        raise AlphabetError(f"unknown entry {item!r} in alphabet {self.name!r}")

    def lookup(self, index: int) -> str:
        return self._items[index]

    def to_dict(self) -> dict:
        return {"name": self.name, "use_unk": self.use_unk, "items": self.items()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Alphabet":
        alphabet = cls(payload["name"], use_unk=payload["use_unk"])
        alphabet.update(payload["items"])
        return alphabet.freeze()


def label_alphabet(labels: Optional[Iterable[str]] = None) -> Alphabet:
    alphabet = Alphabet("label", use_unk=False)
    if labels:
        alphabet.update(labels)
    return alphabet
