"""Tokenizer and vocabulary with fixed PAD/UNK slots.

Vocabulary file format: one token per line, line number = id; the first
two lines are always PAD and UNK.
"""

import re

from .errors import DataFormatError

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

_WORD = re.compile(r"[a-z0-9]+")


def words(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; may be empty."""
    return _WORD.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens):
        self.id_of = {}
        self.tokens = []
        for tok in [PAD, UNK, *tokens]:
            if tok not in self.id_of:
                self.id_of[tok] = len(self.tokens)
                self.tokens.append(tok)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.id_of

    @classmethod
    def from_texts(cls, texts):
        seen = []
        have = set()
        for t in texts:
            for w in words(t):
                if w not in have:
                    have.add(w)
                    seen.append(w)
        return cls(seen)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        while lines and lines[-1] == "":
            lines.pop()
        if len(lines) < 2 or lines[0] != PAD or lines[1] != UNK:
            raise DataFormatError(
                f"{path}: vocabulary must start with '{PAD}' and '{UNK}' lines")
        v = cls.__new__(cls)
        v.tokens = lines
        v.id_of = {tok: i for i, tok in enumerate(lines)}
        if len(v.id_of) != len(lines):
            raise DataFormatError(f"{path}: duplicate token in vocabulary")
        return v


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Token ids with UNK fallback; empty text maps to [UNK]."""
    ids = [vocab.id_of.get(w, UNK_ID) for w in words(text)]
    return ids if ids else [UNK_ID]


def detokenize(ids, vocab: Vocabulary) -> str:
    return " ".join(vocab.tokens[i] for i in ids)
