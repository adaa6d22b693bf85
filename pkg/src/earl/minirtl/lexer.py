"""Tokenizer and canonical renderer for MiniRTL source text.

``tokenize`` and ``detokenize`` round-trip up to canonical whitespace: any id
sequence rendered by ``detokenize`` lexes back to the identical sequence.
"""

from __future__ import annotations

from .ast import LexError
from .vocab import DEFAULT_VOCAB, TERMINALS, Vocab

_PUNCT2 = ("<=", "==")
_PUNCT1 = set("()[];,=?:&|^~@")
# Reserved/marker tokens are vocab entries but never legal source lexemes.
_SOURCE_WORDS = frozenset(TERMINALS)


def tokenize(text: str, vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
    """Lex MiniRTL source into token ids.

    Raises LexError for characters outside the MiniRTL alphabet and for
    word lexemes that are not in the vocabulary; nothing is silently skipped.
    """
    ids: list[int] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text[i:i + 2] in _PUNCT2:
            ids.append(vocab.id(text[i:i + 2]))
            i += 2
            continue
        if ch in _PUNCT1:
            ids.append(vocab.id(ch))
            i += 1
            continue
        if ch.isalnum() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word not in _SOURCE_WORDS or word not in vocab:
                raise LexError(i, word)
            ids.append(vocab.id(word))
            i = j
            continue
        raise LexError(i, ch)
    return ids


def detokenize(ids, vocab: Vocab = DEFAULT_VOCAB) -> str:
    """Render token ids as single-space-separated canonical source text."""
    return " ".join(vocab.token(i) for i in ids)
