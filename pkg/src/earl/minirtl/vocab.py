"""Closed token vocabulary for MiniRTL source text and structured prompts.

The vocabulary is fixed: reserved control tokens, prompt-marker tokens,
every MiniRTL terminal, a closed identifier pool, and a pool of 64 module
names. Token ids are dense 0..V-1 in list order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

PAD = "PAD"
BOS = "BOS"
EOS = "EOS"

# Prompt structure markers (never legal inside MiniRTL source).
SPEC = "SPEC"
IN = "IN"
OUT = "OUT"
TT = "TT"
ENDSPEC = "ENDSPEC"
KIND_DFF = "DFF"
KIND_COUNT = "COUNT"
KIND_FSM = "FSM"

RESERVED = [PAD, BOS, EOS]
MARKERS = [SPEC, IN, OUT, TT, ENDSPEC, KIND_DFF, KIND_COUNT, KIND_FSM]

KEYWORDS = [
    "module", "endmodule", "input", "output", "wire", "reg",
    "assign", "always", "@", "posedge", "negedge",
    "if", "else", "begin", "end",
]
PUNCT = ["(", ")", "[", "]", ";", ",", "=", "<=", "==", "?", ":",
         "&", "|", "^", "~"]
DIGITS = ["0", "1", "2", "3", "4"]

IDENTIFIERS = ["a", "b", "c", "d", "e", "sel", "clk", "rst",
               "y", "z", "q", "q0", "q1", "t0", "t1"]

MODULE_NAMES = [
    "and2", "or2", "xor2", "nand2", "nor2", "xnor2", "not1", "buf1",
    "mux2", "mux21", "mux4", "sel2", "dff", "dffr", "dffe", "tff",
    "count2", "cnt2", "cnt2e", "fsm2", "fsm2r", "seq2", "tog1", "togr",
] + [f"u{i:02d}" for i in range(40)]

TERMINALS = KEYWORDS + PUNCT + DIGITS + IDENTIFIERS + MODULE_NAMES


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    _ids: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._ids:
            object.__setattr__(
                self, "_ids", {t: i for i, t in enumerate(self.tokens)})
        assert len(self._ids) == len(self.tokens), "duplicate tokens"

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._ids[token]

    def token(self, tid: int) -> str:
        return self.tokens[tid]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def ids(self, tokens) -> list[int]:
        return [self._ids[t] for t in tokens]

    def strings(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()


def build_vocab() -> Vocab:
    return Vocab(tuple(RESERVED + MARKERS + TERMINALS))


DEFAULT_VOCAB = build_vocab()
