"""Synthetic generation of verified specification-code-testbench triples.

Each task pairs a structured prompt (the specification), a reference MiniRTL
module, and exhaustive test vectors. Templates replace an LLM generator; a
validation pass admits only triples whose reference parses and passes its own
vectors exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EarlError
from .minirtl import (Binary, Const, Index, ModuleAst, Stimulus, Ternary,
                      Unary, Var, build_vectors, equivalence_fraction, parse,
                      simulate, tokenize)
from .minirtl.sim import _data_inputs, _enumerated  # noqa: internal reuse
from .minirtl.vocab import (BOS, DEFAULT_VOCAB, ENDSPEC, IN, KIND_COUNT,
                            KIND_DFF, KIND_FSM, MODULE_NAMES, OUT, SPEC, TT)
from .seeds import mix, rng_for

KINDS = ("combinational", "register", "counter", "mux", "fsm-lite")
DIFFICULTIES = ("easy", "medium", "hard")

DIGEST_MAX_ROWS = 16   # truth-table rows kept in the prompt for 4-bit inputs
SEQ_DIGEST_BITS = 16   # leading output bits kept for sequential prompts
PROMPT_MAX_LEN = 48

_SEQ_KIND_TAG = {"register": KIND_DFF, "counter": KIND_COUNT,
                 "fsm-lite": KIND_FSM}


@dataclass(frozen=True)
class Task:
    id: str
    prompt_tokens: tuple[int, ...]
    reference_text: str
    reference: ModuleAst
    vectors: Stimulus
    kind: str
    difficulty: str
    split: str = "train"


@dataclass(frozen=True)
class Corpus:
    tasks: tuple[Task, ...]

    def train(self) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.split == "train")

    def heldout(self) -> tuple[Task, ...]:
        return tuple(t for t in self.tasks if t.split == "eval-heldout")


# 625 tasks -> 500 train / 125 heldout at the default heldout fraction.
DEFAULT_CORPUS_COUNTS = {
    "combinational-easy": 150, "combinational-medium": 150,
    "combinational-hard": 50,
    "mux-easy": 50, "mux-medium": 25,
    "register-easy": 50, "register-medium": 25,
    "counter-easy": 50,
    "fsm-lite-easy": 50, "fsm-lite-medium": 25,
}


@dataclass(frozen=True)
class CorpusConfig:
    counts: dict = field(
        default_factory=lambda: dict(DEFAULT_CORPUS_COUNTS))
    heldout_fraction: float = 0.2

    def validate(self) -> None:
        if not self.counts:
            raise ConfigError("corpus.counts: empty")
        for key, n in self.counts.items():
            kind, difficulty = split_count_key(key)
            if kind not in KINDS or difficulty not in DIFFICULTIES:
                raise ConfigError(f"corpus.counts.{key}: unknown kind/difficulty")
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"corpus.counts.{key}: count must be >= 1")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigError("corpus.heldout_fraction: must be in [0, 1)")


def split_count_key(key: str) -> tuple[str, str]:
    base, _, difficulty = key.rpartition("-")
    return base, difficulty


# --- expression templates ----------------------------------------------------

_BINOPS = ("&", "|", "^")


def _rand_expr(rng: np.random.Generator, names: list[str], depth: int):
    """Random expression tree over 1-bit variables, nesting depth <= depth."""
    if depth <= 1:
        return Var(names[int(rng.integers(len(names)))])
    r = rng.random()
    if r < 0.18:
        return Var(names[int(rng.integers(len(names)))])
    if r < 0.36:
        return Unary("~", _rand_expr(rng, names, depth - 1))
    if r < 0.46 and depth >= 3 and len(names) >= 3:
        return Ternary(Var(names[int(rng.integers(len(names)))]),
                       _rand_expr(rng, names, depth - 1),
                       _rand_expr(rng, names, depth - 1))
    op = _BINOPS[int(rng.integers(len(_BINOPS)))]
    return Binary(op, _rand_expr(rng, names, depth - 1),
                  _rand_expr(rng, names, depth - 1))


def _easy_comb_expr(rng: np.random.Generator, names: list[str]):
    """Canonical easy form: optionally negated binary op over the two inputs."""
    a, b = Var(names[0]), Var(names[1])
    op = ("&", "|", "^", "==")[int(rng.integers(4))]
    e = Binary(op, a, b)
    if rng.random() < 0.5:
        e = Unary("~", e)
    return e


def _expr_text(e) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Index):
        return f"{e.name} [ {e.bit} ]"
    if isinstance(e, Unary):
        # Binary/ternary operands already render parenthesized.
        return f"~ {_expr_text(e.operand)}"
    if isinstance(e, Binary):
        return f"( {_expr_text(e.left)} {e.op} {_expr_text(e.right)} )"
    if isinstance(e, Ternary):
        return (f"( {_expr_text(e.cond)} ? {_expr_text(e.then)} : "
                f"{_expr_text(e.other)} )")
    raise AssertionError(e)


# --- module templates --------------------------------------------------------

def _comb_source(name: str, inputs: list[str], expr_text: str) -> str:
    ports = " , ".join(f"input {n}" for n in inputs) + " , output y"
    return f"module {name} ( {ports} ) ; assign y = {expr_text} ; endmodule"


def _seq_source(name: str, inputs: list[str], outputs: list[str],
                regs: list[tuple[str, str, str | None]], edge: str) -> str:
    """regs: (target, next-expr text, reset-condition text or None)."""
    ports = " , ".join([f"input {n}" for n in inputs]
                       + [f"output {n}" for n in outputs])
    body = []
    for target, nxt, rst in regs:
        body.append(f"reg {target} ;")
    for target, nxt, rst in regs:
        if rst is None:
            stmt = f"{target} <= {nxt} ;"
        else:
            stmt = f"if ( {rst} ) {target} <= 0 ; else {target} <= {nxt} ;"
        body.append(f"always @ ( {edge} clk ) begin {stmt} end")
    return f"module {name} ( {ports} ) ; " + " ".join(body) + " endmodule"


def _draw_source(rng: np.random.Generator, kind: str, difficulty: str) -> str:
    name = MODULE_NAMES[int(rng.integers(len(MODULE_NAMES)))]
    if kind == "combinational":
        if difficulty == "easy":
            inputs = ["a", "b"]
            expr = _easy_comb_expr(rng, inputs)
        elif difficulty == "medium":
            inputs = ["a", "b", "c"]
            expr = _rand_expr(rng, inputs, 4)
        else:
            inputs = ["a", "b", "c", "d"]
            expr = _rand_expr(rng, inputs, 5)
        return _comb_source(name, inputs, _expr_text(expr))
    if kind == "mux":
        if difficulty == "easy":
            return _comb_source(name, ["sel", "a", "b"], "( sel ? a : b )")
        inputs = ["sel", "a", "b", "c"]
        op = _BINOPS[int(rng.integers(3))]
        arm = f"( a {op} b )" if rng.random() < 0.5 else "a"
        return _comb_source(name, inputs, f"( sel ? {arm} : c )")
    edge = "posedge" if rng.random() < 0.8 else "negedge"
    if kind == "register":
        if difficulty == "easy":
            return _seq_source(name, ["clk", "d"], ["q"],
                               [("q", "d", None)], edge)
        if difficulty == "medium":
            nxt = _expr_text(_rand_expr(rng, ["d", "q"], 2))
            return _seq_source(name, ["clk", "rst", "d"], ["q"],
                               [("q", nxt, "rst")], edge)
        nxt = _expr_text(_rand_expr(rng, ["d", "e", "q"], 3))
        return _seq_source(name, ["clk", "rst", "d", "e"], ["q"],
                           [("q", f"( e ? {nxt} : q )", "rst")], edge)
    if kind == "counter":
        regs = [("q0", "~ q0", "rst"), ("q1", "( q1 ^ q0 )", "rst")]
        if difficulty == "hard":
            regs = [("q0", "( e ? ~ q0 : q0 )", "rst"),
                    ("q1", "( e ? ( q1 ^ q0 ) : q1 )", "rst")]
            return _seq_source(name, ["clk", "rst", "e"], ["q0", "q1"],
                               regs, edge)
        return _seq_source(name, ["clk", "rst"], ["q0", "q1"], regs, edge)
    if kind == "fsm-lite":
        n0 = _expr_text(_rand_expr(rng, ["sel", "q0"], 2))
        if difficulty == "hard":
            n1 = _expr_text(_rand_expr(rng, ["sel", "q0", "q1"], 3))
            return _seq_source(name, ["clk", "rst", "sel"], ["q0", "q1"],
                               [("q0", n0, "rst"), ("q1", n1, "rst")], edge)
        return _seq_source(name, ["clk", "rst", "sel"], ["q0"],
                           [("q0", n0, "rst")], edge)
    raise ConfigError(f"unknown kind {kind!r}")


# --- prompt encoding ---------------------------------------------------------

def _comb_digest_bits(reference: ModuleAst) -> list[int]:
    rows = _enumerated(reference.interface, False)[:DIGEST_MAX_ROWS]
    stim = Stimulus(tuple(rows), 0)
    trace = simulate(reference, stim)
    bits = []
    for row in trace:
        for p in reference.interface.outputs():
            for i in range(p.width):
                bits.append((row[p.name] >> i) & 1)
    return bits


def _seq_digest_bits(reference: ModuleAst, vectors: Stimulus) -> list[int]:
    trace = simulate(reference, vectors)
    bits = []
    for row in trace:
        for p in reference.interface.outputs():
            for i in range(p.width):
                bits.append((row[p.name] >> i) & 1)
        if len(bits) >= SEQ_DIGEST_BITS:
            break
    return bits[:SEQ_DIGEST_BITS]


def encode_prompt(task: Task) -> tuple[int, ...]:
    """Deterministic structured encoding of the task specification.

    Layout: BOS SPEC <name> IN <inputs> OUT <outputs> then either
    TT <truth-table digest> for combinational designs or a kind tag plus a
    leading-output-bit digest for sequential ones, closed by ENDSPEC.
    """
    v = DEFAULT_VOCAB
    iface = task.reference.interface
    toks = [BOS, SPEC, iface.module_name, IN]
    toks += [p.name for p in iface.inputs()]
    toks.append(OUT)
    toks += [p.name for p in iface.outputs()]
    if task.reference.is_sequential():
        toks.append(_SEQ_KIND_TAG[task.kind])
        bits = _seq_digest_bits(task.reference, task.vectors)
    else:
        toks.append(TT)
        bits = _comb_digest_bits(task.reference)
    toks += [str(bit) for bit in bits]
    toks.append(ENDSPEC)
    assert len(toks) <= PROMPT_MAX_LEN, f"prompt too long: {len(toks)}"
    return tuple(v.id(t) for t in toks)


# --- generation and validation -----------------------------------------------

def _digest_is_degenerate(task: Task) -> bool:
    """True when any output is constant over the digest window."""
    ref = task.reference
    if ref.is_sequential():
        trace = simulate(ref, task.vectors)[:SEQ_DIGEST_BITS]
    else:
        rows = _enumerated(ref.interface, False)[:DIGEST_MAX_ROWS]
        trace = simulate(ref, Stimulus(tuple(rows), 0))
    for p in ref.interface.outputs():
        if len({row[p.name] for row in trace}) < 2:
            return True
    return False


def generate_task(seed: int, kind: str, difficulty: str,
                  task_id: str | None = None) -> Task:
    """Generate one verified task; redraws degenerate (constant) behaviors."""
    if kind not in KINDS or difficulty not in DIFFICULTIES:
        raise ConfigError(f"unknown kind/difficulty {kind!r}/{difficulty!r}")
    rng = rng_for("task", seed, kind, difficulty)
    for _ in range(100):
        text = _draw_source(rng, kind, difficulty)
        reference = parse(tokenize(text))
        vectors = build_vectors(reference, seed=seed)
        task = Task(
            id=task_id or f"{kind}-{difficulty}-s{seed}",
            prompt_tokens=(),
            reference_text=text,
            reference=reference,
            vectors=vectors,
            kind=kind,
            difficulty=difficulty,
        )
        if _digest_is_degenerate(task):
            continue
        task = Task(**{**task.__dict__, "prompt_tokens": encode_prompt(task)})
        if validate_task(task):
            return task
    raise EarlError(
        f"no non-degenerate draw for ({seed}, {kind}, {difficulty}) "
        "after 100 attempts")


def validate_task(task: Task) -> bool:
    """True iff the reference parses and passes its own vectors with m = 1."""
    try:
        reference = parse(tokenize(task.reference_text))
    except Exception:
        return False
    if not task.prompt_tokens:
        return False
    v = DEFAULT_VOCAB
    if (v.token(task.prompt_tokens[0]) != BOS
            or v.token(task.prompt_tokens[-1]) != ENDSPEC):
        return False
    input_names = {p.name for p in reference.interface.inputs()}
    widths = {p.name: p.width for p in reference.interface.inputs()}
    for row in task.vectors.cycles:
        if set(row) != input_names:
            return False
        for name, value in row.items():
            if not 0 <= value < (1 << widths[name]):
                return False
    try:
        m, _ = equivalence_fraction(reference, reference, task.vectors)
    except Exception:
        return False
    return m == 1.0


def build_corpus(config: CorpusConfig, seed: int) -> Corpus:
    """Exact requested counts per kind/difficulty; deterministic given seed."""
    config.validate()
    tasks: list[Task] = []
    index = 0
    for key in sorted(config.counts):
        kind, difficulty = split_count_key(key)
        for _ in range(config.counts[key]):
            task_seed = mix(seed, "corpus-task", index)
            task = generate_task(task_seed, kind, difficulty,
                                 task_id=f"t{index:04d}-{key}")
            tasks.append(task)
            index += 1
    total = len(tasks)
    n_heldout = int(round(total * config.heldout_fraction))
    order = rng_for(seed, "corpus-split").permutation(total)
    heldout_idx = set(int(i) for i in order[:n_heldout])
    final = [Task(**{**t.__dict__,
                     "split": "eval-heldout" if i in heldout_idx else "train"})
             for i, t in enumerate(tasks)]
    return Corpus(tuple(final))


# --- persistence -------------------------------------------------------------

def corpus_to_json(corpus: Corpus) -> str:
    records = []
    for t in corpus.tasks:
        records.append({
            "id": t.id,
            "prompt_tokens": list(t.prompt_tokens),
            "reference_text": t.reference_text,
            "vectors": {
                "cycles": [dict(sorted(c.items())) for c in t.vectors.cycles],
                "reset_prefix": t.vectors.reset_prefix,
            },
            "kind": t.kind,
            "difficulty": t.difficulty,
            "split": t.split,
        })
    return json.dumps(records, indent=1, sort_keys=True)


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(corpus_to_json(corpus))


def load_corpus(path) -> Corpus:
    records = json.loads(Path(path).read_text())
    tasks = []
    for r in records:
        reference = parse(tokenize(r["reference_text"]))
        vectors = Stimulus(tuple(r["vectors"]["cycles"]),
                           r["vectors"]["reset_prefix"])
        tasks.append(Task(
            id=r["id"],
            prompt_tokens=tuple(r["prompt_tokens"]),
            reference_text=r["reference_text"],
            reference=reference,
            vectors=vectors,
            kind=r["kind"],
            difficulty=r["difficulty"],
            split=r["split"],
        ))
    return Corpus(tuple(tasks))
