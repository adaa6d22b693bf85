"""Exact 2-valued simulator and bounded equivalence checking for MiniRTL.

Cycle semantics: inputs are applied, combinational assigns settle in
topological order while registers hold their current state, outputs are
sampled, and then every register updates once from the settled values.
Registers start at 0, and the stimulus reset prefix forces them back to 0
for its duration.

Coverage rule for "exhaustive" vectors: combinational designs enumerate all
2^b input vectors (b = total input bits, capped at 10); sequential designs
use a reset prefix followed by 8 full enumeration rounds of the non-clock,
non-reset input bits when b <= 6, otherwise 256 seeded pseudorandom cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..seeds import mix
from .ast import (Binary, Const, Expr, Index, Interface, InterfaceMismatch,
                  ModuleAst, Stimulus, Ternary, Unary, Var)
from .parser import comb_order

SEQ_ROUNDS = 8
SEQ_MAX_EXHAUSTIVE_BITS = 6
SEQ_RANDOM_CYCLES = 256
COMB_MAX_BITS = 10
RESET_PREFIX = 2

# Port names with fixed roles in sequential designs: the clock advances once
# per cycle regardless of its sampled value, and 'rst' drives reset logic.
CLOCK_NAME = "clk"
RESET_NAME = "rst"


def extract_interface(ast: ModuleAst) -> Interface:
    """Pure projection of the parsed module's interface."""
    return ast.interface


def _eval(e: Expr, values: dict[str, int], widths: dict[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return values[e.name]
    if isinstance(e, Index):
        return (values[e.name] >> e.bit) & 1
    if isinstance(e, Unary):
        v = _eval(e.operand, values, widths)
        return (~v) & _mask_of(e, widths)
    if isinstance(e, Binary):
        lv = _eval(e.left, values, widths)
        rv = _eval(e.right, values, widths)
        if e.op == "&":
            return lv & rv
        if e.op == "|":
            return lv | rv
        if e.op == "^":
            return lv ^ rv
        if e.op == "==":
            return 1 if lv == rv else 0
        raise AssertionError(e.op)
    if isinstance(e, Ternary):
        if _eval(e.cond, values, widths):
            return _eval(e.then, values, widths)
        return _eval(e.other, values, widths)
    raise AssertionError(e)


def _expr_static_width(e: Expr, widths: dict[str, int]) -> int:
    if isinstance(e, (Const, Index)):
        return 1
    if isinstance(e, Var):
        return widths[e.name]
    if isinstance(e, Unary):
        return _expr_static_width(e.operand, widths)
    if isinstance(e, Binary):
        return 1 if e.op == "==" else _expr_static_width(e.left, widths)
    if isinstance(e, Ternary):
        return _expr_static_width(e.then, widths)
    raise AssertionError(e)


def _mask_of(e: Unary, widths: dict[str, int]) -> int:
    return (1 << _expr_static_width(e.operand, widths)) - 1


def simulate(ast: ModuleAst, stim: Stimulus) -> list[dict[str, int]]:
    """Run the module over the stimulus; one output-port assignment per cycle.

    Pure and total given the AST invariants and a well-formed stimulus.
    """
    widths = ast.widths()
    ordered = comb_order(ast)
    outputs = [p.name for p in ast.interface.outputs()]
    state = {r.target: 0 for r in ast.registers}
    trace: list[dict[str, int]] = []
    for cyc, inputs in enumerate(stim.cycles):
        values = dict(inputs)
        values.update(state)
        for a in ordered:
            values[a.target] = _eval(a.expr, values, widths)
        trace.append({name: values[name] for name in outputs})
        nxt = {}
        for r in ast.registers:
            if cyc < stim.reset_prefix:
                nxt[r.target] = 0
            elif r.reset is not None and _eval(r.reset, values, widths):
                nxt[r.target] = 0
            else:
                mask = (1 << widths[r.target]) - 1
                nxt[r.target] = _eval(r.next_expr, values, widths) & mask
        state = nxt
    return trace


# --- stimulus construction ---------------------------------------------------

def _data_inputs(iface: Interface, sequential: bool) -> list:
    skip = {CLOCK_NAME, RESET_NAME} if sequential else set()
    return [p for p in iface.inputs() if p.name not in skip]


def input_bit_count(iface: Interface, sequential: bool) -> int:
    return sum(p.width for p in _data_inputs(iface, sequential))


def _enumerated(iface: Interface, sequential: bool) -> list[dict[str, int]]:
    data = _data_inputs(iface, sequential)
    bits = sum(p.width for p in data)
    rows = []
    for v in range(1 << bits):
        row, shift = {}, 0
        for p in data:
            row[p.name] = (v >> shift) & ((1 << p.width) - 1)
            shift += p.width
        rows.append(row)
    return rows


def _with_clock_reset(row: dict[str, int], iface: Interface,
                      rst: int) -> dict[str, int]:
    full = dict(row)
    for p in iface.inputs():
        if p.name == CLOCK_NAME:
            full[p.name] = 0
        elif p.name == RESET_NAME:
            full[p.name] = rst
    return full


def build_vectors(ast: ModuleAst, seed: int = 0) -> Stimulus:
    """Canonical exhaustive stimulus for the module per the coverage rule."""
    iface = ast.interface
    if not ast.is_sequential():
        return Stimulus(tuple(_enumerated(iface, False)), 0)
    bits = input_bit_count(iface, True)
    prefix = [_with_clock_reset({p.name: 0 for p in _data_inputs(iface, True)},
                                iface, 1)
              for _ in range(RESET_PREFIX)]
    if bits <= SEQ_MAX_EXHAUSTIVE_BITS:
        body = [_with_clock_reset(row, iface, 0)
                for _ in range(SEQ_ROUNDS)
                for row in _enumerated(iface, True)]
    else:
        rng = np.random.default_rng(mix("vectors", seed, iface.module_name))
        data = _data_inputs(iface, True)
        body = []
        for _ in range(SEQ_RANDOM_CYCLES):
            row = {p.name: int(rng.integers(0, 1 << p.width)) for p in data}
            body.append(_with_clock_reset(row, iface, 0))
    return Stimulus(tuple(prefix + body), RESET_PREFIX)


def is_exhaustive(vectors: Stimulus, reference: ModuleAst) -> bool:
    """Check the stimulus against the coverage rule for the reference."""
    iface = reference.interface
    sequential = reference.is_sequential()
    data = _data_inputs(iface, sequential)
    bits = sum(p.width for p in data)
    body = vectors.cycles[vectors.reset_prefix:]

    def key(row):
        return tuple(row.get(p.name, 0) for p in data)

    if not sequential:
        if bits > COMB_MAX_BITS:
            return False
        return len({key(r) for r in body}) == (1 << bits)
    if bits <= SEQ_MAX_EXHAUSTIVE_BITS:
        counts: dict[tuple, int] = {}
        for r in body:
            counts[key(r)] = counts.get(key(r), 0) + 1
        return (len(counts) == (1 << bits)
                and all(c >= SEQ_ROUNDS for c in counts.values()))
    return len(body) >= SEQ_RANDOM_CYCLES


# --- equivalence -------------------------------------------------------------

@dataclass(frozen=True)
class EquivalenceResult:
    fraction: float
    is_equivalent: bool


def equivalence_fraction(candidate: ModuleAst, reference: ModuleAst,
                         vectors: Stimulus) -> tuple[float, bool]:
    """Fraction of matching output bits over all cycles, plus full equivalence.

    Requires identical output ports (name and width). Candidate inputs that
    the stimulus does not cover are driven to 0.
    """
    ref_out = {(p.name, p.width) for p in reference.interface.outputs()}
    cand_out = {(p.name, p.width) for p in candidate.interface.outputs()}
    if ref_out != cand_out:
        raise InterfaceMismatch(
            f"output ports differ: {sorted(cand_out)} vs {sorted(ref_out)}")

    cand_inputs = candidate.interface.inputs()
    cand_cycles = []
    for row in vectors.cycles:
        full = {p.name: row.get(p.name, 0) & ((1 << p.width) - 1)
                for p in cand_inputs}
        cand_cycles.append(full)
    cand_stim = Stimulus(tuple(cand_cycles), vectors.reset_prefix)

    ref_trace = simulate(reference, vectors)
    cand_trace = simulate(candidate, cand_stim)

    widths = {p.name: p.width for p in reference.interface.outputs()}
    total = 0
    matching = 0
    for rrow, crow in zip(ref_trace, cand_trace):
        for name, w in widths.items():
            total += w
            diff = rrow[name] ^ crow[name]
            matching += w - bin(diff).count("1")
    if total == 0:
        return 1.0, is_exhaustive(vectors, reference)
    m = matching / total
    return m, (matching == total) and is_exhaustive(vectors, reference)
