"""AST node types and front-end error types for MiniRTL."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union


class MiniRtlError(Exception):
    pass


class LexError(MiniRtlError):
    def __init__(self, position: int, lexeme: str):
        self.position = position
        self.lexeme = lexeme
        super().__init__(f"unknown lexeme {lexeme!r} at position {position}")


class ParseError(MiniRtlError):
    """Syntax error: first offending token index plus the expected token set."""

    def __init__(self, index: int, expected: set[str]):
        self.index = index
        self.expected = set(expected)
        super().__init__(
            f"syntax error at token {index}, expected one of "
            f"{sorted(self.expected)}")


class SemanticError(MiniRtlError):
    KINDS = ("undeclared", "multi-driver", "comb-cycle", "width-mismatch",
             "no-driver")

    def __init__(self, kind: str, detail: str = "", index: Optional[int] = None):
        assert kind in self.KINDS
        self.kind = kind
        self.index = index
        super().__init__(f"semantic error [{kind}]: {detail}")


class InterfaceMismatch(MiniRtlError):
    pass


# --- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: int  # 0 or 1, width 1


@dataclass(frozen=True)
class Unary:
    op: str  # "~"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # "&" "|" "^" "=="
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


@dataclass(frozen=True)
class Index:
    name: str
    bit: int


Expr = Union[Var, Const, Unary, Binary, Ternary, Index]


# --- module structure -------------------------------------------------------

@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # "input" | "output"
    width: int      # 1..4


@dataclass(frozen=True)
class Interface:
    module_name: str
    ports: tuple[PortDecl, ...]

    def inputs(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == "input")

    def outputs(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.ports if p.direction == "output")


@dataclass(frozen=True)
class Decl:
    name: str
    kind: str  # "wire" | "reg"
    width: int


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True)
class Register:
    target: str
    next_expr: Expr
    edge: str  # "posedge" | "negedge"
    clock: str
    reset: Optional[Expr] = None  # synchronous reset condition; value is 0


@dataclass(frozen=True)
class ModuleAst:
    interface: Interface
    declarations: tuple[Decl, ...]
    assigns: tuple[Assign, ...]
    registers: tuple[Register, ...]

    def widths(self) -> dict[str, int]:
        w = {p.name: p.width for p in self.interface.ports}
        for d in self.declarations:
            w[d.name] = d.width
        return w

    def is_sequential(self) -> bool:
        return len(self.registers) > 0


@dataclass(frozen=True)
class Stimulus:
    cycles: tuple[dict, ...]  # per-cycle {input name: value}
    reset_prefix: int = 0


def expr_signals(e: Expr, acc: Optional[set] = None) -> set[str]:
    """Names of all signals read by an expression."""
    if acc is None:
        acc = set()
    if isinstance(e, Var):
        acc.add(e.name)
    elif isinstance(e, Index):
        acc.add(e.name)
    elif isinstance(e, Unary):
        expr_signals(e.operand, acc)
    elif isinstance(e, Binary):
        expr_signals(e.left, acc)
        expr_signals(e.right, acc)
    elif isinstance(e, Ternary):
        expr_signals(e.cond, acc)
        expr_signals(e.then, acc)
        expr_signals(e.other, acc)
    return acc
