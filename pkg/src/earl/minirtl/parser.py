"""Recursive-descent parser and semantic checker for MiniRTL.

Grammar (one module per program):

    program   := 'module' name '(' port (',' port)* ')' ';'
                 decl* item* 'endmodule'
    port      := ('input'|'output') range? ident
    range     := '[' msb ':' '0' ']'            # msb in 1..3, width = msb+1
    decl      := ('wire'|'reg') range? ident ';'
    item      := 'assign' ident '=' expr ';'
               | 'always' '@' '(' edge ident ')' 'begin' stmt 'end'
    stmt      := 'if' '(' expr ')' ident '<=' '0' ';'
                 'else' ident '<=' expr ';'
               | ident '<=' expr ';'
    expr      := ternary
    ternary   := or_e ('?' ternary ':' ternary)?
    or_e      := xor_e ('|' xor_e)*
    xor_e     := and_e ('^' and_e)*
    and_e     := eq_e ('&' eq_e)*
    eq_e      := unary ('==' unary)?
    unary     := '~' unary | primary
    primary   := '0' | '1' | ident ('[' bit ']')? | '(' expr ')'

Width rules: bitwise operators require equal operand widths; '==' yields one
bit; literals are one bit wide; a bit-index yields one bit; the two arms of a
ternary must agree and its condition must be one bit. Any mismatch is a
parse-time SemanticError rather than implicit extension.
"""

from __future__ import annotations

from .ast import (Assign, Binary, Const, Decl, Expr, Index, Interface,
                  ModuleAst, ParseError, PortDecl, Register, SemanticError,
                  Ternary, Unary, Var, expr_signals)
from .vocab import DEFAULT_VOCAB, IDENTIFIERS, MODULE_NAMES, Vocab

_IDENT_SET = set(IDENTIFIERS)
_NAME_SET = set(MODULE_NAMES)


class _Parser:
    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.pos = 0

    # -- token helpers ----------------------------------------------------
    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def expect(self, *alternatives: str) -> str:
        tok = self.peek()
        if tok is None or tok not in alternatives:
            raise ParseError(self.pos, set(alternatives))
        self.pos += 1
        return tok

    def expect_ident(self) -> str:
        tok = self.peek()
        if tok is None or tok not in _IDENT_SET:
            raise ParseError(self.pos, {"<identifier>"})
        self.pos += 1
        return tok

    def accept(self, tok: str) -> bool:
        if self.peek() == tok:
            self.pos += 1
            return True
        return False

    # -- grammar ------------------------------------------------------------
    def program(self) -> ModuleAst:
        self.expect("module")
        name = self.peek()
        if name is None or name not in _NAME_SET:
            raise ParseError(self.pos, {"<module-name>"})
        self.pos += 1
        self.expect("(")
        ports = [self.port()]
        while self.accept(","):
            ports.append(self.port())
        self.expect(")")
        self.expect(";")

        decls: list[Decl] = []
        while self.peek() in ("wire", "reg"):
            decls.append(self.decl())

        assigns: list[Assign] = []
        registers: list[Register] = []
        while self.peek() in ("assign", "always"):
            if self.peek() == "assign":
                assigns.append(self.assign())
            else:
                registers.append(self.always())
        self.expect("endmodule")
        if self.pos != len(self.toks):
            raise ParseError(self.pos, {"<end of program>"})
        iface = Interface(name, tuple(ports))
        return ModuleAst(iface, tuple(decls), tuple(assigns), tuple(registers))

    def range_width(self) -> int:
        if not self.accept("["):
            return 1
        msb = self.expect("1", "2", "3")
        self.expect(":")
        self.expect("0")
        self.expect("]")
        return int(msb) + 1

    def port(self) -> PortDecl:
        direction = self.expect("input", "output")
        width = self.range_width()
        name = self.expect_ident()
        return PortDecl(name, direction, width)

    def decl(self) -> Decl:
        kind = self.expect("wire", "reg")
        width = self.range_width()
        name = self.expect_ident()
        self.expect(";")
        return Decl(name, kind, width)

    def assign(self) -> Assign:
        self.expect("assign")
        target = self.expect_ident()
        self.expect("=")
        expr = self.expr()
        self.expect(";")
        return Assign(target, expr)

    def always(self) -> Register:
        self.expect("always")
        self.expect("@")
        self.expect("(")
        edge = self.expect("posedge", "negedge")
        clock = self.expect_ident()
        self.expect(")")
        self.expect("begin")
        if self.peek() == "if":
            self.expect("if")
            self.expect("(")
            reset = self.expr()
            self.expect(")")
            target = self.expect_ident()
            self.expect("<=")
            self.expect("0")
            self.expect(";")
            self.expect("else")
            target2 = self.expect_ident()
            if target2 != target:
                raise ParseError(self.pos - 1, {target})
            self.expect("<=")
            nxt = self.expr()
            self.expect(";")
        else:
            reset = None
            target = self.expect_ident()
            self.expect("<=")
            nxt = self.expr()
            self.expect(";")
        self.expect("end")
        return Register(target, nxt, edge, clock, reset)

    def expr(self) -> Expr:
        return self.ternary()

    def ternary(self) -> Expr:
        cond = self.or_e()
        if self.accept("?"):
            then = self.ternary()
            self.expect(":")
            other = self.ternary()
            return Ternary(cond, then, other)
        return cond

    def _chain(self, op: str, sub) -> Expr:
        left = sub()
        while self.accept(op):
            left = Binary(op, left, sub())
        return left

    def or_e(self) -> Expr:
        return self._chain("|", self.xor_e)

    def xor_e(self) -> Expr:
        return self._chain("^", self.and_e)

    def and_e(self) -> Expr:
        return self._chain("&", self.eq_e)

    def eq_e(self) -> Expr:
        left = self.unary()
        if self.accept("=="):
            return Binary("==", left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("~"):
            return Unary("~", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.peek()
        if tok in ("0", "1"):
            self.pos += 1
            return Const(int(tok))
        if tok == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if tok in _IDENT_SET:
            self.pos += 1
            if self.accept("["):
                bit = self.expect("0", "1", "2", "3")
                self.expect("]")
                return Index(tok, int(bit))
            return Var(tok)
        raise ParseError(self.pos, {"0", "1", "(", "~", "<identifier>"})


# --- semantic checks ---------------------------------------------------------

def _expr_width(e: Expr, widths: dict[str, int]) -> int:
    if isinstance(e, Const):
        return 1
    if isinstance(e, Var):
        if e.name not in widths:
            raise SemanticError("undeclared", e.name)
        return widths[e.name]
    if isinstance(e, Index):
        if e.name not in widths:
            raise SemanticError("undeclared", e.name)
        if e.bit >= widths[e.name]:
            raise SemanticError("width-mismatch",
                                f"bit {e.bit} of {e.name}[{widths[e.name]}]")
        return 1
    if isinstance(e, Unary):
        return _expr_width(e.operand, widths)
    if isinstance(e, Binary):
        lw = _expr_width(e.left, widths)
        rw = _expr_width(e.right, widths)
        if lw != rw:
            raise SemanticError("width-mismatch", f"{e.op}: {lw} vs {rw}")
        return 1 if e.op == "==" else lw
    if isinstance(e, Ternary):
        cw = _expr_width(e.cond, widths)
        if cw != 1:
            raise SemanticError("width-mismatch", "ternary condition")
        tw = _expr_width(e.then, widths)
        ow = _expr_width(e.other, widths)
        if tw != ow:
            raise SemanticError("width-mismatch", f"?: arms {tw} vs {ow}")
        return tw
    raise AssertionError(e)


def check_semantics(ast: ModuleAst) -> None:
    """Enforce ModuleAst invariants; raises SemanticError on violation."""
    widths: dict[str, int] = {}
    port_names = set()
    for p in ast.interface.ports:
        if p.name in widths:
            raise SemanticError("multi-driver", f"duplicate port {p.name}")
        widths[p.name] = p.width
        port_names.add(p.name)
    port_dirs = {p.name: p.direction for p in ast.interface.ports}
    if not any(d == "input" for d in port_dirs.values()):
        raise SemanticError("no-driver", "module has no input port")
    if not any(d == "output" for d in port_dirs.values()):
        raise SemanticError("no-driver", "module has no output port")

    reg_names = set()
    for d in ast.declarations:
        if d.name in widths:
            # Re-declaring a port is only the 'output reg' idiom: a reg decl
            # naming an output port of equal width.
            if (d.kind == "reg" and port_dirs.get(d.name) == "output"
                    and widths[d.name] == d.width and d.name not in reg_names):
                reg_names.add(d.name)
                continue
            raise SemanticError("multi-driver", f"duplicate decl {d.name}")
        widths[d.name] = d.width
        if d.kind == "reg":
            reg_names.add(d.name)

    drivers: dict[str, str] = {}
    for p in ast.interface.ports:
        if p.direction == "input":
            drivers[p.name] = "input"

    for a in ast.assigns:
        if a.target not in widths:
            raise SemanticError("undeclared", a.target)
        if a.target in drivers:
            raise SemanticError("multi-driver", a.target)
        if a.target in reg_names:
            raise SemanticError("multi-driver",
                                f"assign to reg {a.target}")
        drivers[a.target] = "assign"
        if _expr_width(a.expr, widths) != widths[a.target]:
            raise SemanticError("width-mismatch", f"assign {a.target}")

    for r in ast.registers:
        if r.target not in widths:
            raise SemanticError("undeclared", r.target)
        if r.target not in reg_names:
            raise SemanticError("multi-driver",
                                f"nonblocking assign to non-reg {r.target}")
        if r.target in drivers:
            raise SemanticError("multi-driver", r.target)
        drivers[r.target] = "register"
        if r.clock not in widths:
            raise SemanticError("undeclared", r.clock)
        if widths[r.clock] != 1 or port_dirs.get(r.clock) != "input":
            raise SemanticError("width-mismatch",
                                f"clock {r.clock} must be a 1-bit input")
        if _expr_width(r.next_expr, widths) != widths[r.target]:
            raise SemanticError("width-mismatch", f"register {r.target}")
        if r.reset is not None:
            if _expr_width(r.reset, widths) != 1:
                raise SemanticError("width-mismatch", "reset condition")
            if widths[r.target] != 1:
                raise SemanticError("width-mismatch",
                                    "reset-to-0 requires a 1-bit register")

    # Every read or exported signal must have exactly one driver.
    read: set[str] = set()
    for a in ast.assigns:
        read |= expr_signals(a.expr)
    for r in ast.registers:
        read |= expr_signals(r.next_expr)
        if r.reset is not None:
            read |= expr_signals(r.reset)
    for name in sorted(read):
        if name not in widths:
            raise SemanticError("undeclared", name)
        if name not in drivers:
            raise SemanticError("no-driver", name)
    for p in ast.interface.ports:
        if p.direction == "output" and p.name not in drivers:
            raise SemanticError("no-driver", f"output {p.name}")

    # No combinational cycles: topological order over assigns must exist.
    assign_of = {a.target: a for a in ast.assigns}
    state = {}  # 0 visiting, 1 done

    def visit(name: str, stack: list[str]) -> None:
        if state.get(name) == 1:
            return
        if state.get(name) == 0:
            raise SemanticError("comb-cycle", "->".join(stack + [name]))
        state[name] = 0
        a = assign_of.get(name)
        if a is not None:
            for dep in sorted(expr_signals(a.expr)):
                if dep in assign_of:
                    visit(dep, stack + [name])
        state[name] = 1

    for t in assign_of:
        visit(t, [])


def comb_order(ast: ModuleAst) -> list[Assign]:
    """Assigns in dependency (topological) order; assumes check_semantics."""
    assign_of = {a.target: a for a in ast.assigns}
    ordered: list[Assign] = []
    done: set[str] = set()

    def visit(name: str) -> None:
        if name in done:
            return
        done.add(name)
        a = assign_of[name]
        for dep in sorted(expr_signals(a.expr)):
            if dep in assign_of:
                visit(dep)
        ordered.append(a)

    for t in assign_of:
        visit(t)
    return ordered


def parse(token_ids, vocab: Vocab = DEFAULT_VOCAB) -> ModuleAst:
    """Parse a token id sequence into a checked ModuleAst.

    Raises ParseError (with the first offending token index) or SemanticError.
    """
    tokens = [vocab.token(i) for i in token_ids]
    ast = _Parser(tokens).program()
    check_semantics(ast)
    return ast
