"""Tiny arithmetic expression language for weights on the compact set.

Grammar (deliberately small so that admissible weights are continuous by
construction):

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?          # right associative
    atom    := NUMBER | VARIABLE | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Variables: x1, y1, x2, y2, r (=|z|), r1 (=|z_1|), r2 (=|z_2|).
Functions: min, max (binary), exp, log, abs (unary).

Evaluation is vectorised over coordinate arrays and guarded: log of a
non-positive value, division by zero and fractional powers of negative bases
raise EvalGuardError naming the first offending node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EvalGuardError

VARIABLES = ("x1", "y1", "x2", "y2", "r", "r1", "r2")
FUNCTIONS = {"min": 2, "max": 2, "exp": 1, "log": 1, "abs": 1}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


class _Parser:
    def __init__(self, source):
        self.src = source
        self.pos = 0

    def error(self, message):
        raise ConfigError(
            f"{message} (column {self.pos + 1})", kind="parse", line=1, col=self.pos + 1
        )

    def _skip_ws(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self._skip_ws()
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def take(self, ch):
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def parse(self):
        node = self.expr()
        self._skip_ws()
        if self.pos != len(self.src):
            self.error(f"unexpected {self.src[self.pos]!r}")
        return node

    def expr(self):
        node = self.term()
        while True:
            c = self.peek()
            if c and c in "+-":
                self.pos += 1
                node = Bin(c, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            c = self.peek()
            if c and c in "*/":
                self.pos += 1
                node = Bin(c, node, self.factor())
            else:
                return node

    def factor(self):
        if self.take("-"):
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.take("^"):
            return Bin("^", base, self.factor())
        return base

    def atom(self):
        c = self.peek()
        if c == "(":
            self.pos += 1
            node = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return node
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha():
            return self.name()
        self.error("expected a number, variable, function or '('")

    def number(self):
        start = self.pos
        s = self.src
        while self.pos < len(s) and (s[self.pos].isdigit() or s[self.pos] == "."):
            self.pos += 1
        if self.pos < len(s) and s[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(s) and s[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(s) and s[self.pos].isdigit():
                while self.pos < len(s) and s[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark
        text = s[start : self.pos]
        try:
            return Num(float(text))
        except ValueError:
            self.error(f"bad number {text!r}")

    def name(self):
        start = self.pos
        s = self.src
        while self.pos < len(s) and (s[self.pos].isalnum() or s[self.pos] == "_"):
            self.pos += 1
        word = s[start : self.pos]
        if word in FUNCTIONS:
            if not self.take("("):
                self.error(f"function {word} needs '('")
            args = [self.expr()]
            while self.take(","):
                args.append(self.expr())
            if not self.take(")"):
                self.error("expected ')'")
            if len(args) != FUNCTIONS[word]:
                self.error(f"{word} takes {FUNCTIONS[word]} argument(s), got {len(args)}")
            return Call(word, tuple(args))
        if word in VARIABLES:
            return Var(word)
        self.error(f"unknown name {word!r}")


# precedence levels for minimal-parenthesis printing
_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_LEVEL = 3


def _print(node, parent_level=0):
    if isinstance(node, Num):
        v = node.value
        text = repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(v)
        return text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _print(node.arg, _NEG_LEVEL)
        text = f"-{inner}"
        return f"({text})" if parent_level > _NEG_LEVEL else text
    if isinstance(node, Call):
        args = ", ".join(_print(a, 0) for a in node.args)
        return f"{node.fn}({args})"
    lvl = _LEVEL[node.op]
    if node.op == "^":
        # right associative: parenthesise an equal-level left child
        lt = _print(node.left, lvl + 1)
        rt = _print(node.right, lvl)
        text = f"{lt}^{rt}"
    else:
        # left associative: parenthesise an equal-level right child
        lt = _print(node.left, lvl)
        rt = _print(node.right, lvl + 1)
        text = f"{lt} {node.op} {rt}"
    return f"({text})" if parent_level > lvl else text


def _guard(cond_bad, env, what):
    if np.any(cond_bad):
        flat = np.argmax(cond_bad)
        where = ""
        for k in ("x1", "y1", "x2", "y2"):
            if k in env:
                v = np.broadcast_to(env[k], np.shape(cond_bad)).ravel()[flat]
                where += f" {k}={float(v):g}"
        raise EvalGuardError(f"{what} at node{where or ' (scalar)'}")


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name not in env:
            raise ConfigError(
                f"variable {node.name!r} is not defined in this dimension",
                kind="constraint",
            )
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.fn == "min":
            return np.minimum(args[0], args[1])
        if node.fn == "max":
            return np.maximum(args[0], args[1])
        if node.fn == "exp":
            return np.exp(args[0])
        if node.fn == "log":
            _guard(np.asarray(args[0]) <= 0, env, "log of a non-positive value")
            return np.log(args[0])
        if node.fn == "abs":
            return np.abs(args[0])
        raise AssertionError(node.fn)
    lv = _eval(node.left, env)
    rv = _eval(node.right, env)
    if node.op == "+":
        return lv + rv
    if node.op == "-":
        return lv - rv
    if node.op == "*":
        return lv * rv
    if node.op == "/":
        _guard(np.asarray(rv) == 0, env, "division by zero")
        return lv / rv
    if node.op == "^":
        rarr = np.asarray(rv, dtype=float)
        if np.any(rarr != np.round(rarr)):
            _guard(np.asarray(lv) < 0, env, "fractional power of a negative base")
            _guard((np.asarray(lv) == 0) & (rarr < 0), env, "zero to a negative power")
        elif np.any(rarr < 0):
            _guard(np.asarray(lv) == 0, env, "zero to a negative power")
        return np.power(np.asarray(lv, dtype=float), rv)
    raise AssertionError(node.op)


def _variables(node, acc):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Neg):
        _variables(node.arg, acc)
    elif isinstance(node, Bin):
        _variables(node.left, acc)
        _variables(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _variables(a, acc)


class WeightExpression:
    """Parsed weight expression; prints back to canonical source."""

    def __init__(self, source):
        self.source = source
        self.tree = _Parser(source).parse()

    @classmethod
    def from_tree(cls, tree):
        obj = cls.__new__(cls)
        obj.tree = tree
        obj.source = _print(tree)
        return obj

    def to_source(self):
        return _print(self.tree)

    def evaluate(self, env):
        out = _eval(self.tree, env)
        sample = env.get("x1")
        if sample is not None and np.ndim(out) == 0:
            out = np.full(np.shape(sample), float(out))
        return np.asarray(out, dtype=float)

    def variables(self):
        acc = set()
        _variables(self.tree, acc)
        return acc

    def describe(self):
        return self.to_source()

    def __eq__(self, other):
        return isinstance(other, WeightExpression) and self.tree == other.tree

    def __repr__(self):
        return f"WeightExpression({self.to_source()!r})"


def parse(source):
    return WeightExpression(source)
