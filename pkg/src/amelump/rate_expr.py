"""Parser and evaluator for the rate-expression language used in rules.

Grammar (standard precedence, whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := number | 'k' | 'm[' ident ']' | '-' factor | '(' expr ')'

`m[<state>]` is the number of neighbors in the named state and `k` the node
degree.  Evaluation is over the reals: the lumped equations evaluate rates
at fractional cluster centers, not only at integer count vectors.
"""

import re

import numpy as np

from .errors import RateEvalError, RateSyntaxError


class Expr:
    """Base class of expression-tree nodes."""

    def evaluate(self, m, k):
        """Evaluate with m an array whose last axis indexes states.

        Accepts a single vector (shape (S,)) or a batch (shape (n, S));
        k broadcasts accordingly.
        """
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self})"

    def __eq__(self, other):
        return type(self) is type(other) and str(self) == str(other)

    def __hash__(self):
        return hash((type(self), str(self)))


class Num(Expr):
    def __init__(self, value):
        self.value = float(value)

    def evaluate(self, m, k):
        return self.value

    def __str__(self):
        return repr(self.value)


class Degree(Expr):
    def evaluate(self, m, k):
        return k

    def __str__(self):
        return "k"


class NeighborCount(Expr):
    def __init__(self, state_index, state_name):
        self.state_index = state_index
        self.state_name = state_name

    def evaluate(self, m, k):
        return np.asarray(m)[..., self.state_index]

    def __str__(self):
        return f"m[{self.state_name}]"


class Neg(Expr):
    def __init__(self, operand):
        self.operand = operand

    def evaluate(self, m, k):
        return -self.operand.evaluate(m, k)

    def __str__(self):
        return f"-{self.operand}"


class BinOp(Expr):
    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def evaluate(self, m, k):
        lhs = self.left.evaluate(m, k)
        rhs = self.right.evaluate(m, k)
        if self.op == "+":
            return lhs + rhs
        if self.op == "-":
            return lhs - rhs
        if self.op == "*":
            return lhs * rhs
        with np.errstate(divide="ignore", invalid="ignore"):
            out = lhs / rhs
        if not np.all(np.isfinite(out)):
            raise RateEvalError(f"division by zero in '{self}'")
        return out

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)"
    r"|(?P<m>m\[\s*(?P<state>[A-Za-z_][A-Za-z_0-9]*)\s*\])"
    r"|(?P<k>k\b)"
    r"|(?P<op>[-+*/()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise RateSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if match.lastgroup is None and match.group().strip() == "":
            break
        kind = (
            "num"
            if match.group("num")
            else "m"
            if match.group("m")
            else "k"
            if match.group("k")
            else "op"
        )
        tokens.append((kind, match, match.start(kind)))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text, states):
        self.text = text
        self.states = states
        self.tokens = _tokenize(text)
        self.pos = 0

    def _peek_op(self):
        if self.pos < len(self.tokens) and self.tokens[self.pos][0] == "op":
            return self.tokens[self.pos][1].group("op")
        return None

    def _where(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][2]
        return len(self.text)

    def parse(self):
        tree = self.expr()
        if self.pos != len(self.tokens):
            raise RateSyntaxError("trailing input", self._where())
        return tree

    def expr(self):
        node = self.term()
        while self._peek_op() in ("+", "-"):
            op = self._peek_op()
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self._peek_op() in ("*", "/"):
            op = self._peek_op()
            self.pos += 1
            rhs = self.factor()
            if op == "/" and isinstance(rhs, Num) and rhs.value == 0.0:
                raise RateSyntaxError("division by constant zero", self._where())
            node = BinOp(op, node, rhs)
        return node

    def factor(self):
        if self.pos >= len(self.tokens):
            raise RateSyntaxError("unexpected end of expression", self._where())
        kind, match, start = self.tokens[self.pos]
        if kind == "num":
            self.pos += 1
            return Num(match.group("num"))
        if kind == "k":
            self.pos += 1
            return Degree()
        if kind == "m":
            name = match.group("state")
            if name not in self.states.names:
                raise RateSyntaxError(f"unknown state '{name}'", start)
            self.pos += 1
            return NeighborCount(self.states.index(name), name)
        op = match.group("op")
        if op == "-":
            self.pos += 1
            return Neg(self.factor())
        if op == "(":
            self.pos += 1
            node = self.expr()
            if self._peek_op() != ")":
                raise RateSyntaxError("expected ')'", self._where())
            self.pos += 1
            return node
        raise RateSyntaxError(f"unexpected token '{op}'", start)


def parse_rate(text, states):
    """Parse a rate expression over the given state set."""
    return _Parser(text, states).parse()


def eval_rate(expr, m, k):
    """Evaluate an expression at neighborhood m (real-valued) and degree k."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("neighborhood entries must be nonnegative")
    return expr.evaluate(m, k)


# postfix opcodes understood by the simulator's compiled evaluator
OP_CONST, OP_M, OP_K, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG = range(8)


def compile_program(expr):
    """Flatten an expression tree to a postfix program.

    Returns (opcodes, operands, constants, max stack depth); operands index
    into `constants` for OP_CONST and into the state vector for OP_M.  The
    stochastic simulator evaluates these inside compiled code, where the
    expression objects themselves are unavailable.
    """
    codes, operands, consts = [], [], []

    def walk(node):
        if isinstance(node, Num):
            codes.append(OP_CONST)
            operands.append(len(consts))
            consts.append(node.value)
            return 1
        if isinstance(node, NeighborCount):
            codes.append(OP_M)
            operands.append(node.state_index)
            return 1
        if isinstance(node, Degree):
            codes.append(OP_K)
            operands.append(0)
            return 1
        if isinstance(node, Neg):
            depth = walk(node.operand)
            codes.append(OP_NEG)
            operands.append(0)
            return depth
        left = walk(node.left)
        right = walk(node.right)
        codes.append({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[node.op])
        operands.append(0)
        return max(left, right + 1)

    depth = walk(expr)
    return (
        np.array(codes, dtype=np.int64),
        np.array(operands, dtype=np.int64),
        np.array(consts, dtype=np.float64),
        depth,
    )


def affine_coefficients(expr, num_states, kmax, rng=None):
    """Extract (const, per-state coefficients, degree coefficient) if affine.

    All shipped models have rates affine in m and k; the stochastic
    simulator exploits this for a compiled fast path.  Returns None when a
    verification on random points rejects the affine form.
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    zero = np.zeros(num_states)
    try:
        c0 = float(expr.evaluate(zero, 0.0))
        coefs = np.array(
            [float(expr.evaluate(np.eye(num_states)[s], 1.0)) for s in range(num_states)]
        )
        kcoef = float(expr.evaluate(zero, 1.0)) - c0
        coefs = coefs - c0 - kcoef
        probes = rng.integers(0, max(kmax, 2), size=(32, num_states)).astype(float)
        ks = probes.sum(axis=1)
        got = np.array([float(expr.evaluate(p, kk)) for p, kk in zip(probes, ks)])
        want = c0 + probes @ coefs + kcoef * ks
    except RateEvalError:
        return None
    if np.allclose(got, want, rtol=1e-10, atol=1e-10):
        return c0, coefs, kcoef
    return None
