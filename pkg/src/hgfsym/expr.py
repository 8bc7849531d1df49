"""Small symbolic expression core.

Immutable expression trees over rational constants, named symbols, sums,
products, rational powers and a fixed set of elementary functions.  The
layer stays deliberately shallow: construction folds constants, drops
additive zeros and multiplicative ones, and flattens nested sums and
products, but performs no cancellation or term collection.  Whether two
expressions agree is decided by randomized evaluation, not by canonical
forms.

Constants are exact `Fraction`s, so constant folding never loses
precision.  Exponents are rational numbers, never expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr", "Const", "Sym", "Sum", "Prod", "Pow", "Call",
    "ExprError", "ParseError", "UnboundSymbolError", "EvalDomainError",
    "FUNCTIONS", "sym", "const", "add", "sub", "mul", "div", "neg", "pow_",
    "call", "exp", "sin", "cos", "tan", "sinh", "cosh", "tanh", "sqrt", "ln",
    "parse", "to_str", "free_symbols", "differentiate", "substitute",
    "evaluate", "normalize", "split_terms", "compile_fn", "compile_sum",
]

Number = Union[int, float, Fraction]


class ExprError(Exception):
    """Base class for expression-layer failures."""


class ParseError(ExprError):
    """Syntax error; carries the character offset of the failure."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnboundSymbolError(ExprError):
    """Evaluation hit a symbol missing from the binding."""


class EvalDomainError(ExprError):
    """Evaluation left the real domain (sqrt of negative, pole, overflow)."""


FUNCTIONS = ("exp", "sin", "cos", "tan", "sinh", "cosh", "tanh", "sqrt", "ln")


class Expr:
    """Base node.  Equality is identity; compare values by evaluation."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        return to_str(self)

    def __repr__(self) -> str:
        return to_str(self)


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True, eq=False)
class Sym(Expr):
    name: str


@dataclass(frozen=True, eq=False)
class Sum(Expr):
    terms: tuple


@dataclass(frozen=True, eq=False)
class Prod(Expr):
    factors: tuple


@dataclass(frozen=True, eq=False)
class Pow(Expr):
    base: Expr
    exponent: Fraction


@dataclass(frozen=True, eq=False)
class Call(Expr):
    fn: str
    arg: Expr


_SYMBOLS: dict = {}


def sym(name: str) -> Sym:
    """Interned symbol constructor."""
    s = _SYMBOLS.get(name)
    if s is None:
        if not name or not (name[0].isalpha() or name[0] == "_"):
            raise ValueError(f"bad symbol name {name!r}")
        s = _SYMBOLS[name] = Sym(name)
    return s


def _to_fraction(v: Number) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError("non-finite constant")
        return Fraction(v)
    raise TypeError(f"cannot make a rational constant from {v!r}")


def const(v: Number) -> Const:
    return Const(_to_fraction(v))


ZERO = const(0)
ONE = const(1)


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, Fraction)):
        return const(x)
    raise TypeError(f"not an expression: {x!r}")


def add(*xs) -> Expr:
    """n-ary sum with folding of constants, zero removal and flattening."""
    c = Fraction(0)
    terms = []
    for x in map(_as_expr, xs):
        if isinstance(x, Const):
            c += x.value
        elif isinstance(x, Sum):
            for t in x.terms:
                if isinstance(t, Const):
                    c += t.value
                else:
                    terms.append(t)
        else:
            terms.append(x)
    if c != 0:
        terms.insert(0, Const(c))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def mul(*xs) -> Expr:
    """n-ary product with constant folding, unit removal and flattening."""
    c = Fraction(1)
    factors = []
    for x in map(_as_expr, xs):
        if isinstance(x, Const):
            c *= x.value
        elif isinstance(x, Prod):
            for f in x.factors:
                if isinstance(f, Const):
                    c *= f.value
                else:
                    factors.append(f)
        else:
            factors.append(x)
    if c == 0:
        return ZERO
    if c != 1:
        factors.insert(0, Const(c))
    if not factors:
        return ONE
    if len(factors) == 1:
        return factors[0]
    return Prod(tuple(factors))


def neg(x) -> Expr:
    return mul(-1, x)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def div(a, b) -> Expr:
    return mul(a, pow_(b, -1))


def pow_(base, exponent) -> Expr:
    """Power with a rational exponent.

    Integer powers of constants fold exactly; everything else stays as a
    node.  `x^0` is 1 and `x^1` is `x`.
    """
    r = _to_fraction(exponent)
    b = _as_expr(base)
    if r == 0:
        return ONE
    if r == 1:
        return b
    if isinstance(b, Const) and r.denominator == 1 and not (b.value == 0 and r < 0):
        return Const(b.value ** int(r))
    return Pow(b, r)


def call(fn: str, arg) -> Expr:
    """Apply one of the supported elementary functions."""
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function {fn!r}")
    a = _as_expr(arg)
    if isinstance(a, Const):
        if a.value == 0:
            if fn in ("sin", "tan", "sinh", "tanh", "sqrt"):
                return ZERO
            if fn in ("cos", "cosh", "exp"):
                return ONE
        if fn == "ln" and a.value == 1:
            return ZERO
    return Call(fn, a)


def exp(x):
    return call("exp", x)


def sin(x):
    return call("sin", x)


def cos(x):
    return call("cos", x)


def tan(x):
    return call("tan", x)


def sinh(x):
    return call("sinh", x)


def cosh(x):
    return call("cosh", x)


def tanh(x):
    return call("tanh", x)


def sqrt(x):
    return call("sqrt", x)


def ln(x):
    return call("ln", x)


def normalize(e: Expr) -> Expr:
    """Rebuild a tree through the folding constructors.

    Useful for trees assembled directly from node classes.  The rebuilt
    tree evaluates to the same values; only shape changes.
    """
    memo: dict = {}

    def walk(n: Expr) -> Expr:
        r = memo.get(id(n))
        if r is not None:
            return r
        if isinstance(n, (Const, Sym)):
            r = n
        elif isinstance(n, Sum):
            r = add(*[walk(t) for t in n.terms])
        elif isinstance(n, Prod):
            r = mul(*[walk(f) for f in n.factors])
        elif isinstance(n, Pow):
            r = pow_(walk(n.base), n.exponent)
        elif isinstance(n, Call):
            r = call(n.fn, walk(n.arg))
        else:
            raise TypeError(f"not an expression node: {n!r}")
        memo[id(n)] = r
        return r

    return walk(e)


def free_symbols(e: Expr) -> frozenset:
    """Set of symbol names occurring in the tree."""
    memo: dict = {}

    def walk(n: Expr) -> frozenset:
        r = memo.get(id(n))
        if r is not None:
            return r
        if isinstance(n, Const):
            r = frozenset()
        elif isinstance(n, Sym):
            r = frozenset((n.name,))
        elif isinstance(n, Sum):
            r = frozenset().union(*[walk(t) for t in n.terms])
        elif isinstance(n, Prod):
            r = frozenset().union(*[walk(f) for f in n.factors])
        elif isinstance(n, Pow):
            r = walk(n.base)
        else:
            r = walk(n.arg)
        memo[id(n)] = r
        return r

    return walk(e)


def split_terms(e: Expr) -> tuple:
    """Top-level additive terms; a non-sum is its own single term."""
    if isinstance(e, Sum):
        return e.terms
    return (e,)


# ---------------------------------------------------------------------------
# differentiation

_DERIVATIVES: dict = {
    "exp": lambda a: exp(a),
    "sin": lambda a: cos(a),
    "cos": lambda a: neg(sin(a)),
    "tan": lambda a: add(1, pow_(tan(a), 2)),
    "sinh": lambda a: cosh(a),
    "cosh": lambda a: sinh(a),
    "tanh": lambda a: sub(1, pow_(tanh(a), 2)),
    "sqrt": lambda a: mul(Fraction(1, 2), pow_(a, Fraction(-1, 2))),
    "ln": lambda a: pow_(a, -1),
}


def differentiate(e: Expr, s) -> Expr:
    """Partial derivative with respect to symbol `s` (name or Sym)."""
    name = s.name if isinstance(s, Sym) else s
    memo: dict = {}

    def d(n: Expr) -> Expr:
        r = memo.get(id(n))
        if r is not None:
            return r
        if isinstance(n, Const):
            r = ZERO
        elif isinstance(n, Sym):
            r = ONE if n.name == name else ZERO
        elif isinstance(n, Sum):
            r = add(*[d(t) for t in n.terms])
        elif isinstance(n, Prod):
            parts = []
            fs = n.factors
            for i, f in enumerate(fs):
                df = d(f)
                if isinstance(df, Const) and df.value == 0:
                    continue
                parts.append(mul(*fs[:i], df, *fs[i + 1:]))
            r = add(*parts)
        elif isinstance(n, Pow):
            db = d(n.base)
            if isinstance(db, Const) and db.value == 0:
                r = ZERO
            else:
                r = mul(const(n.exponent), pow_(n.base, n.exponent - 1), db)
        elif isinstance(n, Call):
            da = d(n.arg)
            if isinstance(da, Const) and da.value == 0:
                r = ZERO
            else:
                r = mul(_DERIVATIVES[n.fn](n.arg), da)
        else:
            raise TypeError(f"not an expression node: {n!r}")
        memo[id(n)] = r
        return r

    return d(e)


# ---------------------------------------------------------------------------
# substitution

def substitute(e: Expr, rules: Mapping) -> Expr:
    """Replace symbols simultaneously.

    `rules` maps symbol names (or Sym nodes) to replacement expressions or
    numbers.  All replacements refer to the original tree, so swaps like
    {u: v, v: u} behave as expected.  Untouched subtrees are shared.
    """
    table: dict = {}
    for k, v in rules.items():
        key = k.name if isinstance(k, Sym) else k
        table[key] = _as_expr(v)
    memo: dict = {}

    def walk(n: Expr) -> Expr:
        r = memo.get(id(n))
        if r is not None:
            return r
        if isinstance(n, Const):
            r = n
        elif isinstance(n, Sym):
            r = table.get(n.name, n)
        elif isinstance(n, Sum):
            kids = [walk(t) for t in n.terms]
            r = add(*kids) if any(k is not t for k, t in zip(kids, n.terms)) else n
        elif isinstance(n, Prod):
            kids = [walk(f) for f in n.factors]
            r = mul(*kids) if any(k is not f for k, f in zip(kids, n.factors)) else n
        elif isinstance(n, Pow):
            b = walk(n.base)
            r = pow_(b, n.exponent) if b is not n.base else n
        elif isinstance(n, Call):
            a = walk(n.arg)
            r = call(n.fn, a) if a is not n.arg else n
        else:
            raise TypeError(f"not an expression node: {n!r}")
        memo[id(n)] = r
        return r

    return walk(e)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, binding: Mapping) -> float:
    """Evaluate to a float under `binding` (symbol name -> number).

    Raises UnboundSymbolError for missing symbols and EvalDomainError when
    the computation leaves the reals (negative sqrt, log of a nonpositive
    number, pole, overflow).  Never returns NaN or infinity silently.
    """

    def ev(n: Expr) -> float:
        if isinstance(n, Const):
            return float(n.value)
        if isinstance(n, Sym):
            try:
                return float(binding[n.name])
            except KeyError:
                raise UnboundSymbolError(f"symbol {n.name!r} is not bound") from None
        if isinstance(n, Sum):
            return sum(ev(t) for t in n.terms)
        if isinstance(n, Prod):
            p = 1.0
            for f in n.factors:
                p *= ev(f)
            return p
        if isinstance(n, Pow):
            b = ev(n.base)
            r = n.exponent
            if r.denominator == 1:
                k = int(r)
                if b == 0.0 and k < 0:
                    raise EvalDomainError("zero raised to a negative power")
                try:
                    return b ** k
                except OverflowError:
                    raise EvalDomainError("overflow in power") from None
            if b < 0.0:
                raise EvalDomainError(
                    f"negative base {b!r} under fractional exponent {r}")
            if b == 0.0 and r < 0:
                raise EvalDomainError("zero raised to a negative power")
            try:
                return math.pow(b, float(r))
            except (ValueError, OverflowError):
                raise EvalDomainError("invalid power") from None
        if isinstance(n, Call):
            a = ev(n.arg)
            try:
                if n.fn == "sqrt":
                    if a < 0.0:
                        raise EvalDomainError(f"sqrt of negative value {a!r}")
                    return math.sqrt(a)
                if n.fn == "ln":
                    if a <= 0.0:
                        raise EvalDomainError(f"ln of nonpositive value {a!r}")
                    return math.log(a)
                return getattr(math, n.fn)(a)
            except OverflowError:
                raise EvalDomainError(f"overflow in {n.fn}({a!r})") from None
        raise TypeError(f"not an expression node: {n!r}")

    v = ev(e)
    if not math.isfinite(v):
        raise EvalDomainError(f"non-finite result {v!r}")
    return v


# ---------------------------------------------------------------------------
# parsing

_WS = " \t\r\n"


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in _WS:
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self) -> str:
        c = self.peek()
        self.pos += 1
        return c

    def expect(self, ch: str):
        c = self.peek()
        if c != ch:
            raise ParseError(f"expected {ch!r}, found {c or 'end of input'!r}", self.pos)
        self.pos += 1

    def ident(self) -> str:
        self.skip_ws()
        start = self.pos
        t = self.text
        while self.pos < len(t) and (t[self.pos].isalnum() or t[self.pos] == "_"):
            self.pos += 1
        return t[start:self.pos]

    def number(self) -> Fraction:
        self.skip_ws()
        start = self.pos
        t = self.text
        while self.pos < len(t) and (t[self.pos].isdigit() or t[self.pos] == "."):
            self.pos += 1
        if self.pos < len(t) and t[self.pos] in "eE":
            j = self.pos + 1
            if j < len(t) and t[j] in "+-":
                j += 1
            if j < len(t) and t[j].isdigit():
                self.pos = j
                while self.pos < len(t) and t[self.pos].isdigit():
                    self.pos += 1
        text = t[start:self.pos]
        try:
            if "." in text or "e" in text or "E" in text:
                return Fraction(Decimal(text))
            return Fraction(int(text))
        except (ValueError, ArithmeticError):
            raise ParseError(f"bad number {text!r}", start) from None


def parse(text: str) -> Expr:
    """Parse the expression grammar.

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' rational)?
    base   := number | symbol | func '(' expr ')' | '(' expr ')'

    Function names: exp sin cos tan sinh cosh tanh sqrt ln.  Symbols are
    C-style identifiers.  Exponents are rationals like 2, -1, 1/2 or
    (-3/2); whitespace is insignificant.
    """
    tk = _Tokens(text)
    e = _parse_expr(tk)
    tk.skip_ws()
    if tk.pos != len(text):
        raise ParseError(f"unexpected trailing input {text[tk.pos:]!r}", tk.pos)
    return e


def _parse_expr(tk: _Tokens) -> Expr:
    terms = []
    sign = 1
    c = tk.peek()
    if c in "+-":
        tk.take()
        sign = -1 if c == "-" else 1
    t = _parse_term(tk)
    terms.append(t if sign > 0 else neg(t))
    while True:
        c = tk.peek()
        if c == "+":
            tk.take()
            terms.append(_parse_term(tk))
        elif c == "-":
            tk.take()
            terms.append(neg(_parse_term(tk)))
        else:
            break
    return add(*terms)


def _parse_term(tk: _Tokens) -> Expr:
    factors = [_parse_factor(tk)]
    while True:
        c = tk.peek()
        if c == "*":
            tk.take()
            factors.append(_parse_factor(tk))
        elif c == "/":
            tk.take()
            factors.append(pow_(_parse_factor(tk), -1))
        else:
            break
    return mul(*factors)


def _parse_factor(tk: _Tokens) -> Expr:
    b = _parse_base(tk)
    if tk.peek() == "^":
        tk.take()
        return pow_(b, _parse_rational(tk))
    return b


def _parse_rational(tk: _Tokens) -> Fraction:
    parens = False
    if tk.peek() == "(":
        tk.take()
        parens = True
    sign = 1
    c = tk.peek()
    if c in "+-":
        tk.take()
        sign = -1 if c == "-" else 1
    if not (tk.peek().isdigit() or tk.peek() == "."):
        raise ParseError("expected a rational exponent", tk.pos)
    value = tk.number()
    if tk.peek() == "/":
        tk.take()
        if not tk.peek().isdigit():
            raise ParseError("expected a denominator", tk.pos)
        value = value / tk.number()
    if parens:
        tk.expect(")")
    return sign * value


def _parse_base(tk: _Tokens) -> Expr:
    c = tk.peek()
    if c == "(":
        tk.take()
        e = _parse_expr(tk)
        tk.expect(")")
        return e
    if c.isdigit() or c == ".":
        return Const(tk.number())
    if c.isalpha() or c == "_":
        name = tk.ident()
        if tk.peek() == "(":
            if name not in FUNCTIONS:
                raise ParseError(f"unknown function {name!r}", tk.pos)
            tk.take()
            arg = _parse_expr(tk)
            tk.expect(")")
            return call(name, arg)
        return sym(name)
    raise ParseError(f"unexpected character {c or 'end of input'!r}", tk.pos)


# ---------------------------------------------------------------------------
# printing

_PREC_SUM, _PREC_PROD, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _prec(e: Expr) -> int:
    if isinstance(e, Sum):
        return _PREC_SUM
    if isinstance(e, Prod):
        return _PREC_PROD
    if isinstance(e, Const):
        if e.value < 0:
            return _PREC_SUM
        if e.value.denominator != 1:
            return _PREC_PROD
        return _PREC_ATOM
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(e: Expr, parent_prec: int) -> str:
    s = to_str(e)
    if _prec(e) < parent_prec:
        return f"({s})"
    return s


def _rational_str(r: Fraction) -> str:
    if r.denominator == 1:
        return str(r.numerator)
    return f"{r.numerator}/{r.denominator}"


def to_str(e: Expr) -> str:
    """Render to text that reparses to an equivalent expression."""
    if isinstance(e, Const):
        return _rational_str(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_str(e.arg)})"
    if isinstance(e, Pow):
        r = e.exponent
        exp_s = str(r.numerator) if (r.denominator == 1 and r >= 0) else f"({_rational_str(r)})"
        return f"{_wrap(e.base, _PREC_ATOM)}^{exp_s}"
    if isinstance(e, Prod):
        factors = e.factors
        prefix = ""
        if isinstance(factors[0], Const) and factors[0].value < 0:
            c = factors[0].value
            prefix = "-"
            factors = factors[1:] if c == -1 else (Const(-c),) + factors[1:]
            if not factors:
                return prefix + "1"
        return prefix + "*".join(_wrap(f, _PREC_POW) for f in factors)
    if isinstance(e, Sum):
        out = [to_str(e.terms[0])]
        for t in e.terms[1:]:
            s = to_str(t)
            if s.startswith("-"):
                out.append(f" - {s[1:]}")
            else:
                out.append(f" + {s}")
        return "".join(out)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# compilation to python callables

def _emit(e: Expr, memo: dict, lines: list, argvars: Mapping, mod: str,
          counter: list) -> str:
    key = id(e)
    got = memo.get(key)
    if got is not None:
        return got
    if isinstance(e, Const):
        v = e.value
        s = str(v.numerator) if v.denominator == 1 else repr(float(v))
        if v < 0:
            s = f"({s})"
        memo[key] = s
        return s
    if isinstance(e, Sym):
        try:
            s = argvars[e.name]
        except KeyError:
            raise UnboundSymbolError(
                f"symbol {e.name!r} is not an argument of the compiled function"
            ) from None
        memo[key] = s
        return s
    if isinstance(e, Sum):
        body = " + ".join(_emit(t, memo, lines, argvars, mod, counter) for t in e.terms)
    elif isinstance(e, Prod):
        body = " * ".join(_emit(f, memo, lines, argvars, mod, counter) for f in e.factors)
    elif isinstance(e, Pow):
        b = _emit(e.base, memo, lines, argvars, mod, counter)
        r = e.exponent
        if r.denominator == 1:
            body = f"{b} ** {int(r)}" if r > 0 else f"{b} ** ({int(r)})"
        else:
            body = f"{b} ** {repr(float(r))}" if r > 0 else f"{b} ** ({repr(float(r))})"
    else:
        a = _emit(e.arg, memo, lines, argvars, mod, counter)
        fn = "log" if e.fn == "ln" else e.fn
        body = f"{mod}.{fn}({a})"
    var = f"_t{counter[0]}"
    counter[0] += 1
    lines.append(f"    {var} = {body}")
    memo[key] = var
    return var


def compile_fn(e: Expr, names: Sequence[str], scalar: bool = False) -> Callable:
    """Compile to a positional-argument function for fast evaluation.

    The arguments follow `names`.  With scalar=False the generated code
    uses numpy, so array arguments broadcast; domain violations surface
    as NaN or infinity for the caller to detect.  With scalar=True the
    code uses the math module and raises on domain violations.
    """
    import numpy as np

    mod = "math" if scalar else "np"
    argvars = {n: f"_a{i}" for i, n in enumerate(names)}
    lines: list = []
    counter = [0]
    result = _emit(e, {}, lines, argvars, mod, counter)
    sig = ", ".join(argvars[n] for n in names)
    src = f"def _compiled({sig}):\n" + "\n".join(lines) + f"\n    return {result}\n"
    ns = {"np": np, "math": math}
    exec(src, ns)
    return ns["_compiled"]


def compile_sum(e: Expr, names: Sequence[str], scalar: bool = False) -> Callable:
    """Compile to a function returning (value, magnitude).

    `value` is the full expression; `magnitude` is the sum of absolute
    values of its top-level additive terms, the natural scale for judging
    whether `value` is numerically zero.
    """
    import numpy as np

    mod = "math" if scalar else "np"
    absfn = "abs" if scalar else "np.abs"
    argvars = {n: f"_a{i}" for i, n in enumerate(names)}
    lines: list = []
    counter = [0]
    memo: dict = {}
    term_vars = [_emit(t, memo, lines, argvars, mod, counter) for t in split_terms(e)]
    value = " + ".join(term_vars)
    scale = " + ".join(f"{absfn}({v})" for v in term_vars)
    sig = ", ".join(argvars[n] for n in names)
    src = (f"def _compiled({sig}):\n" + "\n".join(lines)
           + f"\n    return ({value}), ({scale})\n")
    ns = {"np": np, "math": math}
    exec(src, ns)
    return ns["_compiled"]
