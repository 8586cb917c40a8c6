"""Polynomials in non-commuting selfadjoint variables.

Words are tuples of small integers indexing a per-polynomial symbol table
(``NCPolynomial.names``); the empty tuple is the unit word.  Binary
operations between polynomials with different tables remap both onto the
union table, ordered by first appearance.
"""

from __future__ import annotations

import json
import re
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "NCPolynomial",
    "PolynomialSyntaxError",
    "parse_polynomial",
    "adjoint",
    "is_selfadjoint",
    "evaluate",
]

ZERO_CUTOFF = 1e-14

Word = tuple  # tuple[int, ...]


class PolynomialSyntaxError(ValueError):
    """Raised by the parser; ``position`` is the 0-based offset into the text."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = f"\n  {text}\n  {' ' * position}^" if text else ""
        super().__init__(f"{message} at position {position}{pointer}")


def _clean(terms: Mapping[Word, complex]) -> dict:
    return {w: complex(c) for w, c in terms.items() if abs(c) >= ZERO_CUTOFF}


class NCPolynomial:
    """Finite sum of complex-weighted words in non-commuting variables.

    Instances are immutable and always held in canonical form: equal words
    merged, coefficients of modulus below ``1e-14`` dropped.
    """

    __slots__ = ("_terms", "_names", "_hash")

    def __init__(self, terms: Mapping[Word, complex] | None = None,
                 names: Sequence[str] = ()):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        terms = _clean(terms or {})
        for w in terms:
            if any(not 0 <= s < len(names) for s in w):
                raise ValueError(f"word {w} refers to an unknown symbol")
        # drop unused names so the table is canonical
        used = sorted({s for w in terms for s in w})
        if len(used) != len(names):
            remap = {old: new for new, old in enumerate(used)}
            terms = {tuple(remap[s] for s in w): c for w, c in terms.items()}
            names = tuple(names[i] for i in used)
        object.__setattr__(self, "_terms", MappingProxyType(terms))
        object.__setattr__(self, "_names", names)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, key, value):
        raise AttributeError("NCPolynomial is immutable")

    # -- construction -------------------------------------------------

    @classmethod
    def variable(cls, name: str) -> "NCPolynomial":
        return cls({(0,): 1.0}, (name,))

    @classmethod
    def constant(cls, c: complex) -> "NCPolynomial":
        return cls({(): c})

    @classmethod
    def from_named(cls, terms: Mapping[Sequence[str], complex]) -> "NCPolynomial":
        """Build from ``{("x", "y"): 1, (): 2, ...}``."""
        names: list[str] = []
        index: dict[str, int] = {}
        out: dict[Word, complex] = {}
        for word, c in terms.items():
            if isinstance(word, str):
                word = tuple(word.split(".")) if word else ()
            ids = []
            for name in word:
                if name not in index:
                    index[name] = len(names)
                    names.append(name)
                ids.append(index[name])
            key = tuple(ids)
            out[key] = out.get(key, 0) + complex(c)
        return cls(out, names)

    # -- accessors ----------------------------------------------------

    @property
    def terms(self) -> Mapping[Word, complex]:
        return self._terms

    @property
    def names(self) -> tuple:
        return self._names

    @property
    def variables(self) -> tuple:
        return self._names

    def named_terms(self) -> dict:
        """Terms keyed by tuples of variable names."""
        return {tuple(self._names[s] for s in w): c for w, c in self._terms.items()}

    def degree(self) -> int:
        return max((len(w) for w in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    # -- algebra ------------------------------------------------------

    def _aligned(self, other: "NCPolynomial"):
        if self._names == other._names:
            return self._names, dict(self._terms), dict(other._terms)
        names = list(self._names)
        for n in other._names:
            if n not in names:
                names.append(n)
        pos = {n: i for i, n in enumerate(names)}
        remap = [pos[n] for n in other._names]
        theirs = {tuple(remap[s] for s in w): c for w, c in other._terms.items()}
        return tuple(names), dict(self._terms), theirs

    @staticmethod
    def _coerce(value) -> "NCPolynomial":
        if isinstance(value, NCPolynomial):
            return value
        if isinstance(value, (int, float, complex, np.number)):
            return NCPolynomial.constant(complex(value))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        names, a, b = self._aligned(other)
        for w, c in b.items():
            a[w] = a.get(w, 0) + c
        return NCPolynomial(a, names)

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial({w: -c for w, c in self._terms.items()}, self._names)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        names, a, b = self._aligned(other)
        out: dict[Word, complex] = {}
        for w1, c1 in a.items():
            for w2, c2 in b.items():
                w = w1 + w2
                out[w] = out.get(w, 0) + c1 * c2
        return NCPolynomial(out, names)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = NCPolynomial.constant(1.0)
        for _ in range(int(k)):
            result = result * self
        return result

    def adjoint(self) -> "NCPolynomial":
        return NCPolynomial(
            {w[::-1]: c.conjugate() for w, c in self._terms.items()}, self._names
        )

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.named_terms() == other.named_terms()

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(frozenset(self.named_terms().items())))
        return self._hash

    def isclose(self, other: "NCPolynomial", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for c in diff.terms.values())

    # -- display / serialisation -------------------------------------

    def __repr__(self):
        return f"NCPolynomial({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for w, c in sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0])):
            word = "*".join(self._names[s] for s in w)
            coef = _format_coef(c)
            if not word:
                parts.append(coef)
            elif coef == "1":
                parts.append(word)
            elif coef == "-1":
                parts.append("-" + word)
            else:
                parts.append(f"{coef}*{word}")
        return " + ".join(parts).replace("+ -", "- ")

    def to_json(self) -> dict:
        """``{"x.y.x": [re, im], ...}``; the unit word is the empty key."""
        return {
            ".".join(self._names[s] for s in w): [c.real, c.imag]
            for w, c in self._terms.items()
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Sequence[float]] | str) -> "NCPolynomial":
        if isinstance(data, str):
            data = json.loads(data)
        terms = {}
        for key, value in data.items():
            if isinstance(value, (int, float)):
                value = [value, 0.0]
            re_, im_ = value
            terms[key] = complex(re_, im_)
        return cls.from_named(terms)


def _format_coef(c: complex) -> str:
    def num(v):
        return f"{v:.12g}"

    if c.imag == 0:
        return num(c.real)
    if c.real == 0:
        return f"{num(c.imag)}i"
    return f"({num(c.real)}{c.imag:+.12g}i)"


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise PolynomialSyntaxError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return PolynomialSyntaxError(message, tok[2], self.text)

    def parse(self) -> NCPolynomial:
        if self.peek()[0] == "end":
            raise self.error("empty polynomial")
        p = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            if tok[0] in ("id", "num") or tok[1] == "(":
                raise self.error("implicit multiplication is not allowed; use '*'")
            raise self.error(f"unexpected token {tok[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[1] == "*" and self.peek()[0] == "op":
            self.take()
            p = p * self.unary()
        return p

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+" and self.peek()[0] == "op":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            tok = self.peek()
            if tok[1] == "-":
                raise self.error("negative exponent", tok)
            if tok[0] != "num":
                raise self.error("exponent must be an integer literal", tok)
            self.take()
            if not tok[1].isdigit():
                raise self.error(f"non-integer exponent {tok[1]!r}", tok)
            if self.peek()[1] == "^":
                raise self.error("chained exponents are ambiguous; use parentheses")
            return base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return NCPolynomial.constant(float(value))
        if kind == "id":
            return NCPolynomial.variable(value)
        if value == "(":
            p = self.expr()
            close = self.take()
            if close[1] != ")":
                raise self.error("expected ')'", close)
            return p
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {value!r}", tok)


def parse_polynomial(text: str) -> NCPolynomial:
    """Parse ``text`` such as ``"x*y + y*x + x^2"`` into canonical form.

    Multiplication must be explicit; ``^`` takes a non-negative integer
    literal and binds tighter than unary minus.
    """
    return _Parser(text).parse()


def adjoint(p: NCPolynomial) -> NCPolynomial:
    """Reverse every word and conjugate every coefficient."""
    return p.adjoint()


def is_selfadjoint(p: NCPolynomial, atol: float = 0.0) -> bool:
    if atol:
        return p.isclose(p.adjoint(), atol)
    return p == p.adjoint()


def evaluate(p: NCPolynomial, assignment: Mapping[str, np.ndarray],
             size: int | None = None) -> np.ndarray:
    """Substitute square matrices for the variables of ``p``.

    Words are multiplied in order; the unit word becomes the identity.
    ``size`` is inferred from the assignment when omitted.
    """
    mats = {}
    for name in p.names:
        if name not in assignment:
            raise KeyError(f"no matrix assigned to variable {name!r}")
        mats[name] = np.asarray(assignment[name])
    if size is None:
        shapes = {m.shape for m in mats.values()}
        if not shapes:
            raise ValueError("size is required for a constant polynomial")
        size = next(iter(shapes))[0]
    for name, m in mats.items():
        if m.shape != (size, size):
            raise ValueError(f"matrix for {name!r} has shape {m.shape}, expected ({size}, {size})")
    ordered = [mats[n] for n in p.names]
    dtype = np.result_type(complex, *ordered) if ordered else complex
    out = np.zeros((size, size), dtype=dtype)
    # share prefix products between words
    cache: dict[Word, np.ndarray] = {}

    def word_matrix(w: Word) -> np.ndarray:
        if w in cache:
            return cache[w]
        if len(w) == 1:
            m = ordered[w[0]]
        else:
            m = word_matrix(w[:-1]) @ ordered[w[-1]]
        cache[w] = m
        return m

    for w, c in p.terms.items():
        if not w:
            out[np.diag_indices(size)] += c
        else:
            out += c * word_matrix(w)
    return out


def random_polynomial(rng: np.random.Generator, names: Iterable[str] = ("x", "y", "z"),
                      max_degree: int = 4, max_terms: int = 5,
                      complex_coefficients: bool = False) -> NCPolynomial:
    """A random polynomial, used by property tests and benchmarks."""
    names = tuple(names)
    terms = {}
    for _ in range(int(rng.integers(1, max_terms + 1))):
        d = int(rng.integers(0, max_degree + 1))
        word = tuple(names[int(i)] for i in rng.integers(0, len(names), size=d))
        c = float(np.round(rng.normal(), 3))
        if complex_coefficients:
            c = complex(c, float(np.round(rng.normal(), 3)))
        terms[word] = terms.get(word, 0) + c
    return NCPolynomial.from_named(terms)
