"""Selfadjoint linearizations of non-commutative polynomials.

A linearization of ``p`` is a matrix pencil

    p_hat = b0 ⊗ 1 + sum_j a_j ⊗ x_j = [[0, u], [v, Q]]

with ``p = -u Q^{-1} v``.  The construction here splits ``p = q + q*``,
linearizes ``q`` monomial by monomial (upper-bidiagonal ``Q`` blocks) and
symmetrizes, giving ``p_hat = [[0, u, v*], [u*, 0, Q*], [v, Q, 0]]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ncpoly import NCPolynomial, evaluate, is_selfadjoint

__all__ = [
    "Pencil",
    "Linearization",
    "NotSelfadjointError",
    "linearize",
    "split_selfadjoint",
    "verify_linearization",
    "schur_resolvent_check",
    "decompose",
    "assemble",
    "random_selfadjoint",
]


class NotSelfadjointError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Pencil:
    """Matrix of degree-<=1 polynomials: ``constant + sum_j coeffs[j] x_j``."""

    constant: np.ndarray
    coefficients: Mapping[str, np.ndarray]

    def __post_init__(self):
        c = np.asarray(self.constant, dtype=complex)
        coeffs = {k: np.asarray(v, dtype=complex) for k, v in self.coefficients.items()}
        for k, v in coeffs.items():
            if v.shape != c.shape:
                raise ValueError(f"coefficient for {k!r} has shape {v.shape}, expected {c.shape}")
        object.__setattr__(self, "constant", c)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def shape(self):
        return self.constant.shape

    def __getitem__(self, key) -> "Pencil":
        return Pencil(self.constant[key], {k: v[key] for k, v in self.coefficients.items()})

    def adjoint(self) -> "Pencil":
        # variables are selfadjoint
        return Pencil(self.constant.conj().T, {k: v.conj().T for k, v in self.coefficients.items()})

    def entry(self, i: int, j: int) -> NCPolynomial:
        terms = {(): self.constant[i, j]}
        for k, v in self.coefficients.items():
            terms[(k,)] = v[i, j]
        return NCPolynomial.from_named(terms)

    def evaluate(self, assignment: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        """Substitute ``n x n`` matrices; entry (i, j) becomes an n x n block."""
        out = np.kron(self.constant, np.eye(n))
        for k, v in self.coefficients.items():
            if np.any(v):
                out = out + np.kron(v, assignment[k])
        return out


@dataclass(frozen=True, eq=False)
class Linearization:
    """Selfadjoint pencil with a zero (1,1) entry.

    ``variables`` fixes the order of the coefficient matrices.
    """

    constant: np.ndarray
    coefficients: Mapping[str, np.ndarray]

    def __post_init__(self):
        pencil = Pencil(self.constant, self.coefficients)
        c = pencil.constant
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValueError("linearization must be a nonempty square pencil")
        for name, a in [("constant", c), *pencil.coefficients.items()]:
            if not np.allclose(a, a.conj().T, atol=1e-14, rtol=0):
                raise ValueError(f"{name} matrix is not selfadjoint")
        if abs(c[0, 0]) or any(abs(a[0, 0]) for a in pencil.coefficients.values()):
            raise ValueError("(1,1) entry of a linearization must be 0")
        object.__setattr__(self, "constant", c)
        object.__setattr__(self, "coefficients", dict(pencil.coefficients))

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    @property
    def variables(self) -> tuple:
        return tuple(self.coefficients)

    @property
    def pencil(self) -> Pencil:
        return Pencil(self.constant, self.coefficients)

    @property
    def u(self) -> Pencil:
        return self.pencil[:1, 1:]

    @property
    def v(self) -> Pencil:
        return self.pencil[1:, :1]

    @property
    def Q(self) -> Pencil:
        return self.pencil[1:, 1:]

    def constant_q_determinant(self) -> complex:
        q = self.constant[1:, 1:]
        return complex(np.linalg.det(q)) if q.size else 1.0

    def entry(self, i: int, j: int) -> NCPolynomial:
        return self.pencil.entry(i, j)

    def max_entry_degree(self) -> int:
        return 1 if any(np.any(a) for a in self.coefficients.values()) else 0

    def to_json(self) -> dict:
        def mat(a):
            a = np.asarray(a)
            if np.all(a.imag == 0):
                return a.real.tolist()
            return [[[x.real, x.imag] for x in row] for row in a]

        return {
            "size": self.size,
            "b0": mat(self.constant),
            "a": {k: mat(v) for k, v in self.coefficients.items()},
        }

    @classmethod
    def from_json(cls, data) -> "Linearization":
        if isinstance(data, str):
            data = json.loads(data)

        def mat(rows):
            a = np.asarray(rows, dtype=float)
            if a.ndim == 3:
                a = a[..., 0] + 1j * a[..., 1]
            return a

        return cls(mat(data["b0"]), {k: mat(v) for k, v in data["a"].items()})

    def to_text(self) -> str:
        def fmt(x: complex) -> str:
            if abs(x.imag) < 1e-15:
                s = f"{x.real:.6g}"
            else:
                s = f"{x.real:.4g}{x.imag:+.4g}i"
            return "0" if s in ("0", "-0") else s

        blocks = [("b0", self.constant)] + [(f"a_{k}", v) for k, v in self.coefficients.items()]
        lines = []
        for name, a in blocks:
            cells = [[fmt(complex(x)) for x in row] for row in a]
            width = max(len(c) for row in cells for c in row)
            lines.append(f"{name} =")
            lines.extend("  [" + " ".join(c.rjust(width) for c in row) + "]" for row in cells)
        return "\n".join(lines)


def split_selfadjoint(p: NCPolynomial) -> NCPolynomial:
    """A ``q`` with ``q + q* = p``.

    Self-reversed words give half their coefficient to ``q``; of each pair
    ``(w, reversed(w))`` the lexicographically smaller word keeps the full
    coefficient.
    """
    q = {}
    for word, c in p.named_terms().items():
        rev = word[::-1]
        if rev == word:
            q[word] = c / 2
        elif word < rev:
            q[word] = c
    return NCPolynomial.from_named(q)


def _linearize_q(q: NCPolynomial, names: Sequence[str]):
    """u (1 x K), v (K x 1), Q (K x K) pencils for q = -u Q^{-1} v."""
    terms = sorted(q.named_terms().items(), key=lambda kv: (len(kv[0]), kv[0]))
    K = sum(max(len(w) - 1, 1) for w, _ in terms)

    def zeros(shape):
        return Pencil(np.zeros(shape), {n: np.zeros(shape) for n in names})

    u, v, Q = zeros((1, K)), zeros((K, 1)), zeros((K, K))
    pos = 0
    for word, c in terms:
        d = len(word)
        if d <= 1:
            if d == 0:
                u.constant[0, pos] = c
            else:
                u.coefficients[word[0]][0, pos] = c
            v.constant[pos, 0] = 1.0
            Q.constant[pos, pos] = -1.0
            pos += 1
            continue
        k = d - 1
        u.coefficients[word[0]][0, pos] = c
        v.coefficients[word[-1]][pos + k - 1, 0] = 1.0
        for i in range(k):
            Q.constant[pos + i, pos + i] = -1.0
        for i, name in enumerate(word[1:-1]):
            Q.coefficients[name][pos + i, pos + i + 1] = 1.0
        pos += k
    return u, v, Q


def linearize(p: NCPolynomial, atol: float = 1e-12) -> Linearization:
    """Selfadjoint linearization of a selfadjoint polynomial.

    The result has size ``1 + 2K`` where ``K`` sums ``max(deg - 1, 1)``
    over the monomials of ``q``.
    """
    if not is_selfadjoint(p, atol=atol):
        raise NotSelfadjointError(f"polynomial {p} is not selfadjoint")
    names = tuple(p.names)
    q = split_selfadjoint(p)
    u, v, Q = _linearize_q(q, names)
    K = u.shape[1]
    N = 1 + 2 * K

    def place(get):
        out = np.zeros((N, N), dtype=complex)
        if K:
            uu, vv, QQ = get(u), get(v), get(Q)
            out[0, 1:K + 1] = uu[0]
            out[0, K + 1:] = vv[:, 0].conj()
            out[1:K + 1, 0] = uu[0].conj()
            out[1:K + 1, K + 1:] = QQ.conj().T
            out[K + 1:, 0] = vv[:, 0]
            out[K + 1:, 1:K + 1] = QQ
        return out

    constant = place(lambda P: P.constant)
    coeffs = {n: place(lambda P, n=n: P.coefficients[n]) for n in names}
    return Linearization(constant, coeffs)


def decompose(L: Linearization):
    """``(b0, [(variable, a_j), ...])`` with ``p_hat = b0 ⊗ 1 + sum a_j ⊗ x_j``."""
    return L.constant.copy(), [(k, v.copy()) for k, v in L.coefficients.items()]


def assemble(b0, coefficients) -> Linearization:
    return Linearization(np.asarray(b0), dict(coefficients))


def random_selfadjoint(rng: np.random.Generator, n: int) -> np.ndarray:
    """Selfadjoint matrix with centered unit-variance entries."""
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def _assignment(variables, rng, n):
    return {name: random_selfadjoint(rng, n) for name in variables}


def _all_variables(p: NCPolynomial, L: Linearization):
    return tuple(dict.fromkeys(tuple(p.names) + L.variables))


def _certificate_blocks(L: Linearization, X, n):
    U = L.u.evaluate(X, n)
    V = L.v.evaluate(X, n)
    Q = L.Q.evaluate(X, n)
    return U, V, Q


def verify_linearization(p: NCPolynomial, L: Linearization, trials: int = 10,
                         sizes: Sequence[int] = (5, 7), seed: int = 0) -> float:
    """Max over trials of ``||p(X) + U Q^{-1} V||_2`` on random selfadjoint X.

    Each trial runs once per matrix size in ``sizes``.
    """
    rng = np.random.default_rng(seed)
    names = _all_variables(p, L)
    worst = 0.0
    for _ in range(trials):
        for n in sizes:
            X = _assignment(names, rng, n)
            P = evaluate(p, X, n)
            if L.size == 1:
                worst = max(worst, float(np.linalg.norm(P, 2)))
                continue
            U, V, Q = _certificate_blocks(L, X, n)
            try:
                QinvV = np.linalg.solve(Q, V)
            except np.linalg.LinAlgError as err:
                raise np.linalg.LinAlgError(f"substituted Q is singular: {err}") from err
            worst = max(worst, float(np.linalg.norm(P + U @ QinvV, 2)))
    return worst


def schur_resolvent_check(p: NCPolynomial, L: Linearization, z: complex,
                          trials: int = 10, sizes: Sequence[int] = (5, 7),
                          seed: int = 0) -> float:
    """Compare the (1,1) block of ``(Λ(z) - p_hat(X))^{-1}`` with ``(z - p(X))^{-1}``.

    ``Λ(z)`` has ``z`` in the (1,1) slot and zeros elsewhere.
    """
    if complex(z).imag <= 0:
        raise ValueError("schur_resolvent_check requires Im z > 0")
    rng = np.random.default_rng(seed)
    names = _all_variables(p, L)
    worst = 0.0
    for _ in range(trials):
        for n in sizes:
            X = _assignment(names, rng, n)
            P = evaluate(p, X, n)
            lam = np.zeros((L.size, L.size), dtype=complex)
            lam[0, 0] = z
            big = np.kron(lam, np.eye(n)) - L.pencil.evaluate(X, n)
            top = np.linalg.inv(big)[:n, :n]
            direct = np.linalg.inv(z * np.eye(n) - P)
            worst = max(worst, float(np.linalg.norm(top - direct, 2)))
    return worst
