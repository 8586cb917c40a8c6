"""Matrix-valued Cauchy transforms and operator-valued subordination.

A summand ``x_hat = c ⊗ 1 + a ⊗ x`` with scalar law ``mu`` has
``M_N``-valued Cauchy transform

    G(b) = int (b - c - a t)^{-1} dmu(t),   b in H+(M_N).

Two summands free over ``M_N`` are added with the fixed point of
``f_b(w) = h_y(h_x(w) + b) + b``, ``h(w) = G(w)^{-1} - w``.

All transforms are batched: matrix points have shape ``(P, N, N)`` and
the fixed-point iteration runs on all ``P`` points at once.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linearize import Linearization, decompose, linearize
from .measures import Atomic, DensityEstimate, SpectralMeasure
from .ncpoly import NCPolynomial, is_selfadjoint
from .scalarconv import MAX_ITER, ConvergenceError

__all__ = [
    "MatrixPoint",
    "OVSummand",
    "SubordinatedSum",
    "HalfPlaneError",
    "ov_cauchy",
    "bms_fixed_point",
    "regularized_point",
    "polynomial_cauchy",
    "polynomial_density",
    "epsilon_extrapolate",
    "default_threads",
]

QUAD_TOL = 1e-10
QUAD_NODE_CAP = 4096
GL_ORDER = 16
SPECTRAL_COND_LIMIT = 1e8
# series branch of the scalar kernel: |theta| * radius below the ratio
SERIES_RATIO = 0.2
SERIES_TERMS = 26
DIRECT_ATOM_LIMIT = 64

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


class HalfPlaneError(RuntimeError):
    """An iterate left the matrix upper half-plane."""

    def __init__(self, message, iteration=None, index=None):
        self.iteration = iteration
        self.index = index
        super().__init__(message)


def imag_part(b: np.ndarray) -> np.ndarray:
    return (b - np.swapaxes(b.conj(), -1, -2)) / 2j


def min_imag_eigenvalue(b: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(imag_part(np.asarray(b, dtype=complex)))[..., 0]


@dataclass(frozen=True, eq=False)
class MatrixPoint:
    """An element of H+(M_N): ``Im b = (b - b*)/2i`` positive definite."""

    value: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.value, dtype=complex)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("matrix point must be square")
        lo = min_imag_eigenvalue(b)
        if not lo > 0:
            raise HalfPlaneError(f"Im b has smallest eigenvalue {lo:.3g}; not in H+")
        object.__setattr__(self, "value", b)

    @property
    def size(self) -> int:
        return self.value.shape[0]


def _as_points(b) -> tuple:
    """Batch of matrices ``(P, N, N)`` plus a flag for a single input."""
    if isinstance(b, MatrixPoint):
        b = b.value
    b = np.asarray(b, dtype=complex)
    if b.ndim == 2:
        return b[None], True
    if b.ndim != 3:
        raise ValueError("expected an (N, N) matrix or a (P, N, N) batch")
    return b, False


def _check_upper(b: np.ndarray, where: str):
    lo = min_imag_eigenvalue(b)
    if not np.all(lo > 0):
        bad = np.flatnonzero(~(lo > 0))
        raise HalfPlaneError(f"{where}: {bad.size} point(s) not in H+", index=bad)


@dataclass(frozen=True, eq=False)
class OVSummand:
    """``c ⊗ 1 + a ⊗ x`` with ``x`` distributed according to ``law``."""

    c: np.ndarray
    a: np.ndarray
    law: SpectralMeasure
    _rank: tuple = field(init=False, repr=False)
    _radius: float = field(init=False, repr=False)
    _series: object = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        a = np.asarray(self.a, dtype=complex)
        if c.shape != a.shape or c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("c and a must be square matrices of equal size")
        for name, m in (("c", c), ("a", a)):
            if not np.allclose(m, m.conj().T, atol=1e-14, rtol=0):
                raise ValueError(f"{name} must be selfadjoint")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        d, U = np.linalg.eigh(a)
        scale = np.abs(d).max() if d.size else 0.0
        keep = np.abs(d) > 1e-13 * max(scale, 1.0)
        object.__setattr__(self, "_rank", (d[keep], U[:, keep]))
        lo, hi = self.law.support()
        object.__setattr__(self, "_radius", max(abs(lo), abs(hi)))
        object.__setattr__(self, "_series", None)

    def series_moments(self) -> np.ndarray:
        """``m_1 .. m_SERIES_TERMS`` of the law, computed once."""
        if self._series is None:
            object.__setattr__(self, "_series", np.array(self.law.moments(SERIES_TERMS), dtype=complex))
        return self._series

    @property
    def size(self) -> int:
        return self.c.shape[0]

    def is_zero(self) -> bool:
        return not np.any(self.c) and not np.any(self.a)

    def cauchy(self, b, method: str = "auto") -> np.ndarray:
        return ov_cauchy(self, b, method)


def _direct_atoms(s: OVSummand, B: np.ndarray, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(B)
    for tk, wk in zip(t, w):
        out += wk * np.linalg.inv(B - tk * s.a)
    return out


def _phi(s: OVSummand, theta: np.ndarray) -> np.ndarray:
    """``int t / (1 - t theta) dmu(t)`` for nonreal-reciprocal ``theta``.

    The closed form ``(G(1/theta)/theta - 1)/theta`` cancels badly when
    ``|theta|`` is small against the support, so there the moment series
    ``sum_k m_{k+1} theta^k`` is summed instead.
    """
    out = np.empty_like(theta)
    small = np.abs(theta) * max(s._radius, 1e-300) < SERIES_RATIO
    if np.any(~small):
        th = theta[~small]
        out[~small] = (s.law.cauchy_any(1.0 / th) / th - 1.0) / th
    if np.any(small):
        m = s.series_moments()
        th = theta[small]
        acc = np.zeros_like(th)
        for mk in m[::-1]:
            acc = acc * th + mk
        out[small] = acc
    return out


def _spectral(s: OVSummand, B: np.ndarray, Binv: np.ndarray):
    """Exact transform through the nonzero eigenpairs of ``a``.

    With ``a = U D U*``, Woodbury reduces ``(B - t a)^{-1}`` to an
    ``r x r`` rational function of ``t``; diagonalising ``D U* B^{-1} U``
    turns the integral into scalar Cauchy transforms off the support.
    Returns the transform and a per-point flag for ill-conditioned
    eigenbases.
    """
    d, U = s._rank
    if d.size == 0:
        return Binv.copy(), np.zeros(B.shape[0], dtype=bool)
    BU = Binv @ U  # (P, N, r)
    UB = U.conj().T @ Binv  # (P, r, N)
    S = U.conj().T @ BU  # (P, r, r)
    M = d[:, None] * S
    theta, W = np.linalg.eig(M)
    cond = np.linalg.cond(W)
    bad = ~(cond < SPECTRAL_COND_LIMIT)
    Winv = np.linalg.inv(np.where(bad[:, None, None], np.eye(d.size), W))
    phi = _phi(s, theta)
    core = (W * phi[:, None, :]) @ Winv * d[None, None, :]
    return Binv + BU @ core @ UB, bad


def _gl_interval(f, lo, hi):
    x = (hi - lo) / 2 * _GL_X + (hi + lo) / 2
    return (hi - lo) / 2 * np.tensordot(_GL_W, f(x), axes=(0, 0))


def _adaptive_gl(f, lo, hi, tol=QUAD_TOL, node_cap=QUAD_NODE_CAP, pieces=8):
    """Adaptive Gauss-Legendre with bisection; ``f`` maps nodes to arrays."""
    edges = np.linspace(lo, hi, pieces + 1)
    stack = [(a, b, _gl_interval(f, a, b)) for a, b in zip(edges[:-1], edges[1:])]
    nodes = GL_ORDER * pieces
    total = 0.0
    while stack:
        a, b, whole = stack.pop()
        m = (a + b) / 2
        left, right = _gl_interval(f, a, m), _gl_interval(f, m, b)
        nodes += 2 * GL_ORDER
        halves = left + right
        if np.max(np.abs(halves - whole)) < tol or b - a < 1e-12:
            total = total + halves
        elif nodes >= node_cap:
            total = total + halves
            warnings.warn(f"quadrature node cap {node_cap} reached before tolerance {tol}",
                          RuntimeWarning, stacklevel=3)
            for a2, b2, w2 in stack:
                total = total + w2
            stack = []
        else:
            stack.append((a, m, left))
            stack.append((m, b, right))
    return total


def _quadrature_one(s: OVSummand, B1: np.ndarray, tol: float) -> np.ndarray:
    at, aw, cont = s.law.quadrature_parts()
    out = _direct_atoms(s, B1[None], at, aw)[0] if at.size else np.zeros_like(B1)
    if cont is not None:
        tmap, wmap = cont

        def f(th):
            t = tmap(th)
            return np.linalg.inv(B1[None] - t[:, None, None] * s.a[None]) * wmap(th)[:, None, None]

        out = out + _adaptive_gl(f, 0.0, np.pi, tol)
    return out


def ov_cauchy(s: OVSummand, b, method: str = "auto", tol: float = QUAD_TOL) -> np.ndarray:
    """``E[(b - s)^{-1}]`` for ``b`` in H+(M_N); batched over a leading axis.

    ``method`` is ``"quadrature"`` (adaptive Gauss-Legendre, entrywise
    tolerance ``tol``), ``"spectral"`` (exact low-rank reduction), or
    ``"auto"``: direct sums for small atomic laws, otherwise spectral
    with quadrature on points whose eigenbasis is ill-conditioned.
    """
    bb, single = _as_points(b)
    if bb.shape[1:] != s.c.shape:
        raise ValueError(f"matrix point of size {bb.shape[1]} for summand of size {s.size}")
    B = bb - s.c
    if method == "quadrature":
        out = np.stack([_quadrature_one(s, B1, tol) for B1 in B])
    elif method in ("spectral", "auto"):
        if method == "auto" and isinstance(s.law, Atomic) and len(s.law.atoms) <= DIRECT_ATOM_LIMIT:
            out = _direct_atoms(s, B, s.law.locations, s.law.weights)
        else:
            Binv = np.linalg.inv(B)
            out, bad = _spectral(s, B, Binv)
            if np.any(bad):
                for i in np.flatnonzero(bad):
                    out[i] = _quadrature_one(s, B[i], tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if single else out


class SubordinatedSum:
    """Sum of a summand-like object and an :class:`OVSummand`, free over M_N.

    Its Cauchy transform is evaluated through the operator-valued
    subordination fixed point, so sums of three or more variables nest.
    """

    def __init__(self, first, second: OVSummand, tol: float = 1e-10,
                 max_iter: int = MAX_ITER, method: str = "auto"):
        self.first = first
        self.second = second
        self.tol = tol
        self.max_iter = max_iter
        self.method = method

    @property
    def size(self) -> int:
        return self.second.size

    def is_zero(self) -> bool:
        return False

    def cauchy(self, b, method: str | None = None) -> np.ndarray:
        bb, single = _as_points(b)
        omega, _ = bms_fixed_point(self.first, self.second, bb, self.tol,
                                   max_iter=self.max_iter, method=self.method)
        out = _cauchy_of(self.first, omega, self.method)
        return out[0] if single else out


def _cauchy_of(s, b, method):
    if isinstance(s, OVSummand):
        return ov_cauchy(s, b, method)
    return s.cauchy(b)


def _h(s, w, method):
    return np.linalg.inv(_cauchy_of(s, w, method)) - w


@dataclass
class FixedPointInfo:
    residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    min_imag: np.ndarray


def bms_fixed_point(x, y, b, tol: float = 1e-10, max_iter: int = MAX_ITER,
                    method: str = "auto", w0=None, raise_on_fail: bool = True):
    """Subordination point ``omega(b)`` with ``G_{x+y}(b) = G_x(omega(b))``.

    Iterates ``f_b(w) = h_y(h_x(w) + b) + b`` from ``w0 = b`` until the
    largest entry of ``f_b(w) - w`` is at most ``tol * max(1, |f_b(w)|)``.  Every accepted
    iterate is checked to lie in H+(M_N).  Once a point's residual grows
    the point switches to averaged steps ``(f_b(w) + w)/2``.

    Returns ``(omega, info)``; ``omega`` has the shape of ``b``.
    """
    bb, single = _as_points(b)
    _check_upper(bb, "bms_fixed_point input")
    if getattr(y, "is_zero", lambda: False)():
        info = FixedPointInfo(np.zeros(len(bb)), np.zeros(len(bb), int),
                              np.ones(len(bb), bool), min_imag_eigenvalue(bb))
        return (bb[0] if single else bb.copy()), info

    P = bb.shape[0]
    w = bb.copy() if w0 is None else _as_points(w0)[0].astype(complex).copy()
    active = np.ones(P, dtype=bool)
    damped = np.zeros(P, dtype=bool)
    last = np.full(P, np.inf)
    residual = np.full(P, np.inf)
    iterations = np.zeros(P, dtype=int)
    min_imag = min_imag_eigenvalue(w)

    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        wi, bi = w[idx], bb[idx]
        fw = _h(y, _h(x, wi, method) + bi, method) + bi
        res = np.abs(fw - wi).reshape(idx.size, -1).max(axis=1)
        new = np.where(damped[idx][:, None, None], (fw + wi) / 2, fw)
        lo = min_imag_eigenvalue(new)
        if not np.all(lo > 0):
            bad = idx[~(lo > 0)]
            raise HalfPlaneError(
                f"iterate left H+ at iteration {it} for {bad.size} point(s)",
                iteration=it, index=bad)
        w[idx] = new
        min_imag[idx] = np.minimum(min_imag[idx], lo)
        # rounding puts a floor near eps * |w| under the residual
        limit = tol * np.maximum(1.0, np.abs(fw).reshape(idx.size, -1).max(axis=1))
        damped[idx] |= (res > last[idx]) & (res > 100 * limit)
        last[idx] = res
        residual[idx] = res
        iterations[idx] = it
        active[idx[res <= limit]] = False

    info = FixedPointInfo(residual, iterations, ~active, min_imag)
    if raise_on_fail and active.any():
        bad = np.flatnonzero(active)
        raise ConvergenceError(
            f"operator-valued fixed point did not converge at {bad.size} point(s) "
            f"after {max_iter} iterations", residual=residual[bad], index=bad,
            iterations=max_iter)
    return (w[0] if single else w), info


# ---------------------------------------------------------------------------
# polynomial pipeline


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("FREECONV_THREADS", "1")))
    except ValueError:
        return 1


def regularized_point(t, N: int, eps: float, z_eps: float | None = None) -> np.ndarray:
    """``diag(t + i z_eps, i eps, ..., i eps)`` for each ``t`` (``z_eps`` defaults to ``eps``)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z_eps = eps if z_eps is None else z_eps
    b = np.zeros((t.size, N, N), dtype=complex)
    idx = np.arange(N)
    b[:, idx, idx] = 1j * eps
    b[:, 0, 0] = t + 1j * z_eps
    return b


def build_summands(p: NCPolynomial | Linearization, laws: Mapping[str, SpectralMeasure],
                   constant_to: str | int = 0) -> list:
    """One :class:`OVSummand` per variable; the constant ``b0`` goes to
    summand ``constant_to`` (index or variable name)."""
    L = p if isinstance(p, Linearization) else linearize(p)
    b0, coeffs = decompose(L)
    coeffs = [(k, a) for k, a in coeffs if np.any(a)]
    if not coeffs:
        raise ValueError("polynomial has no variables")
    missing = [k for k, _ in coeffs if k not in laws]
    if missing:
        raise KeyError(f"no law given for variable(s) {missing}")
    if isinstance(constant_to, str):
        constant_to = [k for k, _ in coeffs].index(constant_to)
    zero = np.zeros_like(b0)
    return [OVSummand(b0 if i == constant_to else zero, a, laws[k])
            for i, (k, a) in enumerate(coeffs)]


def _fold(summands: Sequence[OVSummand], tol, max_iter, method):
    """Left fold of all but the last summand into nested subordinated sums.

    Experimental for three or more variables: every evaluation of a
    partial sum runs its own fixed point, so cost grows with nesting depth.
    """
    acc = summands[0]
    for s in summands[1:-1]:
        acc = SubordinatedSum(acc, s, tol, max_iter, method)
    return acc


def _chunks(n: int, parts: int):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@dataclass
class PipelineResult:
    cauchy: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    min_imag: np.ndarray


def polynomial_cauchy(p, laws, grid, eps: float, tol: float = 1e-10, *,
                      z_eps: float | None = None, method: str = "auto",
                      max_iter: int = MAX_ITER, constant_to=0, threads: int | None = None,
                      warm_start: bool = False, skip_bad: bool = False) -> PipelineResult:
    """(1,1) entry of ``G_{p_hat}(Λ_eps(t))`` for every ``t`` in ``grid``."""
    if isinstance(p, NCPolynomial) and not is_selfadjoint(p, atol=1e-12):
        raise ValueError(f"polynomial {p} is not selfadjoint")
    summands = build_summands(p, laws, constant_to)
    N = summands[0].size
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    b = regularized_point(grid, N, eps, z_eps)
    P = grid.size

    if len(summands) == 1:
        G = ov_cauchy(summands[0], b, method)
        return PipelineResult(G[:, 0, 0], np.ones(P, bool), np.zeros(P, int),
                              min_imag_eigenvalue(b))

    x = _fold(summands, tol, max_iter, method)
    y = summands[-1]

    def solve(lo, hi, w0=None):
        omega, info = bms_fixed_point(x, y, b[lo:hi], tol, max_iter, method,
                                      w0=w0, raise_on_fail=False)
        G = _cauchy_of(x, omega, method)
        return G[:, 0, 0], info

    if warm_start:
        # sequential sweep, each point starts from its neighbour's solution
        parts = []
        w_prev = None
        for i in range(P):
            w0 = None if w_prev is None else w_prev + (b[i] - b[i - 1])
            omega, info = bms_fixed_point(x, y, b[i:i + 1], tol, max_iter, method,
                                          w0=w0, raise_on_fail=False)
            if min_imag_eigenvalue(omega)[0] <= 0 or not info.converged[0]:
                omega, info = bms_fixed_point(x, y, b[i:i + 1], tol, max_iter, method,
                                              raise_on_fail=False)
            w_prev = omega
            parts.append((_cauchy_of(x, omega, method)[:, 0, 0], info))
    else:
        threads = default_threads() if threads is None else threads
        spans = _chunks(P, threads)
        if threads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(lambda s: solve(*s), spans))
        else:
            parts = [solve(*s) for s in spans]

    G = np.concatenate([g for g, _ in parts])
    converged = np.concatenate([i.converged for _, i in parts])
    iterations = np.concatenate([i.iterations for _, i in parts])
    min_imag = np.concatenate([i.min_imag for _, i in parts])
    if not converged.all():
        if not skip_bad:
            bad = np.flatnonzero(~converged)
            raise ConvergenceError(
                f"fixed point did not converge at t = {grid[bad[:5]].tolist()}"
                f"{' ...' if bad.size > 5 else ''}", index=bad, iterations=max_iter)
        G = np.where(converged, G, complex(np.nan, np.nan))
    return PipelineResult(G, converged, iterations, min_imag)


def _density_from(result: PipelineResult) -> np.ndarray:
    return -result.cauchy.imag / np.pi


def polynomial_density(p, laws, grid, eps: float = 1e-3, tol: float = 1e-10,
                       **kwargs) -> DensityEstimate:
    """Density of ``p(x_1, ..., x_k)`` for free ``x_j ~ laws[x_j]``.

    Linearizes ``p``, solves the operator-valued subordination problem at
    ``Λ_eps(t) = diag(t + i eps, i eps, ...)`` and reads the density off
    the (1,1) entry.  Keyword arguments go to :func:`polynomial_cauchy`.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    result = polynomial_cauchy(p, laws, grid, eps, tol, **kwargs)
    rho = _density_from(result)
    dens = np.where(np.isnan(rho), np.nan, np.maximum(rho, 0.0))
    return DensityEstimate(grid, dens, eps, {
        "converged": result.converged, "iterations": result.iterations,
        "min_imag": result.min_imag, "raw": rho,
    })


def epsilon_extrapolate(p, laws, grid, schedule: Sequence[float], tol: float = 1e-10,
                        **kwargs) -> DensityEstimate:
    """Extrapolate densities computed at several ``eps`` linearly to 0.

    With two heights this is Richardson's ``(e1 r2 - e2 r1)/(e1 - e2)``;
    with more, the intercept of a least-squares line.  Clamped at 0.
    """
    schedule = [float(e) for e in schedule]
    if len(schedule) < 2 or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule needs at least two strictly decreasing eps values")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    raws = [_density_from(polynomial_cauchy(p, laws, grid, e, tol, **kwargs)) for e in schedule]
    R = np.vstack(raws)
    E = np.asarray(schedule)
    A = np.vstack([np.ones_like(E), E]).T
    coef, *_ = np.linalg.lstsq(A, R, rcond=None)
    rho = coef[0]
    return DensityEstimate(grid, np.maximum(rho, 0.0), 0.0,
                           {"schedule": schedule, "per_eps": raws})
