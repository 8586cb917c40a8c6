"""Scalar free additive convolution.

Two routes: formal power series (moments, free cumulants, R-transform)
and the analytic subordination fixed point

    f_z(w) = F_y(F_x(w) - w + z) - (F_x(w) - w),   F = 1/G,

whose fixed point omega(z) gives ``G_{x+y}(z) = G_x(omega(z))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import DensityEstimate, SpectralMeasure, stieltjes_invert
from .nccomb import moments_to_free_cumulants

__all__ = [
    "PowerSeries",
    "ConvergenceError",
    "moment_series_from_cumulant_series",
    "r_transform",
    "subordination_omega",
    "free_add_cauchy",
    "free_add_convolve",
    "default_tol",
]

MAX_ITER = 100_000


class ConvergenceError(RuntimeError):
    """Fixed-point iteration hit its cap; carries the last residual."""

    def __init__(self, message: str, residual=None, index=None, iterations=None):
        self.residual = residual
        self.index = index
        self.iterations = iterations
        super().__init__(message)


@dataclass(frozen=True)
class PowerSeries:
    """Truncated power series ``c_0 + c_1 z + ... + c_n z^n``."""

    coefficients: tuple

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coefficients)
        if not coeffs:
            raise ValueError("power series needs at least one coefficient")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __getitem__(self, k):
        return self.coefficients[k]

    def array(self) -> np.ndarray:
        return np.array(self.coefficients)

    def truncate(self, order: int) -> "PowerSeries":
        c = list(self.coefficients[: order + 1])
        c += [0] * (order + 1 - len(c))
        return PowerSeries(tuple(c))

    def _order_with(self, other) -> int:
        return min(self.order, other.order)

    def __add__(self, other):
        if not isinstance(other, PowerSeries):
            other = PowerSeries((other,))
            other = other.truncate(self.order)
        n = self._order_with(other)
        return PowerSeries(tuple(a + b for a, b in zip(self.array()[: n + 1], other.array()[: n + 1])))

    def __sub__(self, other):
        return self + (-1) * other

    def __rmul__(self, scalar):
        return PowerSeries(tuple(scalar * c for c in self.coefficients))

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return self.__rmul__(other)
        n = self._order_with(other)
        prod = np.convolve(self.array()[: n + 1], other.array()[: n + 1])[: n + 1]
        return PowerSeries(tuple(prod))

    def shift(self) -> "PowerSeries":
        """Multiply by z, keeping the order."""
        return PowerSeries((0,) + self.coefficients[:-1])

    def compose(self, inner: "PowerSeries") -> "PowerSeries":
        """``self(inner(z))``; requires ``inner[0] == 0``."""
        if abs(inner[0]) > 0:
            raise ValueError("inner series must have zero constant term")
        n = self.order
        inner = inner.truncate(n)
        result = PowerSeries((self[n],)).truncate(n)
        for k in range(n - 1, -1, -1):
            result = result * inner + PowerSeries((self[k],)).truncate(n)
        return result

    def reciprocal(self) -> "PowerSeries":
        if self[0] == 0:
            raise ZeroDivisionError("series with zero constant term has no reciprocal")
        a = self.array()
        b = [1 / a[0]]
        for k in range(1, len(a)):
            b.append(-sum(a[j] * b[k - j] for j in range(1, k + 1)) / a[0])
        return PowerSeries(tuple(b))


def moment_series_from_cumulant_series(C: PowerSeries) -> PowerSeries:
    """Solve ``M(z) = C[z M(z)]`` for M, order by order."""
    if abs(C[0] - 1) > 1e-14:
        raise ValueError("cumulant series must have constant term 1")
    n = C.order
    M = PowerSeries((1,)).truncate(n)
    # each pass fixes one more coefficient
    for _ in range(n):
        M = C.compose(M.shift())
    return M


def r_transform(mu: SpectralMeasure, order: int) -> PowerSeries:
    """``R(z) = sum_{k>=1} kappa_k z^{k-1}`` up to ``z^{order-1}``."""
    if order > 14:
        raise ValueError("order at most 14")
    kappa = moments_to_free_cumulants(mu.moments(order))
    return PowerSeries(tuple(kappa))


def default_tol(z) -> float:
    return 1e-9 if np.min(np.imag(z)) < 1e-4 else 1e-12


def _F(mu: SpectralMeasure, w):
    return 1.0 / mu.cauchy_any(w)


def damped_iterate(step, w0, tol, max_iter, keep_mask=None):
    """Vectorised fixed-point loop with averaging once a residual grows.

    ``step(w, active)`` evaluates the map at ``w[active]``.  A point stops
    once its residual is at most ``tol * max(1, |w|)``.  Returns
    ``(w, residual, iterations)`` arrays; raises :class:`ConvergenceError`
    if any point fails to converge.
    """
    w = np.array(w0, copy=True)
    n = w.shape[0]
    active = np.ones(n, dtype=bool)
    damped = np.zeros(n, dtype=bool)
    last = np.full(n, np.inf)
    residual = np.full(n, np.inf)
    iterations = np.zeros(n, dtype=int)
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        fw = step(w[idx], idx)
        diff = fw - w[idx]
        res = np.abs(diff).reshape(idx.size, -1).max(axis=1)
        damp = damped[idx]
        new = np.where(damp.reshape((-1,) + (1,) * (w.ndim - 1)), (fw + w[idx]) / 2, fw)
        if keep_mask is not None:
            keep_mask(new, idx, it)
        w[idx] = new
        # relative to |w|: rounding leaves a floor near eps * |w|
        limit = tol * np.maximum(1.0, np.abs(fw).reshape(idx.size, -1).max(axis=1))
        grew = (res > last[idx]) & (res > 100 * limit)
        damped[idx] |= grew
        last[idx] = res
        residual[idx] = res
        iterations[idx] = it
        done = res <= limit
        active[idx[done]] = False
    if active.any():
        bad = np.flatnonzero(active)
        raise ConvergenceError(
            f"fixed point did not converge at {bad.size} point(s) after {max_iter} iterations",
            residual=residual[bad], index=bad, iterations=max_iter,
        )
    return w, residual, iterations


def subordination_omega(mu_x: SpectralMeasure, mu_y: SpectralMeasure, z, tol=None,
                        max_iter: int = MAX_ITER, return_info: bool = False):
    """Subordination function omega(z) with ``G_{x+y} = G_x o omega``.

    Iterates ``f_z`` from ``w0 = z``.  ``z`` may be a scalar or an array
    of points in the upper half-plane.
    """
    z_in = np.asarray(z, dtype=complex)
    if np.any(z_in.imag <= 0):
        raise ValueError("subordination requires Im z > 0")
    zf = z_in.reshape(-1)
    if tol is None:
        tol = default_tol(zf)

    def step(w, idx):
        hx = _F(mu_x, w) - w
        return _F(mu_y, hx + zf[idx]) - hx

    w, residual, iterations = damped_iterate(step, zf, tol, max_iter)
    w = w.reshape(z_in.shape)
    out = w if w.ndim else complex(w)
    if return_info:
        return out, {"residual": residual.reshape(z_in.shape), "iterations": iterations.reshape(z_in.shape)}
    return out


def free_add_cauchy(mu_x: SpectralMeasure, mu_y: SpectralMeasure, z, tol=None):
    """``G_{x+y}(z) = G_x(omega(z))``."""
    omega = subordination_omega(mu_x, mu_y, z, tol)
    out = mu_x.cauchy_any(omega)
    return out if np.ndim(out) else complex(out)


def free_add_convolve(mu_x: SpectralMeasure, mu_y: SpectralMeasure, grid, eps: float,
                      tol=None, richardson: bool = False) -> DensityEstimate:
    """Density of ``mu_x ⊞ mu_y`` on ``grid`` at height ``eps``."""
    return stieltjes_invert(lambda z: free_add_cauchy(mu_x, mu_y, z, tol), grid, eps, richardson)
