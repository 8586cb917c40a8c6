"""Compactly supported probability measures on the real line.

Every measure exposes its moments, its Cauchy transform
``G(z) = int 1/(z - t) dmu(t)`` and a quadrature description used by the
matrix-valued transforms in :mod:`freeconv.ovconv`.
"""

from __future__ import annotations

import csv
import io
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .nccomb import free_cumulants_to_moments

__all__ = [
    "SpectralMeasure",
    "Semicircle",
    "MarchenkoPastur",
    "Atomic",
    "SampledDensity",
    "DensityEstimate",
    "StieltjesInversionError",
    "measure_from_json",
    "load_measure",
    "stieltjes_invert",
    "sqrt_branch",
]

MASS_TOL = 1e-9


def sqrt_branch(z, a, b):
    """``sqrt((z - a)(z - b))`` continued from ``+z`` at infinity.

    Taking the principal root of each factor puts the cut exactly on
    ``[a, b]``; the result is analytic on both half-planes.
    """
    z = np.asarray(z, dtype=complex)
    return np.sqrt(z - a) * np.sqrt(z - b)


def _require_upper(z):
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("Cauchy transform requires Im z > 0")
    return z


class SpectralMeasure(ABC):
    """Base class; subclasses are frozen dataclasses."""

    kind: str = "abstract"

    @abstractmethod
    def support(self) -> tuple:
        """Closed interval containing the support."""

    @abstractmethod
    def moment(self, k: int) -> float:
        ...

    def moments(self, n: int) -> list:
        """m_1 .. m_n."""
        return [self.moment(k) for k in range(1, n + 1)]

    @abstractmethod
    def cauchy_any(self, z) -> np.ndarray:
        """Cauchy transform anywhere off the support, either half-plane."""

    def cauchy(self, z):
        """Cauchy transform on the upper half-plane."""
        z = _require_upper(z)
        out = self.cauchy_any(z)
        return out if out.ndim else complex(out)

    @abstractmethod
    def quadrature_parts(self):
        """``(atom_t, atom_w, continuous)`` describing ``dmu``.

        ``continuous`` is ``None`` or a pair of callables
        ``(tmap, wmap)`` with ``int f dmu_c = int_0^pi f(tmap(th)) wmap(th) dth``
        and a smooth ``wmap``.
        """

    def density(self, t) -> np.ndarray:
        """Density of the absolutely continuous part."""
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def density_estimate(self, grid) -> "DensityEstimate":
        grid = np.asarray(grid, dtype=float)
        return DensityEstimate(grid, self.density(grid), 0.0)

    @abstractmethod
    def to_json(self) -> dict:
        ...


@dataclass(frozen=True)
class Semicircle(SpectralMeasure):
    mean: float = 0.0
    variance: float = 1.0
    kind = "semicircle"

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("semicircle variance must be positive")

    @property
    def radius(self) -> float:
        return 2.0 * np.sqrt(self.variance)

    def support(self):
        return (self.mean - self.radius, self.mean + self.radius)

    def moment(self, k: int) -> float:
        if k == 0:
            return 1.0
        kappa = [self.mean, self.variance] + [0.0] * (k - 2)
        return float(free_cumulants_to_moments(kappa[:k])[k - 1])

    def cauchy_any(self, z):
        # root of variance*G^2 - (z - mean) G + 1 = 0 vanishing at infinity
        w = np.asarray(z, dtype=complex) - self.mean
        r = self.radius
        return (w - sqrt_branch(w, -r, r)) / (2.0 * self.variance)

    def density(self, t):
        t = np.asarray(t, dtype=float) - self.mean
        return np.sqrt(np.clip(self.radius ** 2 - t * t, 0.0, None)) / (2 * np.pi * self.variance)

    def quadrature_parts(self):
        m, r = self.mean, self.radius
        return (
            np.empty(0), np.empty(0),
            (lambda th: m + r * np.cos(th), lambda th: (2.0 / np.pi) * np.sin(th) ** 2),
        )

    def to_json(self):
        return {"type": "semicircle", "mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class MarchenkoPastur(SpectralMeasure):
    """Free Poisson law with rate ``ratio`` and jump size ``scale``.

    Free cumulants are ``kappa_n = ratio * scale**n``; for ``ratio < 1``
    there is an atom of mass ``1 - ratio`` at 0.
    """

    ratio: float = 1.0
    scale: float = 1.0
    kind = "marchenko_pastur"

    def __post_init__(self):
        if self.ratio <= 0 or self.scale <= 0:
            raise ValueError("Marchenko-Pastur ratio and scale must be positive")

    @property
    def edges(self) -> tuple:
        s, r = self.scale, np.sqrt(self.ratio)
        return (s * (1 - r) ** 2, s * (1 + r) ** 2)

    @property
    def atom(self) -> float:
        return max(0.0, 1.0 - self.ratio)

    def support(self):
        a, b = self.edges
        return (0.0 if self.atom > 0 else a, b)

    def moment(self, k: int) -> float:
        if k == 0:
            return 1.0
        kappa = [self.ratio * self.scale ** j for j in range(1, k + 1)]
        return float(free_cumulants_to_moments(kappa)[k - 1])

    def cauchy_any(self, z):
        # 1/G + ratio*scale/(1 - scale*G) = z, i.e.
        # s z G^2 - (z + s - s*ratio) G + 1 = 0
        z = np.asarray(z, dtype=complex)
        s, lam = self.scale, self.ratio
        a, b = self.edges
        return (z + s * (1 - lam) - sqrt_branch(z, a, b)) / (2 * s * z)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.edges
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.sqrt(np.clip((b - t) * (t - a), 0.0, None)) / (2 * np.pi * self.scale * t)
        return np.where((t > a) & (t < b), rho, 0.0)

    def quadrature_parts(self):
        a, b = self.edges
        c, h, s = (a + b) / 2, (b - a) / 2, self.scale
        at = np.array([0.0]) if self.atom > 0 else np.empty(0)
        aw = np.array([self.atom]) if self.atom > 0 else np.empty(0)

        def wmap(th):
            # h^2 sin^2 / (2 pi s t); for ratio = 1, t = h (1 + cos) and the
            # ratio sin^2/(1 + cos) = 1 - cos stays smooth
            t = c + h * np.cos(th)
            if a == 0.0:
                return h * (1 - np.cos(th)) / (2 * np.pi * s)
            return h * h * np.sin(th) ** 2 / (2 * np.pi * s * t)

        return at, aw, (lambda th: c + h * np.cos(th), wmap)

    def to_json(self):
        out = {"type": "marchenko_pastur", "ratio": self.ratio}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class Atomic(SpectralMeasure):
    """Finite sum of point masses ``[(location, weight), ...]``."""

    atoms: tuple
    kind = "atomic"

    def __post_init__(self):
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        if not atoms:
            raise ValueError("atomic measure needs at least one atom")
        if any(w < 0 for _, w in atoms):
            raise ValueError("atom weights must be nonnegative")
        total = sum(w for _, w in atoms)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"atom weights sum to {total}, expected 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def locations(self):
        return np.array([t for t, _ in self.atoms])

    @property
    def weights(self):
        return np.array([w for _, w in self.atoms])

    def support(self):
        loc = self.locations
        return (float(loc.min()), float(loc.max()))

    def moment(self, k: int) -> float:
        return float(sum(w * t ** k for t, w in self.atoms))

    def cauchy_any(self, z):
        z = np.asarray(z, dtype=complex)
        return np.sum(self.weights / (z[..., None] - self.locations), axis=-1)

    def quadrature_parts(self):
        return self.locations, self.weights, None

    def to_json(self):
        return {"type": "atomic", "atoms": [[t, w] for t, w in self.atoms]}


@dataclass(frozen=True, eq=False)
class SampledDensity(SpectralMeasure):
    """Density tabulated on an ascending grid, integrated by trapezoids.

    Values are rescaled to unit trapezoid mass at construction.
    """

    grid: np.ndarray
    values: np.ndarray
    kind = "sampled"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be equal-length 1-d arrays (>= 2 points)")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly ascending")
        if np.any(values < 0):
            raise ValueError("sampled density must be nonnegative")
        mass = np.trapezoid(values, grid)
        if mass <= 0:
            raise ValueError("sampled density has zero mass")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values / mass)

    @property
    def trapezoid_weights(self) -> np.ndarray:
        dx = np.diff(self.grid)
        w = np.zeros_like(self.grid)
        w[:-1] += dx / 2
        w[1:] += dx / 2
        return w * self.values

    def support(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.grid ** k * self.values, self.grid))

    def cauchy_any(self, z):
        z = np.asarray(z, dtype=complex)
        return np.sum(self.trapezoid_weights / (z[..., None] - self.grid), axis=-1)

    def density(self, t):
        return np.interp(t, self.grid, self.values, left=0.0, right=0.0)

    def quadrature_parts(self):
        w = self.trapezoid_weights
        keep = w > 0
        return self.grid[keep], w[keep], None

    def to_json(self):
        return {"type": "sampled", "grid": self.grid.tolist(), "values": self.values.tolist()}


def measure_from_json(data) -> SpectralMeasure:
    if isinstance(data, str):
        data = json.loads(data)
    kind = data.get("type")
    if kind == "semicircle":
        return Semicircle(float(data.get("mean", 0.0)), float(data.get("variance", 1.0)))
    if kind == "marchenko_pastur":
        return MarchenkoPastur(float(data["ratio"]), float(data.get("scale", 1.0)))
    if kind == "atomic":
        return Atomic(tuple(tuple(a) for a in data["atoms"]))
    if kind == "sampled":
        return SampledDensity(np.asarray(data["grid"]), np.asarray(data["values"]))
    raise ValueError(f"unknown measure type {kind!r}")


def load_measure(path) -> SpectralMeasure:
    return measure_from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# densities


@dataclass(eq=False)
class DensityEstimate:
    """A density tabulated on a grid, with the regularisation height used."""

    grid: np.ndarray
    density: np.ndarray
    epsilon: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.grid.shape != self.density.shape:
            raise ValueError("grid and density must have the same shape")

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.grid ** k * self.density, self.grid))

    def cdf_values(self) -> np.ndarray:
        """Trapezoid CDF on the grid, renormalised to end at 1."""
        steps = np.diff(self.grid) * (self.density[1:] + self.density[:-1]) / 2
        cdf = np.concatenate([[0.0], np.cumsum(steps)])
        return cdf / cdf[-1]

    def cdf(self, t) -> np.ndarray:
        return np.interp(t, self.grid, self.cdf_values(), left=0.0, right=1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-transform samples from the piecewise-linear CDF."""
        cdf = self.cdf_values()
        u = rng.random(size)
        # drop flat stretches so the inverse interpolation is well defined
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        return np.interp(u, cdf[keep], self.grid[keep])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "density"])
        for t, d in zip(self.grid, self.density):
            writer.writerow([repr(float(t)), repr(float(d))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "DensityEstimate":
        text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
        rows = list(csv.reader(io.StringIO(text)))
        header, rows = rows[0], rows[1:]
        if [h.strip() for h in header[:2]] != ["t", "density"]:
            raise ValueError("density CSV must have columns t,density")
        data = np.array([[float(r[0]), float(r[1])] for r in rows if r])
        return cls(data[:, 0], data[:, 1])


class StieltjesInversionError(RuntimeError):
    def __init__(self, t, cause):
        self.t = t
        super().__init__(f"Cauchy transform evaluation failed at t={t}: {cause}")


def _neg_imag_over_pi(G: Callable, grid: np.ndarray, eps: float) -> np.ndarray:
    z = grid + 1j * eps
    try:
        values = np.asarray(G(z), dtype=complex)
        if values.shape != grid.shape:
            raise ValueError("G returned the wrong shape")
    except Exception:
        # locate the offending point
        values = np.empty(grid.shape, dtype=complex)
        for i, zi in enumerate(z):
            try:
                values[i] = complex(G(zi))
            except Exception as err:
                raise StieltjesInversionError(float(grid[i]), err) from err
    return -values.imag / np.pi


def stieltjes_invert(G: Callable, grid, eps: float, richardson: bool = False) -> DensityEstimate:
    """Density ``max(0, -Im G(t + i eps) / pi)`` on ``grid``.

    ``G`` is called with an array of points and should return an array of
    the same shape.  With ``richardson`` the values at ``eps`` and
    ``eps/2`` are extrapolated linearly to ``eps = 0`` before clamping.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = np.asarray(grid, dtype=float)
    rho = _neg_imag_over_pi(G, grid, eps)
    if richardson:
        rho = 2 * _neg_imag_over_pi(G, grid, eps / 2) - rho
    return DensityEstimate(grid, np.maximum(rho, 0.0), eps, {"richardson": richardson})


def parse_grid(spec: str) -> np.ndarray:
    """``"a:b:step"`` to an inclusive grid."""
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like a:b:step, got {spec!r}") from None
    if step <= 0 or b <= a:
        raise ValueError(f"grid needs b > a and step > 0, got {spec!r}")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return a + step * np.arange(n)


def grid_from(values: Sequence[float] | str) -> np.ndarray:
    if isinstance(values, str):
        return parse_grid(values)
    return np.asarray(values, dtype=float)
