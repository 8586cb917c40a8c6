"""Monte Carlo random matrices: GUE and Wishart sampling, spectra of
polynomials, mixed moments and asymptotic-freeness statistics.

Normalisations: GUE ``X = (x_ij)/sqrt(N)`` with ``E|x_ij|^2 = 1``;
Wishart ``X = A A*`` with ``A`` an ``N x M`` matrix of complex Gaussians of
variance ``1/N``, so ``tr X -> M/N``.

Every matrix is drawn from its own Philox stream keyed by
``(seed, variable index, trial)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

from .measures import DensityEstimate, MarchenkoPastur, Semicircle, SpectralMeasure
from .ncpoly import NCPolynomial, evaluate, is_selfadjoint

__all__ = [
    "EnsembleSpec",
    "EmpiricalSpectrum",
    "sample",
    "stream",
    "spectrum_of_polynomial",
    "mixed_moment_estimate",
    "freeness_samples",
    "freeness_statistic",
    "kolmogorov_distance",
    "load_ensembles",
]


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    n: int
    m: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gue", "wishart"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "wishart" and (self.m is None or self.m < 1):
            raise ValueError("Wishart ensemble needs m >= 1")

    @classmethod
    def gue(cls, n: int, seed: int = 0) -> "EnsembleSpec":
        return cls("gue", n, None, seed)

    @classmethod
    def wishart(cls, n: int, m: int, seed: int = 0) -> "EnsembleSpec":
        return cls("wishart", n, m, seed)

    @property
    def ratio(self) -> float | None:
        return None if self.m is None else self.m / self.n

    def resized(self, n: int) -> "EnsembleSpec":
        """Same ensemble at size ``n``; Wishart keeps ``m/n``."""
        m = None if self.m is None else max(1, int(round(self.ratio * n)))
        return replace(self, n=n, m=m)

    def limit_law(self) -> SpectralMeasure:
        if self.kind == "gue":
            return Semicircle(0.0, 1.0)
        return MarchenkoPastur(self.ratio)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "seed": self.seed}
        if self.m is not None:
            out["m"] = self.m
        return out

    @classmethod
    def from_json(cls, data: Mapping, n: int | None = None) -> "EnsembleSpec":
        kind = data["kind"]
        size = int(n if n is not None else data["n"])
        seed = int(data.get("seed", 0))
        if kind == "wishart":
            if "m" in data and n is None:
                m = int(data["m"])
            elif "ratio" in data:
                m = int(round(float(data["ratio"]) * size))
            else:
                m = int(round(int(data["m"]) / int(data["n"]) * size))
            return cls("wishart", size, m, seed)
        return cls(kind, size, None, seed)


def load_ensembles(data, n: int | None = None) -> dict:
    if isinstance(data, str):
        data = json.loads(data)
    return {name: EnsembleSpec.from_json(spec, n) for name, spec in data.items()}


def stream(seed: int, variable: int = 0, trial: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(variable, trial))
    return np.random.Generator(np.random.Philox(ss))


def _complex_gaussian(rng, shape, variance):
    s = np.sqrt(variance / 2)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def sample(spec: EnsembleSpec, variable: int = 0, trial: int = 0) -> np.ndarray:
    """One exactly selfadjoint matrix from ``spec``."""
    rng = stream(spec.seed, variable, trial)
    n = spec.n
    if spec.kind == "gue":
        a = _complex_gaussian(rng, (n, n), 1.0)
        x = (a + a.conj().T) / np.sqrt(2 * n)
    else:
        a = _complex_gaussian(rng, (n, spec.m), 1.0 / n)
        x = a @ a.conj().T
    # remove rounding asymmetry
    return (x + x.conj().T) / 2


@dataclass(frozen=True, eq=False)
class EmpiricalSpectrum:
    eigenvalues: np.ndarray
    n: int
    trials: int

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        if ev.size != self.n * self.trials:
            raise ValueError("eigenvalue count must equal n * trials")
        object.__setattr__(self, "eigenvalues", ev)

    def moment(self, k: int) -> float:
        return float(np.mean(self.eigenvalues ** k))

    def cdf(self, t) -> np.ndarray:
        return np.searchsorted(self.eigenvalues, t, side="right") / self.eigenvalues.size

    def histogram(self, bins: int = 100, range=None):
        density, edges = np.histogram(self.eigenvalues, bins=bins, range=range, density=True)
        return edges, density


def _check_sizes(specs: Mapping[Hashable, EnsembleSpec]) -> int:
    sizes = {s.n for s in specs.values()}
    if len(sizes) != 1:
        raise ValueError(f"all ensembles must share one size, got {sorted(sizes)}")
    return sizes.pop()


def _draw(specs: Mapping[Hashable, EnsembleSpec], trial: int) -> dict:
    return {name: sample(spec, i, trial) for i, (name, spec) in enumerate(specs.items())}


def spectrum_of_polynomial(p: NCPolynomial, specs: Mapping[str, EnsembleSpec],
                           trials: int = 1) -> EmpiricalSpectrum:
    """Pooled eigenvalues of ``p`` evaluated on independent samples."""
    if not is_selfadjoint(p, atol=1e-12):
        raise ValueError(f"polynomial {p} is not selfadjoint")
    n = _check_sizes(specs)
    pooled = []
    for trial in range(trials):
        m = evaluate(p, _draw(specs, trial), n)
        pooled.append(np.linalg.eigvalsh((m + m.conj().T) / 2))
    return EmpiricalSpectrum(np.concatenate(pooled), n, trials)


def _word_trace(word: Sequence[Hashable], mats: Mapping) -> complex:
    out = mats[word[0]]
    for letter in word[1:-1]:
        out = out @ mats[letter]
    if len(word) == 1:
        return np.trace(out) / out.shape[0]
    # tr(A B) without forming the last product
    last = mats[word[-1]]
    return np.sum(out * last.T) / out.shape[0]


def mixed_moment_estimate(word: Sequence[Hashable], specs: Mapping[Hashable, EnsembleSpec],
                          trials: int = 1) -> float:
    """Mean over trials of the normalised trace of ``word`` (real part)."""
    word = tuple(word)
    if not word:
        return 1.0
    _check_sizes(specs)
    values = [_word_trace(word, _draw(specs, t)).real for t in range(trials)]
    return float(np.mean(values))


def _parse_groups(groups):
    out = []
    for g in groups:
        if isinstance(g, str):
            name, _, power = g.partition("^")
            g = (name.strip(), int(power) if power else 1)
        out.append((g[0], int(g[1])))
    return out


def freeness_samples(groups, specs: Mapping[Hashable, EnsembleSpec], trials: int = 20,
                     n: int | None = None) -> np.ndarray:
    """Per-trial values of ``tr prod_i (X_i^{k_i} - c_i)``.

    ``c_i`` is this run's trial-averaged estimate of ``tr X_i^{k_i}``.
    """
    groups = _parse_groups(groups)
    for (a, _), (b, _) in zip(groups, groups[1:]):
        if a == b:
            raise ValueError("consecutive groups must use different variables")
    if n is not None:
        specs = {k: s.resized(n) for k, s in specs.items()}
    size = _check_sizes(specs)
    occurring = sorted({g for g in groups}, key=str)
    powers = []
    for t in range(trials):
        mats = _draw(specs, t)
        cache = {}
        for name, k in occurring:
            cache[(name, k)] = np.linalg.matrix_power(mats[name], k)
        powers.append(cache)
    centers = {g: float(np.mean([np.trace(c[g]).real / size for c in powers])) for g in occurring}
    eye = np.eye(size)
    values = []
    for cache in powers:
        prod = None
        for g in groups:
            centred = cache[g] - centers[g] * eye
            prod = centred if prod is None else prod @ centred
        values.append(np.trace(prod).real / size)
    return np.asarray(values)


def freeness_statistic(groups, specs: Mapping[Hashable, EnsembleSpec], trials: int = 20,
                       n: int | None = None) -> float:
    """Monte Carlo estimate of the centred alternating trace.

    Vanishes asymptotically for asymptotically free ensembles.  A single
    group is zero by construction.
    """
    return float(np.mean(freeness_samples(groups, specs, trials, n)))


def kolmogorov_distance(emp: EmpiricalSpectrum, rho: DensityEstimate) -> float:
    """Sup distance between the empirical CDF and the trapezoid CDF of ``rho``."""
    ev = emp.eigenvalues
    if ev.size == 0:
        raise ValueError("empty spectrum")
    mass = rho.mass()
    if abs(mass - 1.0) > 0.02:
        raise ValueError(f"density mass {mass:.4f} is not within 2% of 1")
    F = rho.cdf(ev)
    k = np.arange(1, ev.size + 1) / ev.size
    return float(max(np.max(np.abs(k - F)), np.max(np.abs(k - 1.0 / ev.size - F))))
