import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeconv.measures import (Atomic, DensityEstimate, MarchenkoPastur, SampledDensity,
                               Semicircle, StieltjesInversionError, grid_from, load_measure,
                               measure_from_json, parse_grid, stieltjes_invert)
from freeconv.nccomb import gaussian_pairing_count

MEASURES = [
    Semicircle(0, 1),
    Semicircle(0.5, 2.0),
    MarchenkoPastur(4),
    MarchenkoPastur(0.3),
    MarchenkoPastur(1.5, 0.5),
    Atomic(((0.0, 0.5), (2.0, 0.5))),
    SampledDensity(np.linspace(-1, 1, 201), 1 - np.linspace(-1, 1, 201) ** 2),
    # hard edge at 0: fine for transforms, not for grid integration
    MarchenkoPastur(1.0),
]
IDS = ["sc", "sc-shifted", "mp4", "mp-atom", "mp-scaled", "atomic", "sampled", "mp1"]


# ---------------------------------------------------------------- moments


def test_semicircle_moments_are_pairing_counts():
    mu = Semicircle(0, 1)
    for k in range(1, 11):
        assert mu.moment(k) == gaussian_pairing_count("X" * k)


def test_simple_moments():
    assert Atomic(((0, 0.5), (2, 0.5))).moment(1) == 1
    for mu in MEASURES:
        assert mu.moment(0) == pytest.approx(1.0)


def test_marchenko_pastur_first_moments():
    lam = 4.0
    mu = MarchenkoPastur(lam)
    assert mu.moment(1) == lam
    assert mu.moment(2) == lam + lam ** 2
    assert mu.moment(3) == lam + 3 * lam ** 2 + lam ** 3


@pytest.mark.parametrize("mu", MEASURES[:5], ids=IDS[:5])
def test_closed_form_moments_match_density_integral(mu):
    a, b = mu.support()
    t = np.linspace(a, b, 400001)
    rho = mu.density(t)
    mass_ac = 1 - getattr(mu, "atom", 0.0)
    assert np.trapezoid(rho, t) == pytest.approx(mass_ac, abs=2e-4)
    for k in (1, 2, 3):
        assert np.trapezoid(t ** k * rho, t) == pytest.approx(mu.moment(k), rel=1e-3)


# ---------------------------------------------------------------- Cauchy transform


def test_point_mass_cauchy():
    z = 0.3 + 0.7j
    assert Atomic(((1.5, 1.0),)).cauchy(z) == pytest.approx(1 / (z - 1.5))


def test_semicircle_quadratic_at_i():
    G = Semicircle(0, 1).cauchy(1j)
    assert abs(G * G - 1j * G + 1) <= 1e-12
    assert G.imag < 0


def test_semicircle_tail():
    G = Semicircle(0, 1).cauchy(100j)
    assert abs(G - 1 / 100j) <= 1e-3 * abs(1 / 100j)


def test_cauchy_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        Semicircle().cauchy(1.0)
    with pytest.raises(ValueError):
        MarchenkoPastur(2).cauchy(np.array([1 + 1j, 1 - 1j]))


upper = st.tuples(st.floats(-30, 30), st.floats(1e-6, 30)).map(lambda p: complex(*p))


@pytest.mark.parametrize("mu", MEASURES, ids=IDS)
@given(z=upper)
def test_cauchy_maps_upper_to_lower(mu, z):
    assert mu.cauchy(z).imag < 0


@pytest.mark.parametrize("mu", MEASURES, ids=IDS)
def test_cauchy_against_direct_quadrature(mu, rng):
    z = rng.uniform(-3, 6, 20) + 1j * rng.uniform(0.3, 2, 20)
    at, aw, cont = mu.quadrature_parts()
    th = np.linspace(0, np.pi, 40001)
    ref = np.sum(aw / (z[:, None] - at), axis=1)
    if cont is not None:
        tmap, wmap = cont
        ref = ref + np.trapezoid(wmap(th) / (z[:, None] - tmap(th)), th, axis=1)
    assert np.max(np.abs(mu.cauchy(z) - ref)) <= 1e-7


@pytest.mark.parametrize("mu", MEASURES, ids=IDS)
def test_series_coefficients_are_moments(mu):
    # G(1/u) / u = sum m_n u^n; Cauchy integral on a circle in the u plane
    K, r = 64, 0.05
    u = r * np.exp(2j * np.pi * np.arange(K) / K)
    f = mu.cauchy_any(1 / u) / u
    coeff = np.fft.fft(f) / K / r ** np.arange(K)
    for n in range(5):
        assert coeff[n] == pytest.approx(mu.moment(n), rel=1e-8, abs=1e-8)


# ---------------------------------------------------------------- Stieltjes inversion


def test_semicircle_inversion():
    grid = np.arange(-3, 3 + 5e-4, 1e-3)
    rho = stieltjes_invert(Semicircle().cauchy, grid, 1e-6)
    inner = np.abs(grid) <= 1.9
    exact = np.sqrt(np.clip(4 - grid ** 2, 0, None)) / (2 * np.pi)
    assert np.max(np.abs(rho.density - exact)[inner]) <= 1e-3
    assert rho.epsilon == 1e-6
    assert np.all(rho.density >= 0)


def test_point_mass_gives_lorentz_bump():
    eps = 1e-2
    grid = np.array([0.7])
    rho = stieltjes_invert(lambda z: 1 / (z - 0.7), grid, eps)
    assert rho.density[0] == pytest.approx(1 / (np.pi * eps))


def test_variance_two_semicircle_density():
    grid = np.linspace(-2.7, 2.7, 541)
    rho = stieltjes_invert(Semicircle(0, 2).cauchy, grid, 1e-6)
    assert np.max(np.abs(rho.density - np.sqrt(8 - grid ** 2) / (4 * np.pi))) <= 1e-3


# atoms are not resolved by a 1e-3 grid at eps = 1e-6; see the next test
@pytest.mark.parametrize("mu", [MEASURES[i] for i in (0, 1, 2, 4)], ids=["sc", "sc-shifted", "mp4", "mp-scaled"])
def test_inverted_mass_and_moments(mu):
    eps = 1e-6
    a, b = mu.support()
    grid = np.arange(min(a, 0) - 0.5, b + 0.5, 1e-3)
    rho = stieltjes_invert(mu.cauchy, grid, eps)
    assert 1 - 10 * eps - 0.01 <= rho.mass() <= 1.01
    for k in range(1, 7):
        assert rho.moment(k) == pytest.approx(mu.moment(k), abs=0.01 * max(1, abs(mu.moment(k))))


def test_inverted_mass_with_atom():
    mu = MarchenkoPastur(0.5)
    eps = 1e-3
    grid = np.arange(-2, 4, 1e-4)
    rho = stieltjes_invert(mu.cauchy, grid, eps)
    assert 1 - 10 * eps - 0.01 <= rho.mass() <= 1.01


def test_richardson_reduces_bias():
    mu = Semicircle()
    grid = np.linspace(-1.5, 1.5, 31)
    exact = mu.density(grid)
    plain = stieltjes_invert(mu.cauchy, grid, 1e-2)
    rich = stieltjes_invert(mu.cauchy, grid, 1e-2, richardson=True)
    assert np.max(np.abs(rich.density - exact)) < np.max(np.abs(plain.density - exact))


def test_inversion_error_names_the_point():
    def G(z):
        z = np.asarray(z)
        if np.any(np.abs(z.real - 0.5) < 1e-9):
            raise ZeroDivisionError("boom")
        return 1 / (z - 3)

    with pytest.raises(StieltjesInversionError) as info:
        stieltjes_invert(G, np.array([0.0, 0.5, 1.0]), 0.1)
    assert info.value.t == 0.5


# ---------------------------------------------------------------- serialization and grids


@pytest.mark.parametrize("mu", MEASURES, ids=IDS)
def test_json_round_trip(mu, tmp_path):
    text = json.dumps(mu.to_json())
    back = measure_from_json(text)
    assert type(back) is type(mu)
    path = tmp_path / "m.json"
    path.write_text(text)
    z = np.array([0.1 + 0.5j, 3 + 0.01j])
    assert np.allclose(load_measure(path).cauchy(z), mu.cauchy(z))


def test_json_schema_examples():
    assert measure_from_json({"type": "semicircle", "mean": 0, "variance": 1}) == Semicircle()
    assert measure_from_json({"type": "marchenko_pastur", "ratio": 4}) == MarchenkoPastur(4)
    with pytest.raises(ValueError):
        measure_from_json({"type": "cauchy"})


def test_invalid_measures():
    with pytest.raises(ValueError):
        Atomic(((0, 0.5),))
    with pytest.raises(ValueError):
        SampledDensity(np.array([0.0, 0.0, 1.0]), np.ones(3))
    with pytest.raises(ValueError):
        SampledDensity(np.linspace(0, 1, 3), np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        Semicircle(0, -1)


def test_parse_grid():
    g = parse_grid("-4:12:0.01")
    assert g[0] == -4 and g[-1] == pytest.approx(12) and g.size == 1601
    for bad in ("1:0:0.1", "0:1:0", "0:1", "a:b:c"):
        with pytest.raises(ValueError):
            parse_grid(bad)
    assert np.array_equal(grid_from([1, 2]), [1.0, 2.0])


def test_density_csv_round_trip(tmp_path):
    rho = Semicircle().density_estimate(np.linspace(-2, 2, 11))
    path = tmp_path / "d.csv"
    rho.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,density"
    back = DensityEstimate.from_csv(path)
    assert np.array_equal(back.grid, rho.grid) and np.array_equal(back.density, rho.density)
    assert DensityEstimate.from_csv(io.StringIO(rho.to_csv())).grid.size == 11


def test_inverse_transform_sampling_matches_cdf():
    rho = Semicircle().density_estimate(np.linspace(-2, 2, 2001))
    x = np.sort(rho.sample(np.random.default_rng(0), 20000))
    emp = np.arange(1, x.size + 1) / x.size
    assert np.max(np.abs(emp - rho.cdf(x))) <= 0.015
