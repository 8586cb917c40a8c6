"""Command-line interface.

Subcommands::

    density     POLY LAWS --grid a:b:step [--eps E ...]   CSV  t,density
    convolve    LAWS --grid a:b:step [--eps E]           CSV  t,density
    cumulants   --moments JSON [--classical] [--inverse]   JSON list
    linearize   POLY [--format text|json] [--verify]
    mc-compare  POLY ENSEMBLES --n N --trials T --bins B  CSV  left,right,density
    freeness    ENSEMBLES --word x,y,x,y --n N [N ...]     CSV  n,mean,stderr

LAWS maps variable names to measures, e.g.
``{"x": {"type": "semicircle"}, "y": {"type": "marchenko_pastur", "ratio": 4}}``.
ENSEMBLES maps variable names to ensembles, e.g.
``{"x": {"kind": "gue", "n": 1000, "seed": 1}, "y": {"kind": "wishart", "n": 1000, "m": 4000}}``.
Both may be given as a file path or as inline JSON text.

Exit status: 0 on success, 2 for invalid input, 3 for file errors,
4 when a computation fails to converge.  ``FREECONV_THREADS`` caps the
number of worker threads used for grid points.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nccomb
from .linearize import linearize, verify_linearization
from .measures import DensityEstimate, StieltjesInversionError, measure_from_json, parse_grid
from .ncpoly import PolynomialSyntaxError, parse_polynomial
from .ovconv import HalfPlaneError, epsilon_extrapolate, polynomial_density
from .rmt import freeness_samples, kolmogorov_distance, load_ensembles, spectrum_of_polynomial
from .scalarconv import ConvergenceError, free_add_convolve

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FILE = 3
EXIT_CONVERGENCE = 4


class InputError(ValueError):
    """Invalid user input; reported with exit status 2."""


@dataclass
class RunConfig:
    command: str
    polynomial: str | None = None
    laws: str | None = None
    ensembles: str | None = None
    grid: str | None = None
    eps: tuple = (1e-3,)
    tol: float = 1e-10
    z_eps: float | None = None
    method: str = "auto"
    skip_bad: bool = False
    richardson: bool = False
    moments: str | None = None
    classical: bool = False
    inverse: bool = False
    format: str = "text"
    verify: bool = False
    n: tuple = ()
    trials: int = 5
    bins: int = 100
    density: str | None = None
    word: str | None = None
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if any(e <= 0 for e in self.eps):
            raise InputError("--eps values must be > 0")
        if len(self.eps) > 1 and any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise InputError("several --eps values must be strictly decreasing")
        if self.tol <= 0:
            raise InputError("--tol must be > 0")
        if self.z_eps is not None and self.z_eps <= 0:
            raise InputError("--z-eps must be > 0")
        if self.grid is not None:
            try:
                parse_grid(self.grid)
            except ValueError as err:
                raise InputError(str(err)) from None
        if self.trials < 1:
            raise InputError("--trials must be >= 1")
        if self.bins < 1:
            raise InputError("--bins must be >= 1")
        if any(n < 1 for n in self.n):
            raise InputError("--n values must be >= 1")


# ---------------------------------------------------------------------------
# helpers


def _json_source(text: str):
    """Inline JSON or a path to a JSON file."""
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        raw = text
    else:
        raw = Path(text).read_text()
    try:
        return json.loads(raw)
    except json.JSONDecodeError as err:
        raise InputError(f"invalid JSON in {text!r}: {err}") from None


def _laws(text: str) -> dict:
    data = _json_source(text)
    if not isinstance(data, dict) or not data:
        raise InputError("laws must be a JSON object mapping variable names to measures")
    try:
        return {name: measure_from_json(spec) for name, spec in data.items()}
    except (KeyError, TypeError, ValueError) as err:
        raise InputError(f"invalid measure in laws: {err}") from None


def _ensembles(text: str, n: int | None = None) -> dict:
    data = _json_source(text)
    if not isinstance(data, dict) or not data:
        raise InputError("ensembles must be a JSON object mapping variable names to ensembles")
    try:
        return load_ensembles(data, n)
    except (KeyError, TypeError, ValueError) as err:
        raise InputError(f"invalid ensemble: {err}") from None


def _polynomial(text: str):
    try:
        return parse_polynomial(text)
    except PolynomialSyntaxError as err:
        raise InputError(f"cannot parse polynomial: {err}") from None


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and rename; stdout if no path."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _compact_number(x) -> object:
    x = complex(x)
    if abs(x.imag) > 1e-12 * max(1.0, abs(x.real)):
        return [_compact_number(x.real), _compact_number(x.imag)]
    r = x.real
    if abs(r - round(r)) <= 1e-12 * max(1.0, abs(r)):
        return int(round(r))
    return r


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in row)
              for row in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_density(cfg: RunConfig) -> None:
    p = _polynomial(cfg.polynomial)
    laws = _laws(cfg.laws)
    grid = parse_grid(cfg.grid)
    kw = dict(z_eps=cfg.z_eps, method=cfg.method, skip_bad=cfg.skip_bad)
    try:
        if len(cfg.eps) > 1:
            rho = epsilon_extrapolate(p, laws, grid, cfg.eps, cfg.tol, **kw)
        else:
            rho = polynomial_density(p, laws, grid, cfg.eps[0], cfg.tol, **kw)
    except (KeyError, ValueError) as err:
        raise InputError(str(err)) from None
    write_atomic(cfg.out, rho.to_csv())


def _cmd_convolve(cfg: RunConfig) -> None:
    laws = _laws(cfg.laws)
    if len(laws) != 2:
        raise InputError("convolve needs a laws object with exactly two measures")
    mu_x, mu_y = laws.values()
    grid = parse_grid(cfg.grid)
    tol = None if cfg.extra.get("tol_default") else cfg.tol
    if len(cfg.eps) > 1:
        raise InputError("convolve takes a single --eps (use --richardson to extrapolate)")
    rho = free_add_convolve(mu_x, mu_y, grid, cfg.eps[0], tol, cfg.richardson)
    write_atomic(cfg.out, rho.to_csv())


def _cmd_cumulants(cfg: RunConfig) -> None:
    data = _json_source(cfg.moments)
    if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
        raise InputError("--moments must be a JSON list of numbers")
    if cfg.classical:
        f = nccomb.classical_cumulants_to_moments if cfg.inverse else nccomb.moments_to_classical_cumulants
    else:
        f = nccomb.free_cumulants_to_moments if cfg.inverse else nccomb.moments_to_free_cumulants
    try:
        values = f(data)
    except ValueError as err:
        raise InputError(str(err)) from None
    out = json.dumps([_compact_number(v) for v in values], separators=(",", ":"))
    write_atomic(cfg.out, out + "\n")


def _cmd_linearize(cfg: RunConfig) -> None:
    p = _polynomial(cfg.polynomial)
    try:
        L = linearize(p)
    except ValueError as err:
        raise InputError(str(err)) from None
    if cfg.format == "json":
        data = L.to_json()
        if cfg.verify:
            data["residual"] = verify_linearization(p, L)
        text = json.dumps(data) + "\n"
    else:
        text = L.to_text() + "\n"
        if cfg.verify:
            text += f"residual = {verify_linearization(p, L):.3e}\n"
    write_atomic(cfg.out, text)


def _cmd_mc_compare(cfg: RunConfig) -> None:
    p = _polynomial(cfg.polynomial)
    n = cfg.n[0] if cfg.n else None
    specs = _ensembles(cfg.ensembles, n)
    missing = [v for v in p.names if v not in specs]
    if missing:
        raise InputError(f"no ensemble given for variable(s) {missing}")
    try:
        emp = spectrum_of_polynomial(p, {v: specs[v] for v in p.names}, cfg.trials)
    except ValueError as err:
        raise InputError(str(err)) from None
    edges, dens = emp.histogram(cfg.bins)
    write_atomic(cfg.out, _csv(["left", "right", "density"], zip(edges[:-1], edges[1:], dens)))
    if cfg.density is not None:
        try:
            rho = DensityEstimate.from_csv(cfg.density)
        except (ValueError, IndexError) as err:
            raise InputError(f"bad density CSV: {err}") from None
        try:
            ks = kolmogorov_distance(emp, rho)
        except ValueError as err:
            raise InputError(str(err)) from None
        msg = json.dumps({"kolmogorov_distance": ks, "n": emp.n, "trials": emp.trials})
        # keep stdout clean for the histogram when it goes there
        stream = sys.stderr if cfg.out is None else sys.stdout
        stream.write(msg + "\n")


def _cmd_freeness(cfg: RunConfig) -> None:
    if not cfg.word:
        raise InputError("--word is required, e.g. x,y,x,y or x^2,y,x^2,y")
    groups = [g.strip() for g in cfg.word.split(",") if g.strip()]
    specs = _ensembles(cfg.ensembles)
    sizes = cfg.n or (next(iter(specs.values())).n,)
    rows = []
    for n in sizes:
        try:
            values = freeness_samples(groups, specs, cfg.trials, n)
        except (KeyError, ValueError) as err:
            raise InputError(f"freeness: {err}") from None
        se = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        rows.append((int(n), float(np.mean(values)), se))
    write_atomic(cfg.out, _csv(["n", "mean", "stderr"], rows))


COMMANDS = {
    "density": _cmd_density,
    "convolve": _cmd_convolve,
    "cumulants": _cmd_cumulants,
    "linearize": _cmd_linearize,
    "mc-compare": _cmd_mc_compare,
    "freeness": _cmd_freeness,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status."""
    try:
        cfg.validate()
        COMMANDS[cfg.command](cfg)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, HalfPlaneError, StieltjesInversionError) as err:
        print(f"error: computation failed: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FILE
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freeconv", description="Eigenvalue distributions of polynomials in free variables.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Outputs: density and convolve write CSV t,density; mc-compare writes CSV\n"
               "left,right,density; freeness writes CSV n,mean,stderr; cumulants writes a\n"
               "JSON list; linearize writes text or JSON.\n"
               "Exit status: 2 invalid input, 3 file error, 4 non-convergence.\n"
               "FREECONV_THREADS caps the worker threads used for grid points.")
    sub = parser.add_subparsers(dest="command", required=True)

    def out(p):
        p.add_argument("-o", "--out", help="output file (written atomically); default stdout")

    def solver(p, multi_eps=True):
        p.add_argument("--grid", required=True, help="evaluation grid a:b:step (inclusive)")
        p.add_argument("--eps", type=float, nargs="+" if multi_eps else None,
                       default=[1e-3] if multi_eps else 1e-3,
                       help="regularisation height(s); several decreasing values are "
                            "extrapolated linearly to 0" if multi_eps else "regularisation height")
        p.add_argument("--tol", type=float, default=None, help="fixed-point tolerance")

    p = sub.add_parser("density", help="density of a selfadjoint polynomial in free variables",
                       description="Writes CSV with columns t,density.")
    p.add_argument("polynomial")
    p.add_argument("laws", help="laws JSON file or inline JSON")
    solver(p)
    p.add_argument("--z-eps", type=float, default=None,
                   help="imaginary part in the (1,1) slot (default: same as --eps)")
    p.add_argument("--method", choices=["auto", "spectral", "quadrature"], default="auto")
    p.add_argument("--skip-bad", action="store_true",
                   help="write NaN at non-converged grid points instead of failing")
    out(p)

    p = sub.add_parser("convolve", help="scalar free additive convolution of two laws",
                       description="Writes CSV with columns t,density.")
    p.add_argument("laws", help="JSON object with exactly two measures")
    solver(p, multi_eps=False)
    p.add_argument("--richardson", action="store_true", help="extrapolate eps and eps/2 to 0")
    out(p)

    p = sub.add_parser("cumulants", help="moment/cumulant conversion",
                       description="Prints a compact JSON list of the first n values.")
    p.add_argument("--moments", required=True,
                   help="JSON list m_1..m_n (cumulants k_1..k_n with --inverse)")
    p.add_argument("--classical", action="store_true", help="use classical instead of free cumulants")
    p.add_argument("--inverse", action="store_true", help="convert cumulants to moments")
    out(p)

    p = sub.add_parser("linearize", help="selfadjoint linearization of a polynomial")
    p.add_argument("polynomial")
    p.add_argument("--format", choices=["text", "json"], default="text",
                   help="json gives {size, b0, a: {variable: matrix}}")
    p.add_argument("--verify", action="store_true", help="append the numerical certificate residual")
    out(p)

    p = sub.add_parser("mc-compare", help="Monte Carlo spectrum histogram and Kolmogorov distance",
                       description="Writes CSV with columns left,right,density (histogram bins). "
                                   "With --density, reports the Kolmogorov distance as JSON "
                                   "(stdout when --out is given, stderr otherwise).")
    p.add_argument("polynomial")
    p.add_argument("ensembles", help="ensembles JSON file or inline JSON")
    p.add_argument("--n", type=int, default=None, help="override the matrix size")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--density", help="density CSV (t,density) to compare against")
    out(p)

    p = sub.add_parser("freeness", help="alternating centred trace statistic over matrix sizes",
                       description="Writes CSV with columns n,mean,stderr.")
    p.add_argument("ensembles", help="ensembles JSON file or inline JSON")
    p.add_argument("--word", required=True, help="groups such as x,y,x,y or x^2,y,x^2,y")
    p.add_argument("--n", type=int, nargs="+", default=None, help="matrix sizes")
    p.add_argument("--trials", type=int, default=20)
    out(p)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    eps = getattr(ns, "eps", 1e-3)
    eps = tuple(eps) if isinstance(eps, (list, tuple)) else (eps,)
    tol = getattr(ns, "tol", None)
    n = getattr(ns, "n", None)
    n = tuple(n) if isinstance(n, (list, tuple)) else (() if n is None else (n,))
    return RunConfig(
        command=ns.command,
        polynomial=getattr(ns, "polynomial", None),
        laws=getattr(ns, "laws", None),
        ensembles=getattr(ns, "ensembles", None),
        grid=getattr(ns, "grid", None),
        eps=eps,
        tol=1e-10 if tol is None else tol,
        z_eps=getattr(ns, "z_eps", None),
        method=getattr(ns, "method", "auto"),
        skip_bad=getattr(ns, "skip_bad", False),
        richardson=getattr(ns, "richardson", False),
        moments=getattr(ns, "moments", None),
        classical=getattr(ns, "classical", False),
        inverse=getattr(ns, "inverse", False),
        format=getattr(ns, "format", "text"),
        verify=getattr(ns, "verify", False),
        n=n,
        trials=getattr(ns, "trials", 5),
        bins=getattr(ns, "bins", 100),
        density=getattr(ns, "density", None),
        word=getattr(ns, "word", None),
        out=getattr(ns, "out", None),
        extra={"tol_default": tol is None},
    )


def _attach_values(argv):
    """Glue ``--grid -4:12:0.01`` into ``--grid=-4:12:0.01``.

    argparse would otherwise read a leading minus as an option.
    """
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--grid", "--z-eps"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ns = build_parser().parse_args(_attach_values(argv))
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
