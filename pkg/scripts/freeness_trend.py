"""Centred alternating traces of GUE and Wishart matrices over growing N.

For each size prints the trial mean of tr(X Y X Y) after centring (the
asymptotic-freeness statistic), its standard error and the root mean
square of the per-trial values, which decays like 1/N.

    python scripts/freeness_trend.py --n 250 500 1000 --trials 20
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from freeconv.rmt import EnsembleSpec, freeness_samples


@dataclass
class TrendConfig:
    word: tuple = ("x", "y", "x", "y")
    sizes: tuple = (250, 500, 1000)
    trials: int = 20
    ratio: float = 4.0
    seeds: tuple = (1, 2)
    out: Path | None = None


def run(cfg: TrendConfig) -> list:
    base = 100
    specs = {"x": EnsembleSpec.gue(base, cfg.seeds[0]),
             "y": EnsembleSpec.wishart(base, int(round(cfg.ratio * base)), cfg.seeds[1])}
    rows = []
    for n in cfg.sizes:
        v = freeness_samples(list(cfg.word), specs, cfg.trials, n)
        se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        rows.append((n, float(np.mean(v)), se, float(np.sqrt(np.mean(v ** 2)))))
    if cfg.out is not None:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(cfg.out, np.array(rows), delimiter=",", header="n,mean,stderr,rms",
                   comments="", fmt="%.10g")
    return rows


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--word", default="x,y,x,y", help="groups such as x,y,x,y or x^2,y,x^2,y")
    parser.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000])
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--out", type=Path, default=None, help="optional CSV path")
    args = parser.parse_args(argv)
    cfg = TrendConfig(word=tuple(args.word.split(",")), sizes=tuple(args.n), trials=args.trials, out=args.out)
    print(f"{'n':>6} {'mean':>12} {'stderr':>10} {'rms':>10}")
    for n, mean, se, rms in run(cfg):
        print(f"{n:>6} {mean:>12.3e} {se:>10.2e} {rms:>10.2e}")


if __name__ == "__main__":
    main()
