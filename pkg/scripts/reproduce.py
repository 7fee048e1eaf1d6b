"""Run the shipped experiment configs and print the headline numbers.

Usage: python3 scripts/reproduce.py [fig1 fig2 ...] [--out results]

Each config writes its tables to ``<out>/<config name>/``; that directory is
created here (the CLI itself refuses to create output directories).
"""

import argparse
import json
from pathlib import Path

import numpy as np

from quenchstat.config import load_config
from quenchstat.harness import export_tables, run, run_scaling

HERE = Path(__file__).resolve().parent
RUNS = ("fig1", "fig1_dh002", "fig2", "no_quench")
SCALING = ("scaling_critical", "scaling_regular")


def report_run(name, bundle):
    qs = bundle.spectrum
    top = np.sort(qs.weights)[::-1][:3]
    print(f"{name}: {len(qs)} states, deficit {qs.deficit:.2e}, purity {qs.purity:.6f}, top weights {np.round(top, 4).tolist()}")
    for obs, res in bundle.observables.items():
        emp = res.empirical
        line = f"  {obs}: mean {emp.sample_mean:.6g} (exact {res.mean:.6g}), var {emp.sample_variance:.4g} (exact {res.variance:.4g})"
        for ref, rep in res.comparisons.items():
            line += f", KS[{ref}] {rep.ks_distance:.4f}"
        print(line)


def report_scaling(name, bundle):
    print(f"{name}:")
    for probe, result in bundle.scaling.items():
        print(f"  {probe}: exponent {result.fit.exponent:.3f}, r^2 {result.fit.r_squared:.4f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", default=list(RUNS + SCALING))
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    for name in args.names:
        config = load_config(HERE / f"{name}.cfg")
        out = Path(args.out) / name
        out.mkdir(parents=True, exist_ok=True)
        config = config.replace(output_dir=str(out))
        if name in SCALING:
            bundle = run_scaling(config)
            report_scaling(name, bundle)
        else:
            bundle = run(config)
            report_run(name, bundle)
        export_tables(bundle, out)
        print(f"  -> {out} ({json.loads((out / 'run_info.json').read_text())['wall_time_seconds']:.1f} s)")


if __name__ == "__main__":
    main()
