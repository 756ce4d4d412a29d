#!/usr/bin/env python3
"""
Training-size sensitivity sweep.

Cross-validates Real AdaBoost on a labelled feature matrix at several
training fractions, for one or more seeds, and writes every report plus
the seed-averaged F-measure per fraction.

Usage:
    sensitivity_sweep.py --features X.fmx --out sweep.json
        [--fractions 0.02,0.04,...,0.8] [--seeds 7,8,9] [--folds 5] [--rounds 500]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from eval_module import SENSITIVITY_FRACTIONS, sensitivity_sweep  # noqa: E402
from feature_module import load_feature_matrix  # noqa: E402
from muchlac import load_environment_config, parse_float_list, parse_int_list, write_json_file  # noqa: E402


def main():
    """Run the sweep and write its JSON report."""
    parser = argparse.ArgumentParser(description="Training-size sensitivity sweep")
    parser.add_argument("--features", required=True, help="Labelled FMX1 matrix")
    parser.add_argument("--fractions", default=",".join(str(f) for f in SENSITIVITY_FRACTIONS))
    parser.add_argument("--seeds", help="Comma-separated seeds (default: MUCHLAC_SEED)")
    parser.add_argument("--folds", type=int, help="Number of folds (default: MUCHLAC_FOLDS)")
    parser.add_argument("--rounds", type=int, help="Boosting rounds (default: MUCHLAC_ROUNDS)")
    parser.add_argument("--bins", type=int, help="Bins per stump (default: MUCHLAC_BINS)")
    parser.add_argument("--threads", type=int, help="Worker threads (default: MUCHLAC_THREADS)")
    parser.add_argument("--out", required=True, help="Sweep JSON to write")
    args = parser.parse_args()

    try:
        env = load_environment_config()
        fractions = parse_float_list(args.fractions, "--fractions")
        seeds = parse_int_list(args.seeds or env["MUCHLAC_SEED"], "--seeds")
        folds = args.folds or int(env["MUCHLAC_FOLDS"])
        rounds = args.rounds or int(env["MUCHLAC_ROUNDS"])
        bins = args.bins or int(env["MUCHLAC_BINS"])
        threads = args.threads or int(env["MUCHLAC_THREADS"])

        matrix = load_feature_matrix(args.features)
        if matrix.labels is None:
            raise ValueError(f"feature matrix {args.features} carries no labels")

        print(f"Sweeping {len(fractions)} fractions x {len(seeds)} seeds")
        print("=" * 70)
        sweep = sensitivity_sweep(matrix.values, matrix.labels, fractions, seeds, folds, rounds, bins, threads)
        for entry in sweep["mean_f"]:
            print(f"  fraction {entry['fraction']:>5}: F = {entry['f_measure']:.3f}")

        sweep["config"] = {
            "features": args.features,
            "fractions": fractions,
            "seeds": seeds,
            "folds": folds,
            "rounds": rounds,
            "bins": bins,
        }
        print(f"\nOutput written to: {write_json_file(args.out, sweep)}")

    except FileNotFoundError as error:
        print(f"ERROR: {error}")
        sys.exit(2)
    except ValueError as error:
        print(f"ERROR: {error}")
        sys.exit(2)


if __name__ == "__main__":
    main()
