#!/usr/bin/env python3
"""
Feature-selection sweep.

Cross-validates Real AdaBoost on the top-k components of a labelled
feature matrix, ranked by a forest importance report, for several k and
for the full matrix.

Usage:
    selection_sweep.py --features X.fmx --importance importance.json --out sweep.json
        [--ks 100,200,300,400,500] [--folds 5] [--rounds 500]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from eval_module import SELECTION_KS, selection_sweep  # noqa: E402
from feature_module import load_feature_matrix  # noqa: E402
from forest_module import report_from_json  # noqa: E402
from muchlac import load_environment_config, parse_int_list, read_json_file, write_json_file  # noqa: E402


def main():
    """Run the sweep and write its JSON report."""
    parser = argparse.ArgumentParser(description="Top-k feature-selection sweep")
    parser.add_argument("--features", required=True, help="Labelled FMX1 matrix")
    parser.add_argument("--importance", required=True, help="Importance JSON from 'muchlac importance'")
    parser.add_argument("--ks", default=",".join(str(k) for k in SELECTION_KS))
    parser.add_argument("--seed", type=int, help="Fold seed (default: MUCHLAC_SEED)")
    parser.add_argument("--folds", type=int, help="Number of folds (default: MUCHLAC_FOLDS)")
    parser.add_argument("--rounds", type=int, help="Boosting rounds (default: MUCHLAC_ROUNDS)")
    parser.add_argument("--bins", type=int, help="Bins per stump (default: MUCHLAC_BINS)")
    parser.add_argument("--threads", type=int, help="Worker threads (default: MUCHLAC_THREADS)")
    parser.add_argument("--out", required=True, help="Sweep JSON to write")
    args = parser.parse_args()

    try:
        env = load_environment_config()
        ks = parse_int_list(args.ks, "--ks")
        seed = args.seed if args.seed is not None else int(env["MUCHLAC_SEED"])
        folds = args.folds or int(env["MUCHLAC_FOLDS"])
        rounds = args.rounds or int(env["MUCHLAC_ROUNDS"])
        bins = args.bins or int(env["MUCHLAC_BINS"])
        threads = args.threads or int(env["MUCHLAC_THREADS"])

        matrix = load_feature_matrix(args.features)
        report = report_from_json(read_json_file(args.importance))

        print(f"Sweeping k over {ks} on {matrix.cols} components")
        print("=" * 70)
        results = selection_sweep(matrix, report, ks, folds, seed, rounds, bins, threads)
        for entry in results:
            print(f"  k = {entry['k']:>6}: F = {entry['f_measure']:.3f}")

        payload = {
            "config": {
                "features": args.features,
                "importance": args.importance,
                "ks": ks,
                "seed": seed,
                "folds": folds,
                "rounds": rounds,
                "bins": bins,
            },
            "results": results,
        }
        print(f"\nOutput written to: {write_json_file(args.out, payload)}")

    except FileNotFoundError as error:
        print(f"ERROR: {error}")
        sys.exit(2)
    except ValueError as error:
        print(f"ERROR: {error}")
        sys.exit(2)


if __name__ == "__main__":
    main()
