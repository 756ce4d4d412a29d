"""MUCHLAC - multispectral patch detection pipeline.

Command-line entrypoint for every pipeline stage: cut a raster into
labelled patches, dump mask patterns, extract HLAC/MUCHLAC/GLCM features,
train and apply the Real AdaBoost detector, cross-validate it, rank
components by forest permutation importance, select the top components,
and generate the synthetic benchmark scene.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from adaboost_module import TrainingError, load_model, predict_scores, save_model, train_real_adaboost
from eval_module import cross_validate, report_to_json
from feature_module import (
    INVARIANCE_D4,
    INVARIANCE_NONE,
    ExtractConfig,
    FeatureError,
    FeatureMatrix,
    default_bands,
    extract_dataset,
    load_feature_matrix,
    save_feature_matrix,
)
from forest_module import ForestParams, oob_permutation_importance, report_from_json, select_top_k, train_forest
from glcm_module import GLCM_ANGLES, GlcmConfig, extract_glcm_dataset
from mask_module import HLAC, MUCHLAC, d4_orbits, enumerate_masks, masks_to_json
from muchlac import (
    FORMAT_MAGICS,
    VERSION,
    PipelineConfig,
    dump_json,
    load_environment_config,
    parse_int_list,
    read_json_file,
    write_json_file,
)
from raster_module import build_patch_grid, load_patch_set, load_raster, save_patch_set, save_raster
from synth_module import CROSS_CHANNEL, DEFAULT_CELLS, DEFAULT_POSITIVE_FRACTION, SCENARIOS, self_test, synth_generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

GLCM = "glcm"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"ERROR: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _version_text() -> str:
    magics = ", ".join(sorted(FORMAT_MAGICS.values()))
    return f"muchlac {VERSION} (formats: {magics})"


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Random seed (default: MUCHLAC_SEED from .env or 7)")
    common.add_argument(
        "--threads", type=int, help="Worker threads (default: MUCHLAC_THREADS or the CPU count)"
    )
    common.add_argument("--progress", action="store_true", help="Show progress bars")

    parser = _Parser(
        prog="muchlac",
        description="MUCHLAC - multispectral patch feature extraction and detection",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=_version_text())
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    # dataset build
    dataset = commands.add_parser("dataset", help="Patch dataset operations")
    dataset_commands = dataset.add_subparsers(dest="action", metavar="ACTION")
    dataset_commands.required = True
    build = dataset_commands.add_parser("build", parents=[common], help="Cut a raster into labelled patches")
    build.add_argument("--raster", required=True, help="MBR1 image raster")
    build.add_argument("--mask", required=True, help="MBR1 single-channel label mask")
    build.add_argument("--patch-size", type=int, help="Patch side in pixels (default: MUCHLAC_PATCH_SIZE or 16)")
    build.add_argument("--out", required=True, help="Patch set JSON to write")

    # masks dump
    masks = commands.add_parser("masks", help="Mask pattern operations")
    masks_commands = masks.add_subparsers(dest="action", metavar="ACTION")
    masks_commands.required = True
    dump = masks_commands.add_parser("dump", parents=[common], help="List canonical masks with orbit ids")
    dump.add_argument("--kind", choices=[HLAC, MUCHLAC], required=True)
    dump.add_argument("--m", type=int, default=1, help="Displacement distance")
    dump.add_argument("--max-order", type=int, default=2)
    dump.add_argument("--out", help="JSON file to write (default: print to stdout)")

    # features extract
    features = commands.add_parser("features", help="Feature extraction")
    features_commands = features.add_subparsers(dest="action", metavar="ACTION")
    features_commands.required = True
    extract = features_commands.add_parser("extract", parents=[common], help="Extract a feature matrix")
    extract.add_argument("--raster", required=True, help="MBR1 image raster")
    extract.add_argument("--patches", required=True, help="Patch set JSON from 'dataset build'")
    extract.add_argument("--kind", "--feature", dest="kind", choices=[HLAC, MUCHLAC, GLCM], default=MUCHLAC)
    extract.add_argument("--bands", help="Comma-separated channel indices (default: first 7)")
    extract.add_argument("--distances", help="Comma-separated m values (default: MUCHLAC_DISTANCES or 1,2,3,4)")
    extract.add_argument(
        "--invariance",
        choices=[INVARIANCE_NONE, INVARIANCE_D4, "d4"],
        default=INVARIANCE_NONE,
        help="Group masks into rotation/reflection orbits (d4 is short for rotation_reflection)",
    )
    extract.add_argument("--levels", type=int, help="GLCM gray levels (default: MUCHLAC_GLCM_LEVELS or 32)")
    extract.add_argument("--angles", default=",".join(str(a) for a in GLCM_ANGLES), help="GLCM angles")
    extract.add_argument("--glcm-distance", type=int, default=1, help="GLCM pixel offset")
    extract.add_argument("--out", required=True, help="FMX1 matrix to write")

    # train
    train = commands.add_parser("train", parents=[common], help="Train Real AdaBoost")
    train.add_argument("--features", required=True, help="Labelled FMX1 matrix")
    train.add_argument("--rounds", type=int, help="Boosting rounds (default: MUCHLAC_ROUNDS or 500)")
    train.add_argument("--bins", type=int, help="Bins per stump (default: MUCHLAC_BINS or 16)")
    train.add_argument("--out", required=True, help="Model JSON to write")

    # predict
    predict = commands.add_parser("predict", parents=[common], help="Score a feature matrix")
    predict.add_argument("--features", required=True, help="FMX1 matrix")
    predict.add_argument("--model", required=True, help="Model JSON from 'train'")
    predict.add_argument("--out", required=True, help="Scores JSON to write")

    # eval
    evaluate = commands.add_parser("eval", parents=[common], help="k-fold cross-validation")
    evaluate.add_argument("--features", required=True, help="Labelled FMX1 matrix")
    evaluate.add_argument("--folds", type=int, help="Number of folds (default: MUCHLAC_FOLDS or 5)")
    evaluate.add_argument("--train-fraction", type=float, default=1.0)
    evaluate.add_argument("--rounds", type=int, help="Boosting rounds (default: MUCHLAC_ROUNDS or 500)")
    evaluate.add_argument("--bins", type=int, help="Bins per stump (default: MUCHLAC_BINS or 16)")
    evaluate.add_argument("--out", required=True, help="Report JSON to write")

    # importance
    importance = commands.add_parser("importance", parents=[common], help="Forest OOB permutation importance")
    importance.add_argument("--features", required=True, help="Labelled FMX1 matrix")
    importance.add_argument("--trees", type=int, help="Number of trees (default: MUCHLAC_TREES or 100)")
    importance.add_argument("--max-depth", type=int, help="Tree depth limit (default: unlimited)")
    importance.add_argument("--top", type=int, default=100, help="Ranking head for the cross-channel share")
    importance.add_argument("--out", required=True, help="Importance JSON to write")

    # select
    select = commands.add_parser("select", parents=[common], help="Keep the top-k components")
    select.add_argument("--features", required=True, help="FMX1 matrix")
    select.add_argument("--importance", required=True, help="Importance JSON from 'importance'")
    select.add_argument("--k", type=int, required=True)
    select.add_argument("--out", required=True, help="FMX1 matrix to write")

    # synth
    synth = commands.add_parser("synth", parents=[common], help="Generate the synthetic benchmark scene")
    synth.add_argument("--scenario", choices=list(SCENARIOS), default=CROSS_CHANNEL)
    synth.add_argument("--cells", type=int, default=DEFAULT_CELLS, help="Cells per side")
    synth.add_argument("--positive-fraction", type=float, default=DEFAULT_POSITIVE_FRACTION)
    synth.add_argument("--out", required=True, help="Directory for raster.mbr and mask.mbr")

    return parser


def _setting(value: Any, env: Dict[str, str], key: str, cast=int) -> Any:
    """CLI value if given, otherwise the environment setting."""
    if value is not None:
        return value
    try:
        return cast(env[key])
    except ValueError:
        raise ValueError(f"{key}: '{env[key]}' is not a valid value") from None


def _output_path(out: str, env: Dict[str, str]) -> str:
    # Absolute paths ignore OUTPUT_DIR
    return str(Path(env.get("OUTPUT_DIR", ".")) / out)


def _labelled(matrix: FeatureMatrix, path: str) -> np.ndarray:
    if matrix.labels is None:
        raise FeatureError(f"feature matrix {path} carries no labels")
    return matrix.labels


def run_dataset_build(args, env: Dict[str, str], config: PipelineConfig) -> str:
    patch_size = _setting(args.patch_size, env, "MUCHLAC_PATCH_SIZE")
    config.inputs = {"raster": args.raster, "mask": args.mask}
    config.params = {"patch_size": patch_size}

    raster = load_raster(args.raster)
    mask = load_raster(args.mask)
    patch_set = build_patch_grid(raster, mask, patch_size, source=Path(args.raster).name)

    print(f"Patches: {len(patch_set.patches)} ({patch_set.positive_count()} positive)")
    return save_patch_set(patch_set, _output_path(args.out, env), config.as_dict())


def run_masks_dump(args, env: Dict[str, str], config: PipelineConfig) -> Optional[str]:
    config.params = {"kind": args.kind, "m": args.m, "max_order": args.max_order}

    masks = enumerate_masks(args.kind, args.m, args.max_order)
    payload = masks_to_json(masks, d4_orbits(masks))
    payload["config"] = config.as_dict()

    if args.out is None:
        sys.stdout.write(dump_json(payload))
        return None
    print(f"Masks: {payload['count']} in {payload['orbit_count']} orbits")
    return write_json_file(_output_path(args.out, env), payload)


def run_features_extract(args, env: Dict[str, str], config: PipelineConfig) -> str:
    raster = load_raster(args.raster)
    patch_set = load_patch_set(args.patches)
    bands = parse_int_list(args.bands, "--bands") if args.bands else default_bands(raster.channels)
    config.inputs = {"raster": args.raster, "patches": args.patches}

    if args.kind == GLCM:
        glcm_config = GlcmConfig(
            bands=bands,
            levels=_setting(args.levels, env, "MUCHLAC_GLCM_LEVELS"),
            angles=parse_int_list(args.angles, "--angles"),
            distance=args.glcm_distance,
        )
        config.params = {"kind": GLCM, **glcm_config.as_dict()}
        matrix = extract_glcm_dataset(patch_set, raster, glcm_config)
    else:
        distances = parse_int_list(args.distances or env["MUCHLAC_DISTANCES"], "--distances")
        extract_config = ExtractConfig(
            bands=bands,
            distances=distances,
            use_cross_channel=args.kind == MUCHLAC,
            invariance=INVARIANCE_D4 if args.invariance == "d4" else args.invariance,
        )
        config.params = {"kind": args.kind, **extract_config.as_dict()}
        matrix = extract_dataset(
            patch_set, raster, extract_config, threads=config.threads, progress=args.progress
        )

    matrix.config = config.as_dict()
    print(f"Feature matrix: {matrix.rows} rows x {matrix.cols} components")
    return save_feature_matrix(matrix, _output_path(args.out, env))


def run_train(args, env: Dict[str, str], config: PipelineConfig) -> str:
    rounds = _setting(args.rounds, env, "MUCHLAC_ROUNDS")
    bins = _setting(args.bins, env, "MUCHLAC_BINS")
    config.inputs = {"features": args.features}
    config.params = {"rounds": rounds, "bins": bins}

    matrix = load_feature_matrix(args.features)
    model = train_real_adaboost(
        matrix.values,
        _labelled(matrix, args.features),
        rounds=rounds,
        bins=bins,
        seed=config.seed,
        component_names=matrix.component_names,
    )
    model.config = config.as_dict()

    print(f"Rounds: {model.rounds}, final training error: {model.training_errors[-1]:.4f}")
    return save_model(model, _output_path(args.out, env))


def run_predict(args, env: Dict[str, str], config: PipelineConfig) -> str:
    config.inputs = {"features": args.features, "model": args.model}

    matrix = load_feature_matrix(args.features)
    model = load_model(args.model)
    scores = predict_scores(model, matrix.values)
    labels = np.where(scores > 0, 1, -1)

    payload = {
        "config": config.as_dict(),
        "scores": [float(s) for s in scores],
        "labels": [int(v) for v in labels],
    }
    print(f"Scored {len(scores)} rows, {int(np.sum(labels == 1))} predicted positive")
    return write_json_file(_output_path(args.out, env), payload)


def run_eval(args, env: Dict[str, str], config: PipelineConfig) -> str:
    folds = _setting(args.folds, env, "MUCHLAC_FOLDS")
    rounds = _setting(args.rounds, env, "MUCHLAC_ROUNDS")
    bins = _setting(args.bins, env, "MUCHLAC_BINS")
    config.inputs = {"features": args.features}
    config.params = {"folds": folds, "train_fraction": args.train_fraction, "rounds": rounds, "bins": bins}

    matrix = load_feature_matrix(args.features)
    report = cross_validate(
        matrix.values,
        _labelled(matrix, args.features),
        k=folds,
        train_fraction=args.train_fraction,
        seed=config.seed,
        rounds=rounds,
        bins=bins,
        threads=config.threads,
    )

    precision, recall, f_measure = report.mean_metrics
    print(f"Precision: {precision:.2f}  Recall: {recall:.2f}  F-measure: {f_measure:.2f}")
    return write_json_file(_output_path(args.out, env), report_to_json(report, config.as_dict()))


def run_importance(args, env: Dict[str, str], config: PipelineConfig) -> str:
    params = ForestParams(
        n_trees=_setting(args.trees, env, "MUCHLAC_TREES"),
        max_depth=args.max_depth,
        seed=config.seed,
    )
    config.inputs = {"features": args.features}
    config.params = {**params.as_dict(), "top": args.top}

    matrix = load_feature_matrix(args.features)
    labels = _labelled(matrix, args.features)
    forest = train_forest(matrix.values, labels, params, threads=config.threads, progress=args.progress)
    report = oob_permutation_importance(
        forest,
        matrix.values,
        labels,
        seed=config.seed,
        component_names=matrix.component_names,
        threads=config.threads,
    )
    report.config = config.as_dict()

    payload = report.as_dict(top=args.top)
    print(f"Cross-channel share of top {args.top}: {payload['cross_channel_share']:.2f}")
    return write_json_file(_output_path(args.out, env), payload)


def run_select(args, env: Dict[str, str], config: PipelineConfig) -> str:
    config.inputs = {"features": args.features, "importance": args.importance}
    config.params = {"k": args.k}

    matrix = load_feature_matrix(args.features)
    report = report_from_json(read_json_file(args.importance))
    reduced = select_top_k(matrix, report, args.k)
    reduced.config = config.as_dict()

    print(f"Selected {reduced.cols} of {matrix.cols} components")
    return save_feature_matrix(reduced, _output_path(args.out, env))


def run_synth(args, env: Dict[str, str], config: PipelineConfig) -> str:
    config.params = {
        "scenario": args.scenario,
        "cells": args.cells,
        "positive_fraction": args.positive_fraction,
    }
    scene = synth_generate(args.scenario, args.cells, config.seed, args.positive_fraction)
    passed, distance = self_test(scene)

    out_dir = Path(_output_path(args.out, env))
    provenance = {**config.as_dict(), "scene": scene.provenance}
    save_raster(scene.raster, str(out_dir / "raster.mbr"), provenance=provenance)
    save_raster(scene.mask, str(out_dir / "mask.mbr"), provenance=provenance)

    print(f"Band histogram distance: {distance:.4f} ({'pass' if passed else 'FAIL'})")
    return str(out_dir)


HANDLERS = {
    ("dataset", "build"): run_dataset_build,
    ("masks", "dump"): run_masks_dump,
    ("features", "extract"): run_features_extract,
    ("train", None): run_train,
    ("predict", None): run_predict,
    ("eval", None): run_eval,
    ("importance", None): run_importance,
    ("select", None): run_select,
    ("synth", None): run_synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one pipeline stage.

    Settings come from the command line first, then the environment (and
    .env file), then built-in defaults.

    Returns:
        int: Exit code (0 success, 1 usage error, 2 data error).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)

    action = getattr(args, "action", None)
    handler = HANDLERS[(args.command, action)]
    subcommand = f"{args.command} {action}" if action else args.command
    to_stdout = subcommand == "masks dump" and args.out is None

    try:
        env = load_environment_config()
        config = PipelineConfig(
            subcommand=subcommand,
            seed=_setting(args.seed, env, "MUCHLAC_SEED"),
            threads=_setting(args.threads, env, "MUCHLAC_THREADS"),
            output=args.out,
        )

        if not to_stdout:
            print(f"MUCHLAC {VERSION} - {subcommand}")
            print("=" * 70)
            print(f"Seed: {config.seed}  Threads: {config.threads}")

        written = handler(args, env, config)

        if written is not None:
            print(f"Output written to: {written}")
        return EXIT_OK

    except FileNotFoundError as error:
        print(f"ERROR: {error}")
        return EXIT_DATA
    except TrainingError as error:
        print(f"ERROR: training failed: {error}")
        return EXIT_DATA
    except ValueError as error:
        print(f"ERROR: {error}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
