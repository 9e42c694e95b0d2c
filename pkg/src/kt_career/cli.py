"""Command-line pipeline: generate, train-kt, extract, train-predictor,
evaluate, analyze.

Each command reads one flat config file, writes its artifacts into the
output directory, and stamps a manifest with the sha256 of the
effective configuration. Downstream commands compare that hash against
the manifests of the stages they consume and warn when the directory
mixes outputs of different configurations.

Exit codes: 0 success, 1 validation error, 2 numerical failure
(training divergence), 3 missing upstream artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    histogram_tables,
    lda_project_1d,
    nlg_from_step_means,
    nlg_group_test,
    overlap_coefficient,
    skill_ttest_map,
    t_test,
)
from .classifiers import fit_classifier, needs_standardized_features, save_classifier
from .config import FEATURE_SETS, RunConfig, load_run_config
from .data_model import (
    PROFILE_FEATURE_NAMES,
    SkillVocabulary,
    deduplicate_labeled,
    parse_clickstream,
    parse_profiles,
)
from .errors import (
    DegenerateVarianceError,
    DependencyError,
    KtCareerError,
    SchemaError,
    TrainingDivergedError,
)
from .evaluation import (
    EvalRow,
    default_grid,
    grid_search,
    nested_cv,
    rfe,
    spec_text,
    write_eval_report,
)
from .features import (
    Standardizer,
    build_feature_matrix,
    last_knowledge_states,
    read_feature_matrix,
    write_feature_matrix,
)
from .metrics import auc
from .synthetic import generate_cohort, write_cohort

COMMANDS = (
    "generate",
    "train-kt",
    "extract",
    "train-predictor",
    "evaluate",
    "analyze",
)


def _fmt(value) -> str:
    return repr(float(value))


def _manifest_path(out: Path, command: str) -> Path:
    return out / f"manifest_{command}.json"


def _write_manifest(
    cfg: RunConfig, command: str, artifacts: list[Path], details: dict | None = None
) -> None:
    document = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {"kt_career": __version__, "numpy": np.__version__},
        "artifacts": sorted(p.name for p in artifacts),
    }
    if details:
        document["details"] = details
    path = _manifest_path(cfg.out, command)
    path.write_text(
        json.dumps(document, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _warn_if_stale(cfg: RunConfig, upstream_command: str) -> None:
    path = _manifest_path(cfg.out, upstream_command)
    if not path.exists():
        return
    try:
        recorded = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return
    if recorded.get("config_hash") != cfg.config_hash():
        print(
            f"warning: {path.name} was produced under a different "
            f"configuration; artifacts in {cfg.out} may be stale",
            file=sys.stderr,
        )


def _require(path: Path, producing_command: str) -> Path:
    if not path.exists():
        raise DependencyError(path.name, producing_command)
    return path


def _load_vocabulary(cfg: RunConfig) -> SkillVocabulary | None:
    path = cfg.path_vocabulary()
    if path.exists():
        return SkillVocabulary.load(path)
    return None


def _load_sequences(cfg: RunConfig):
    """Clickstream plus vocabulary; the vocabulary file pins skill order."""
    clickstream = _require(cfg.path_clickstream(), "generate")
    vocabulary = _load_vocabulary(cfg)
    parsed = parse_clickstream(clickstream, vocabulary=vocabulary)
    return parsed.sequences, parsed.vocabulary


def _load_labeled(cfg: RunConfig):
    profiles_path = _require(cfg.path_profiles(), "generate")
    parsed = parse_profiles(profiles_path)
    labeled, removed = deduplicate_labeled(parsed.labeled_students())
    return labeled, removed


def cmd_generate(cfg: RunConfig) -> None:
    cohort = generate_cohort(cfg.cohort)
    paths = write_cohort(cohort, cfg.out)
    _write_manifest(cfg, "generate", list(paths.values()))
    print(
        f"generated {cfg.cohort.n_students} students "
        f"({cfg.cohort.n_stem} STEM) with {cohort.total_interactions} "
        f"interactions over {cfg.cohort.n_skills} skills"
    )
    for name in sorted(p.name for p in paths.values()):
        print(f"  wrote {name}")


def cmd_train_kt(cfg: RunConfig) -> None:
    from .dkt import train, save_checkpoint, write_training_log

    sequences, vocabulary = _load_sequences(cfg)
    _warn_if_stale(cfg, "generate")
    artifacts = []
    for variant in cfg.kt_variants():
        train_config = (
            cfg.kt_train if variant == "dkt" else cfg.kt_train.dktplus()
        )
        result = train(sequences, vocabulary.size, train_config)
        ckpt = cfg.out / f"{variant}.ckpt"
        log = cfg.out / f"{variant}_training_log.csv"
        save_checkpoint(
            ckpt,
            result.params,
            config_echo={"variant": variant, **train_config.as_dict()},
        )
        write_training_log(log, result)
        artifacts.extend([ckpt, log])
        print(
            f"{variant}: {result.n_epochs_run} epochs, best epoch "
            f"{result.best_epoch}, validation auc {result.best_val_auc:.4f}"
        )
    _write_manifest(cfg, "train-kt", artifacts)


def cmd_extract(cfg: RunConfig) -> None:
    from .dkt import load_checkpoint

    sequences, vocabulary = _load_sequences(cfg)
    labeled, removed = _load_labeled(cfg)
    _warn_if_stale(cfg, "generate")
    _warn_if_stale(cfg, "train-kt")
    if removed:
        print(f"dropped {removed} duplicate profile rows")

    artifacts = []
    skill_names = list(vocabulary.names)

    sp_matrix = build_feature_matrix("sp", labeled)
    sp_path = cfg.out / "features_sp.csv"
    write_feature_matrix(sp_path, sp_matrix)
    artifacts.append(sp_path)
    print(f"features_sp.csv: {sp_matrix.x.shape[0]} rows x "
          f"{sp_matrix.n_features} features")

    for variant in cfg.kt_variants():
        ckpt = _require(cfg.out / f"{variant}.ckpt", "train-kt")
        params, header = load_checkpoint(ckpt)
        if header["n_skills"] != vocabulary.size:
            raise SchemaError(
                f"{ckpt.name} was trained with {header['n_skills']} skills "
                f"but the vocabulary lists {vocabulary.size}"
            )
        states = last_knowledge_states(params, sequences)
        for mode in ("kt", "kt_sp"):
            matrix = build_feature_matrix(
                mode, labeled, states=states, skill_names=skill_names
            )
            path = cfg.out / f"features_{mode}_{variant}.csv"
            write_feature_matrix(path, matrix)
            artifacts.append(path)
            print(f"{path.name}: {matrix.x.shape[0]} rows x "
                  f"{matrix.n_features} features")
    _write_manifest(cfg, "extract", artifacts)


def cmd_train_predictor(cfg: RunConfig) -> None:
    feature_set = cfg.predictor_feature_set
    path = _require(cfg.out / f"features_{feature_set}.csv", "extract")
    _warn_if_stale(cfg, "extract")
    matrix = read_feature_matrix(path)
    spec = cfg.predictor_specs[cfg.predictor_family]
    x = matrix.x
    standardized = needs_standardized_features(spec)
    if standardized:
        x = Standardizer(x).transform(x)
    model = fit_classifier(spec, x, matrix.y)
    models_dir = cfg.out / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    model_path = models_dir / f"{cfg.predictor_family}_{feature_set}.json"
    save_classifier(model_path, spec, model, feature_names=matrix.names)
    train_auc = auc(model.predict_proba(x), matrix.y)
    _write_manifest(
        cfg,
        "train-predictor",
        [model_path],
        details={
            "family": cfg.predictor_family,
            "feature_set": feature_set,
            "spec": spec_text(spec),
            "standardized": standardized,
        },
    )
    print(
        f"fitted {cfg.predictor_family} on {feature_set} "
        f"({matrix.x.shape[0]} rows): training auc {train_auc:.4f}"
    )
    print(f"  wrote models/{model_path.name}")


def _available_feature_sets(cfg: RunConfig) -> list[str]:
    """The sets this run is expected to produce, in report order."""
    wanted = ["sp"]
    for variant in cfg.kt_variants():
        wanted.append(f"kt_{variant}")
    for variant in cfg.kt_variants():
        wanted.append(f"kt_sp_{variant}")
    return [s for s in FEATURE_SETS if s in wanted]


def cmd_evaluate(cfg: RunConfig) -> None:
    _warn_if_stale(cfg, "extract")
    rows = []
    rfe_records = []
    feature_sets = _available_feature_sets(cfg)
    for feature_set in feature_sets:
        path = _require(cfg.out / f"features_{feature_set}.csv", "extract")
        matrix = read_feature_matrix(path)
        for family in cfg.eval_families:
            grid = cfg.eval_grids.get(family)
            search = grid_search(
                family,
                matrix,
                n_folds=cfg.eval_folds,
                seed=cfg.seed,
                grid=grid,
            )
            selected = None
            if cfg.rfe_enabled and family != "svm":
                elimination = rfe(
                    search.best_spec,
                    matrix,
                    n_folds=cfg.eval_folds,
                    seed=cfg.seed,
                    sizes=cfg.rfe_sizes,
                )
                selected = elimination.best_features
                post = elimination.scores[elimination.best_size]
                rfe_records.append(
                    [
                        feature_set,
                        family,
                        elimination.best_size,
                        _fmt(post.mean("combined")),
                        _fmt(post.std("combined")),
                        "|".join(selected),
                    ]
                )
            nested = None
            if cfg.eval_nested:
                nested = nested_cv(
                    family,
                    matrix,
                    outer_folds=cfg.eval_folds,
                    inner_folds=cfg.eval_folds,
                    seed=cfg.seed,
                    grid=grid,
                )
            rows.append(
                EvalRow(
                    feature_set=feature_set,
                    family=family,
                    cv=search.best,
                    selected_features=selected,
                    nested=nested,
                )
            )
            print(
                f"{feature_set:>14} {family:<4} "
                f"auc {search.best.mean('auc'):.4f} "
                f"rmse {search.best.mean('rmse'):.4f} "
                f"combined {search.best.mean('combined'):.4f}"
            )
    report_path = cfg.out / "eval_report.csv"
    write_eval_report(report_path, rows)
    artifacts = [report_path]
    if rfe_records:
        rfe_path = cfg.out / "rfe_report.csv"
        with open(rfe_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "feature_set",
                    "family",
                    "best_size",
                    "combined_mean",
                    "combined_std",
                    "selected_features",
                ]
            )
            writer.writerows(rfe_records)
        artifacts.append(rfe_path)
    grids_used = {
        family: [
            spec_text(s)
            for s in (cfg.eval_grids.get(family) or default_grid(family))
        ]
        for family in cfg.eval_families
    }
    _write_manifest(
        cfg,
        "evaluate",
        artifacts,
        details={
            "folds": cfg.eval_folds,
            "families": list(cfg.eval_families),
            "feature_sets": feature_sets,
            "nested": cfg.eval_nested,
            "rfe": cfg.rfe_enabled,
            "grids": grids_used,
        },
    )
    print(f"wrote eval_report.csv with {len(rows)} rows")


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _profile_ttest_rows(labeled) -> list[list]:
    values = np.array([s.profile.feature_values() for s in labeled])
    labels = np.array([s.label for s in labeled])
    stem = values[labels == 1]
    non = values[labels == 0]
    rows = []
    for j, attribute in enumerate(PROFILE_FEATURE_NAMES):
        try:
            # STEM first: positive t means the STEM mean is higher,
            # matching the column order (STEM block before non-STEM)
            result = t_test(stem[:, j], non[:, j])
            degenerate = result.degenerate
        except DegenerateVarianceError:
            rows.append(
                [attribute] + ["nan"] * 3
                + [
                    _fmt(stem[:, j].mean()),
                    _fmt(stem[:, j].std(ddof=1)),
                    _fmt(non[:, j].mean()),
                    _fmt(non[:, j].std(ddof=1)),
                    stem.shape[0],
                    non.shape[0],
                    "true",
                ]
            )
            continue
        rows.append(
            [
                attribute,
                _fmt(result.t_score),
                _fmt(result.p_value),
                _fmt(result.cohens_d),
                _fmt(result.mean_a),
                _fmt(result.std_a),
                _fmt(result.mean_b),
                _fmt(result.std_b),
                result.n_a,
                result.n_b,
                "true" if degenerate else "false",
            ]
        )
    return rows


def cmd_analyze(cfg: RunConfig) -> None:
    from .dkt import forward, load_checkpoint

    _warn_if_stale(cfg, "extract")
    labeled, _ = _load_labeled(cfg)
    artifacts = []

    profile_path = cfg.out / "profile_ttests.csv"
    _write_table(
        profile_path,
        [
            "attribute",
            "t_score",
            "p_value",
            "cohens_d",
            "stem_mean",
            "stem_std",
            "nonstem_mean",
            "nonstem_std",
            "n_stem",
            "n_nonstem",
            "degenerate",
        ],
        _profile_ttest_rows(labeled),
    )
    artifacts.append(profile_path)
    print(f"wrote {profile_path.name}")

    for variant in cfg.kt_variants():
        path = cfg.out / f"features_kt_{variant}.csv"
        if not path.exists():
            continue
        matrix = read_feature_matrix(path)
        stem_states = matrix.x[matrix.y == 1]
        non_states = matrix.x[matrix.y == 0]
        results = skill_ttest_map(stem_states, non_states)
        rows = []
        for name, result in zip(matrix.names, results):
            skill = name.removeprefix("know_")
            rows.append(
                [
                    skill,
                    _fmt(result.t_score),
                    _fmt(result.p_value),
                    _fmt(result.cohens_d),
                    _fmt(result.mean_b),
                    _fmt(result.mean_a),
                    "true" if result.degenerate else "false",
                ]
            )
        table_path = cfg.out / f"skill_ttests_{variant}.csv"
        _write_table(
            table_path,
            [
                "skill",
                "t_score",
                "p_value",
                "cohens_d",
                "stem_mean",
                "nonstem_mean",
                "degenerate",
            ],
            rows,
        )
        artifacts.append(table_path)
        print(f"wrote {table_path.name}")

    overlap_rows = []
    _require(cfg.out / "features_sp.csv", "extract")
    for feature_set in _available_feature_sets(cfg):
        path = cfg.out / f"features_{feature_set}.csv"
        if not path.exists():
            continue
        matrix = read_feature_matrix(path)
        projection = lda_project_1d(matrix.x, matrix.y)
        edges, counts_non, counts_stem = histogram_tables(
            projection.values, matrix.y, bins=cfg.analysis_bins
        )
        rows = [
            [
                _fmt(edges[i]),
                _fmt(edges[i + 1]),
                int(counts_non[i]),
                int(counts_stem[i]),
            ]
            for i in range(len(counts_non))
        ]
        table_path = cfg.out / f"lda_projection_{feature_set}.csv"
        _write_table(
            table_path,
            ["bin_lo", "bin_hi", "count_nonstem", "count_stem"],
            rows,
        )
        artifacts.append(table_path)
        overlap = overlap_coefficient(counts_non, counts_stem)
        overlap_rows.append(
            [
                feature_set,
                _fmt(overlap),
                "true" if projection.ridged else "false",
            ]
        )
        print(f"wrote {table_path.name} (overlap {overlap:.4f})")
    overlap_path = cfg.out / "lda_overlap.csv"
    _write_table(
        overlap_path, ["feature_set", "overlap", "ridged"], overlap_rows
    )
    artifacts.append(overlap_path)

    variant = cfg.analysis_nlg_variant
    ckpt = _require(cfg.out / f"{variant}.ckpt", "train-kt")
    params, _header = load_checkpoint(ckpt)
    sequences, _vocabulary = _load_sequences(cfg)
    by_id = {s.student_id: s for s in sequences}
    label_of = {s.student_id: s.label for s in labeled}
    gains = {0: [], 1: []}
    per_student = []
    skipped = 0
    for student in labeled:
        sequence = by_id.get(student.student_id)
        if sequence is None or len(sequence) < 2:
            skipped += 1
            continue
        states = forward(params, sequence)
        value = nlg_from_step_means(
            states.values.mean(axis=1), window=cfg.analysis_nlg_window
        )
        gains[student.label].append(value)
        per_student.append([student.student_id, student.label, _fmt(value)])
    per_student_path = cfg.out / "nlg_per_student.csv"
    _write_table(
        per_student_path, ["student_id", "label", "nlg"], per_student
    )
    artifacts.append(per_student_path)

    result = nlg_group_test(gains[1], gains[0])
    summary_path = cfg.out / "nlg_summary.csv"
    _write_table(
        summary_path,
        [
            "variant",
            "window",
            "n_stem",
            "n_nonstem",
            "n_skipped",
            "stem_mean",
            "stem_std",
            "nonstem_mean",
            "nonstem_std",
            "p_one_tailed_pooled",
            "p_one_tailed_welch",
        ],
        [
            [
                variant,
                cfg.analysis_nlg_window,
                result.n_a,
                result.n_b,
                skipped,
                _fmt(result.mean_a),
                _fmt(result.std_a),
                _fmt(result.mean_b),
                _fmt(result.std_b),
                _fmt(result.p_one_tailed_pooled),
                _fmt(result.p_one_tailed_welch),
            ]
        ],
    )
    artifacts.append(summary_path)
    print(
        f"wrote {summary_path.name}: STEM nlg {result.mean_a:.4f} vs "
        f"non-STEM {result.mean_b:.4f}, one-tailed p "
        f"{result.p_one_tailed_pooled:.4f} (pooled)"
    )
    _write_manifest(cfg, "analyze", artifacts)


class _Parser(argparse.ArgumentParser):
    """Report usage problems as validation errors (exit 1), keeping
    exit code 2 reserved for numerical failures."""

    def error(self, message):
        raise KtCareerError(f"usage: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kt-career",
        description=(
            "Knowledge-tracing based STEM career prediction pipeline."
        ),
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", required=True, help="run config file")
        sub.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        sub.add_argument(
            "--out", default=None, help="override the output directory"
        )
    return parser


_DISPATCH = {
    "generate": cmd_generate,
    "train-kt": cmd_train_kt,
    "extract": cmd_extract,
    "train-predictor": cmd_train_predictor,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_run_config(
            args.config, seed_override=args.seed, out_override=args.out
        )
        cfg.out.mkdir(parents=True, exist_ok=True)
        _DISPATCH[args.command](cfg)
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KtCareerError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
