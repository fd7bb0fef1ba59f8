"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 stage failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StageError, ValidationError
from .evaluation import EvaluationResult, build_report, evaluate_predictions
from .featureset import (
    FOLLOWING,
    FeatureMatrix,
    PopularAccountCatalog,
    assemble_matrix,
    build_popular_catalog,
    read_demographics,
)
from .ingestion import POST_FEATURES, derive_post_features, load_snapshots, parse_snapshot
from .learners.model import FAMILIES, ModelSpec, TrainedModel, fit_model
from .pipeline import PipelineConfig, derive_seed, run_pipeline, score_candidate
from .psychometrics import (
    TRAITS,
    NormTable,
    Scheme,
    compute_norms,
    default_keys,
    label_profiles,
    load_keys,
    read_scores,
    score_file,
    write_scores,
)
from .selection import SelectedFeatureSet, refine_features, select_features
from .synthetic import SyntheticCohortSpec, generate_synthetic_cohort

log = logging.getLogger("instatraits")


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        try:
            return json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config}: {exc}") from exc
    return {}


def _seed(args, cfg) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in cfg:
        return int(cfg["seed"])
    raise ValidationError("a seed is required (--seed or config)")


def _out(args, default: str) -> Path:
    out = Path(getattr(args, "out", None) or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _labels(scores_path, norms_path, trait, scheme):
    profiles = read_scores(scores_path)
    norms = NormTable.load(norms_path)
    return {pid: lab.value for pid, lab in label_profiles(profiles, norms, trait, scheme).items()}


def _split_ids(path, part):
    if path is None:
        return None
    return json.loads(Path(path).read_text(encoding="utf-8"))[part]


def _rows(matrix: FeatureMatrix, labels: dict, ids=None):
    keep = [pid for pid in (ids if ids is not None else matrix.row_ids) if pid in labels]
    return keep, [labels[p] for p in keep]


# --------------------------------------------------------------------------
# subcommands


def cmd_score_questionnaire(args):
    keys = load_keys(args.keys) if args.keys else default_keys()
    profiles = score_file(args.responses, keys)
    out = _out(args, ".")
    write_scores(profiles, out / "scores.csv")
    compute_norms(profiles).save(out / "norms.json")
    print(f"scored {len(profiles)} participants -> {out / 'scores.csv'}")


def cmd_ingest(args):
    snaps = load_snapshots(args.snapshots)
    out = _out(args, ".")
    with open(out / "post_features.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "is_private", *POST_FEATURES])
        for pid, s in snaps.items():
            f = derive_post_features(s)
            w.writerow([pid, int(s.is_private)] + ["" if np.isnan(f[k]) else repr(f[k]) for k in POST_FEATURES])
    issues = {pid: list(s.issues) for pid, s in snaps.items() if s.issues}
    (out / "ingest_issues.json").write_text(json.dumps(issues, indent=1) + "\n", encoding="utf-8")
    print(f"ingested {len(snaps)} snapshots ({sum(s.is_private for s in snaps.values())} private)")


def cmd_catalog(args):
    cfg = _load_config(args)
    snaps = load_snapshots(args.snapshots)
    catalog = build_popular_catalog(snaps.values(), args.min_followers or cfg.get("min_followers", 50_000),
                                    args.min_participants or cfg.get("min_participants", 6))
    out = _out(args, ".")
    catalog.save(out / "catalog.json")
    print(f"catalog: {len(catalog)} accounts, version {catalog.version}")


def cmd_features(args):
    ids = [p.participant_id for p in read_scores(args.scores)]
    snaps = load_snapshots(args.snapshots) if args.snapshots else None
    catalog = PopularAccountCatalog.load(args.catalog) if args.catalog else None
    if snaps is not None and catalog is None:
        raise ValidationError("--catalog is required with --snapshots")
    demo = read_demographics(args.demographics) if args.demographics else None
    matrix = assemble_matrix(ids, snaps, catalog, demo)
    out = _out(args, ".")
    matrix.save(out / "features.csv")
    print(f"feature matrix {matrix.shape[0]} x {matrix.shape[1]}")


def cmd_select(args):
    cfg = _load_config(args)
    matrix = FeatureMatrix.load(args.features)
    labels = _labels(args.scores, args.norms, args.trait, args.scheme)
    ids, y = _rows(matrix, labels, _split_ids(args.split, "train"))
    X = matrix.rows(ids).values
    r_min = args.r_min if args.r_min is not None else cfg.get("r_min", 0.01)
    p_max = args.p_max if args.p_max is not None else cfg.get("p_max", 0.05)
    sel = select_features(X, y, r_min, p_max, scheme=args.scheme, trait=args.trait, feature_names=matrix.names)
    if args.refine and len(sel.features) > 1:
        from .pipeline import _refine_trainer

        seed = derive_seed(_seed(args, cfg), args.trait, args.scheme, "refine")
        sel = refine_features(X, y, _refine_trainer("GLM", Scheme(args.scheme), seed), seed, r_min, p_max,
                              scheme=args.scheme, trait=args.trait, feature_names=matrix.names, initial=sel)
    out = _out(args, ".")
    path = out / f"{args.trait}.{args.scheme}.json"
    sel.save(path)
    print(f"{len(sel.features)} features selected -> {path}")


def cmd_train(args):
    cfg = _load_config(args)
    matrix = FeatureMatrix.load(args.features)
    sel = SelectedFeatureSet.from_dict(json.loads(Path(args.selection).read_text(encoding="utf-8")))
    if not sel.features:
        raise ValidationError("selection is empty; nothing to train on")
    labels = _labels(args.scores, args.norms, sel.trait, sel.scheme)
    ids, y = _rows(matrix, labels, _split_ids(args.split, "train"))
    seed = derive_seed(_seed(args, cfg), sel.trait, sel.scheme, args.family)
    spec = ModelSpec(args.family, Scheme(sel.scheme), seed, cfg.get("model_params", {}).get(args.family, {}))
    sub = matrix.rows(ids)
    mask = np.array([c == FOLLOWING for c in sub.categories])
    cols = [sub.names.index(f) for f in sel.features]
    model = fit_model(sub.values[:, cols], y, spec, feature_names=sel.features, indicator_mask=mask[cols])
    model.metadata["trait"] = sel.trait
    if "catalog_version" in matrix.params:
        model.metadata["catalog_version"] = matrix.params["catalog_version"]
    out = _out(args, ".")
    path = out / f"{sel.trait}.{sel.scheme}.{args.family}.json"
    model.save(path)
    print(f"trained {args.family} on {len(ids)} rows -> {path}")


def cmd_evaluate(args):
    model = TrainedModel.load(args.model)
    matrix = FeatureMatrix.load(args.features)
    trait = model.metadata.get("trait") or args.trait
    if not trait:
        raise ValidationError("model carries no trait; pass --trait")
    labels = _labels(args.scores, args.norms, trait, model.spec.scheme.value)
    ids, y = _rows(matrix, labels, _split_ids(args.split, "test"))
    split_seed = json.loads(Path(args.split).read_text())["seed"] if args.split else 0
    proba = model.predict_proba_matrix(matrix.rows(ids).columns(model.feature_names))
    pred = [model.classes[i] for i in np.argmax(proba, axis=1)]
    res = evaluate_predictions(trait, model.spec.scheme, model.spec.family, y, pred, proba, split_seed)
    out = _out(args, ".")
    path = out / f"{trait}.{model.spec.scheme.value}.{model.spec.family}.eval.json"
    path.write_text(json.dumps(res.to_dict(), indent=1) + "\n", encoding="utf-8")
    print(f"accuracy {res.accuracy:.3f} on {res.n_test} rows -> {path}")


def cmd_report(args):
    results = [EvaluationResult(**json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.evaluations]
    report = build_report(results)
    paths = report.write(_out(args, "."))
    print(report.to_text(), end="")
    print(f"written: {', '.join(str(p) for p in paths.values())}")


def cmd_synth(args):
    cfg = _load_config(args)
    fields = dict(cfg.get("synthetic") or {})
    for name in ("n_participants", "catalog_width", "planted_per_trait", "effect_size", "label_noise"):
        v = getattr(args, name)
        if v is not None:
            fields[name] = v
    fields["seed"] = _seed(args, cfg)
    cohort = generate_synthetic_cohort(SyntheticCohortSpec.from_dict(fields))
    root = cohort.write(_out(args, "cohort"))
    print(f"synthetic cohort of {len(cohort.profiles)} participants -> {root}")


def cmd_run(args):
    if not args.config:
        raise ValidationError("run needs --config")
    cfg = _load_config(args)
    if cfg.get("format") == "instatraits.manifest":
        cfg = cfg["config"]
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["output"] = args.out
    config = PipelineConfig.from_dict(cfg)
    result = run_pipeline(config)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    trained = sum(j["status"] == "trained" for j in result.manifest["jobs"])
    print(f"run complete: {trained} models -> {result.directory}")


def cmd_score_candidate(args):
    snapshot = parse_snapshot(args.snapshot) if args.snapshot else None
    demo = None
    if args.demographics:
        table = read_demographics(args.demographics)
        pid = args.participant or (snapshot.participant_id if snapshot else None)
        if pid not in table:
            raise ValidationError(f"participant {pid!r} not in {args.demographics}")
        demo = table[pid]
    result = score_candidate(args.run, snapshot, demo, scheme=args.scheme, family=args.family)
    text = json.dumps(result, indent=1) + "\n"
    if args.out:
        out = _out(args, ".")
        (out / "candidate.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON pipeline configuration")
    common.add_argument("--seed", type=int, default=None, help="base seed")
    common.add_argument("--out", default=None, help="output directory")
    parser = argparse.ArgumentParser(prog="instatraits", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("score-questionnaire", cmd_score_questionnaire, "score item responses, write scores and norms")
    p.add_argument("--responses", required=True)
    p.add_argument("--keys", default=None)

    p = add("ingest", cmd_ingest, "parse snapshot exports, write profile/post features")
    p.add_argument("--snapshots", required=True)

    p = add("catalog", cmd_catalog, "build the popular-account catalog")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--min-followers", type=int, default=None)
    p.add_argument("--min-participants", type=int, default=None)

    p = add("features", cmd_features, "assemble the feature matrix")
    p.add_argument("--scores", required=True)
    p.add_argument("--snapshots", default=None)
    p.add_argument("--catalog", default=None)
    p.add_argument("--demographics", default=None)

    p = add("select", cmd_select, "correlation-based feature selection for one trait")
    for a in ("--features", "--scores", "--norms"):
        p.add_argument(a, required=True)
    p.add_argument("--trait", required=True, choices=TRAITS)
    p.add_argument("--scheme", default="two", choices=[s.value for s in Scheme])
    p.add_argument("--split", default=None, help="split.json; selection uses its training ids")
    p.add_argument("--r-min", type=float, default=None)
    p.add_argument("--p-max", type=float, default=None)
    p.add_argument("--refine", action="store_true")

    p = add("train", cmd_train, "train one model on a selected feature set")
    for a in ("--features", "--scores", "--norms", "--selection"):
        p.add_argument(a, required=True)
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--split", default=None)

    p = add("evaluate", cmd_evaluate, "evaluate a trained model")
    for a in ("--model", "--features", "--scores", "--norms"):
        p.add_argument(a, required=True)
    p.add_argument("--trait", default=None)
    p.add_argument("--split", default=None, help="split.json; evaluation uses its test ids")

    p = add("report", cmd_report, "collect evaluation files into report tables")
    p.add_argument("evaluations", nargs="+")

    p = add("synth", cmd_synth, "generate a synthetic cohort")
    p.add_argument("--n-participants", type=int, default=None)
    p.add_argument("--catalog-width", type=int, default=None)
    p.add_argument("--planted-per-trait", type=int, default=None)
    p.add_argument("--effect-size", type=float, default=None)
    p.add_argument("--label-noise", type=float, default=None)

    add("run", cmd_run, "run every stage from a config or manifest")

    p = add("score-candidate", cmd_score_candidate, "label a new profile with models from a run")
    p.add_argument("--run", required=True)
    p.add_argument("--snapshot", default=None)
    p.add_argument("--demographics", default=None)
    p.add_argument("--participant", default=None)
    p.add_argument("--scheme", default="two", choices=[s.value for s in Scheme])
    p.add_argument("--family", default=None, choices=FAMILIES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
