"""End-to-end runs: score, norm, bin, ingest, catalog, matrix, select, train, evaluate, report.

A run directory is a pure function of its configuration. Nothing written
depends on wall-clock time, so re-running a manifest reproduces every file
byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, StageError, ValidationError
from .evaluation import build_report, evaluate_predictions, split_train_test
from .featureset import (
    FOLLOWING,
    FeatureMatrix,
    PopularAccountCatalog,
    assemble_matrix,
    build_popular_catalog,
    feature_row,
    read_demographics,
)
from .ingestion import ProfileSnapshot, load_snapshots
from .learners.model import FAMILIES, MODEL_VERSION, ModelSpec, TrainedModel, fit_model, predict
from .psychometrics import (
    TRAITS,
    Scheme,
    compute_norms,
    default_keys,
    label_profiles,
    load_keys,
    score_file,
    write_scores,
)
from .selection import correlation_report, refine_features, select_features
from .synthetic import SyntheticCohortSpec, generate_synthetic_cohort

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "instatraits.manifest"
MANIFEST_VERSION = 1


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 31-bit seed from the base seed and a job key."""
    text = "|".join([str(int(base_seed)), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big") >> 1


@dataclass
class PipelineConfig:
    seed: int
    output: str = "run"
    responses: str | None = None
    snapshots: str | None = None
    demographics: str | None = None
    keys: str | None = None
    synthetic: dict | None = None
    traits: list = field(default_factory=lambda: list(TRAITS))
    schemes: list = field(default_factory=lambda: ["two", "three"])
    families: list = field(default_factory=lambda: list(FAMILIES))
    model_params: dict = field(default_factory=dict)
    r_min: float = 0.01
    p_max: float = 0.05
    refine: bool = True
    refine_family: str = "GLM"
    min_followers: int = 50_000
    min_participants: int = 6
    split_ratio: float = 0.8
    stratify: bool = False
    workers: int = 1

    def validate(self, check_paths: bool = True) -> None:
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigurationError("an integer base seed is required")
        if self.synthetic is None and self.responses is None:
            raise ConfigurationError("config needs either questionnaire responses or a synthetic spec")
        bad = [t for t in self.traits if t not in TRAITS]
        if bad:
            raise ConfigurationError(f"unknown traits {bad}")
        for s in self.schemes:
            Scheme(s)
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ConfigurationError(f"unknown model families {bad}")
        if self.refine and self.refine_family not in FAMILIES:
            raise ConfigurationError(f"unknown refinement family {self.refine_family}")
        if not 0 < self.p_max <= 1:
            raise ConfigurationError("p_max must lie in (0, 1]")
        if check_paths:
            for name in ("responses", "snapshots", "demographics", "keys"):
                p = getattr(self, name)
                if p is not None and not Path(p).exists():
                    raise ConfigurationError(f"{name} path {p} does not exist")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PipelineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigurationError("an integer base seed is required")
        return cls(**dict(d))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        if data.get("format") == MANIFEST_FORMAT:
            data = data["config"]
        return cls.from_dict(data)


@contextmanager
def _stage(name: str, trait: str | None = None):
    try:
        yield
    except StageError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        raise StageError(name, str(exc), trait) from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Adapter:
    def __init__(self, model: TrainedModel):
        self.model = model

    def predict(self, X):
        return np.array(self.model.predict_matrix(X))


def _refine_trainer(family: str, scheme: Scheme, seed: int):
    def train(X, y):
        # binary columns with gaps are treated as indicators (0 plus a flag)
        mask = np.array([np.isnan(c).any() and set(np.unique(c[~np.isnan(c)])) <= {0.0, 1.0} for c in X.T])
        return _Adapter(fit_model(X, list(y), ModelSpec(family, scheme, seed), indicator_mask=mask))

    return train


def _train_job(job):
    """Fit one (trait, scheme, family) model; runs in a worker when ``workers > 1``."""
    X_train, y_train, names, mask, spec_dict = job
    spec = ModelSpec.from_dict(spec_dict)
    return fit_model(X_train, y_train, spec, feature_names=names, indicator_mask=mask)


@dataclass
class RunResult:
    directory: Path
    manifest: dict
    evaluations: list
    warnings: list


def _load_inputs(config: PipelineConfig, run_dir: Path, warnings: list):
    keys = load_keys(config.keys) if config.keys else default_keys()
    if config.synthetic is not None:
        with _stage("synth"):
            spec = SyntheticCohortSpec.from_dict({**config.synthetic, "seed": config.synthetic.get("seed", config.seed)})
            cohort = generate_synthetic_cohort(spec, keys)
            cohort.write(run_dir / "inputs")
        responses = run_dir / "inputs" / "responses.csv"
        snapshots = run_dir / "inputs" / "snapshots"
        demographics = run_dir / "inputs" / "demographics.csv"
    else:
        responses = Path(config.responses)
        snapshots = Path(config.snapshots) if config.snapshots else None
        demographics = Path(config.demographics) if config.demographics else None
    with _stage("score"):
        profiles = score_file(responses, keys)
    snaps = None
    if snapshots is not None:
        with _stage("ingest"):
            snaps = load_snapshots(snapshots)
    else:
        warnings.append("no Instagram snapshots configured: demographics-only feature matrix")
    demo = None
    if demographics is not None:
        with _stage("ingest"):
            demo = read_demographics(demographics)
    return keys, profiles, snaps, demo


def run_pipeline(config: PipelineConfig) -> RunResult:
    """Run every configured stage and write the run directory.

    Raises :class:`StageError` naming the failing stage (and trait); the
    manifest then records ``status: incomplete``.
    """
    config.validate()
    run_dir = Path(config.output)
    run_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    manifest: dict = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "package_version": __version__,
        "config": config.to_dict(),
        "status": "running",
        "warnings": warnings,
        "stages": [],
        "jobs": [],
        "files": {},
    }

    def done(stage):
        manifest["stages"].append(stage)

    try:
        _run(config, run_dir, manifest, warnings, done)
    except StageError as exc:
        manifest.pop("_evaluations", None)
        manifest["status"] = "incomplete"
        manifest["failed_stage"] = {"stage": exc.stage, "trait": exc.trait, "message": exc.message}
        (run_dir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
        raise
    evaluations = manifest.pop("_evaluations", [])
    manifest["status"] = "complete"
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest["files"] = {str(p.relative_to(run_dir)): _sha256(p) for p in files}
    (run_dir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    for w in warnings:
        log.warning(w)
    return RunResult(run_dir, manifest, evaluations, warnings)


def _run(config, run_dir, manifest, warnings, done):
    keys, profiles, snaps, demo = _load_inputs(config, run_dir, warnings)
    write_scores(profiles, run_dir / "scores.csv")
    done("score")

    with _stage("norm"):
        norms = compute_norms(profiles, config.traits)
        norms.save(run_dir / "norms.json")
    done("norm")

    labels: dict[tuple[str, str], dict] = {}
    for trait in config.traits:
        for scheme in config.schemes:
            with _stage("bin", trait):
                labels[trait, scheme] = {pid: lab.value for pid, lab in
                                         label_profiles(profiles, norms, trait, scheme).items()}
    ids = [p.participant_id for p in profiles]
    with open(run_dir / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        cols = [(t, s) for t in config.traits for s in config.schemes]
        fh.write(",".join(["participant_id"] + [f"{t}.{s}" for t, s in cols]) + "\n")
        for pid in ids:
            fh.write(",".join([pid] + [labels[c].get(pid, "") for c in cols]) + "\n")
    done("bin")
    if snaps is not None:
        done("ingest")

    catalog = None
    if snaps is not None:
        with _stage("catalog"):
            catalog = build_popular_catalog(snaps.values(), config.min_followers, config.min_participants)
            catalog.save(run_dir / "catalog.json")
        manifest["catalog_version"] = catalog.version
        done("catalog")

    with _stage("matrix"):
        matrix = assemble_matrix(ids, snaps, catalog, demo)
        matrix.save(run_dir / "features.csv")
    done("matrix")

    split_seed = derive_seed(config.seed, "split")
    strat = None
    if config.stratify:
        first = (config.traits[0], config.schemes[0])
        strat = [labels[first].get(pid, "") for pid in ids]
    train_ids, test_ids = split_train_test(ids, config.split_ratio, split_seed, strat)
    train_ids, test_ids = [str(i) for i in train_ids], [str(i) for i in test_ids]
    (run_dir / "split.json").write_text(_dump({"seed": split_seed, "ratio": config.split_ratio,
                                               "train": train_ids, "test": test_ids}), encoding="utf-8")
    manifest["split_seed"] = split_seed
    row_of = {pid: i for i, pid in enumerate(matrix.row_ids)}
    indicator_mask = matrix.category_mask(FOLLOWING)

    # correlations of every feature with the numeric trait scores (training rows only)
    with _stage("select"):
        tr = [row_of[p] for p in train_ids]
        score_of = {p.participant_id: p.scores for p in profiles}
        targets = {t: [score_of[pid].get(t, math.nan) for pid in train_ids] for t in config.traits}
        correlation_report(matrix.values[tr], matrix.names, targets).to_csv(run_dir / "correlations.csv")

    selections = {}
    sel_dir = run_dir / "selections"
    sel_dir.mkdir(exist_ok=True)
    for trait in config.traits:
        for scheme in config.schemes:
            lab = labels[trait, scheme]
            tr_ids = [pid for pid in train_ids if pid in lab]
            X = matrix.values[[row_of[p] for p in tr_ids]]
            y = [lab[p] for p in tr_ids]
            with _stage("select", trait):
                if len(set(y)) < 2:
                    raise ValidationError(f"training labels for {trait}/{scheme} hold a single class")
                sel = select_features(X, y, config.r_min, config.p_max, scheme=scheme, trait=trait,
                                      feature_names=matrix.names)
                if config.refine and len(sel.features) > 1:
                    rseed = derive_seed(config.seed, trait, scheme, "refine")
                    sel = refine_features(X, y, _refine_trainer(config.refine_family, Scheme(scheme), rseed), rseed,
                                          config.r_min, config.p_max, scheme=scheme, trait=trait,
                                          feature_names=matrix.names, initial=sel)
            sel.save(sel_dir / f"{trait}.{scheme}.json")
            selections[trait, scheme] = sel
    done("select")

    model_dir = run_dir / "models"
    model_dir.mkdir(exist_ok=True)
    jobs, keys_ = [], []
    for trait in config.traits:
        for scheme in config.schemes:
            sel = selections[trait, scheme]
            lab = labels[trait, scheme]
            tr_ids = [pid for pid in train_ids if pid in lab]
            cols = [matrix.names.index(f) for f in sel.features]
            for family in config.families:
                entry = {"trait": trait, "scheme": scheme, "family": family}
                if family == "LR" and scheme != "two":
                    manifest["jobs"].append({**entry, "status": "skipped: binary-only family"})
                    continue
                if not cols:
                    manifest["jobs"].append({**entry, "status": "skipped: empty feature set"})
                    continue
                seed = derive_seed(config.seed, trait, scheme, family)
                with _stage("train", trait):
                    spec = ModelSpec(family, Scheme(scheme), seed, dict(config.model_params.get(family, {})))
                X = matrix.values[np.ix_([row_of[p] for p in tr_ids], cols)]
                y = [lab[p] for p in tr_ids]
                jobs.append((X, y, list(sel.features), indicator_mask[cols], spec.to_dict()))
                keys_.append({**entry, "seed": seed, "params": spec.resolved_params()})
    try:
        if config.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                models = list(pool.map(_train_job, jobs))
        else:
            models = []
            for job, key in zip(jobs, keys_):
                with _stage("train", key["trait"]):
                    models.append(_train_job(job))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc
    for model, key in zip(models, keys_):
        model.metadata["trait"] = key["trait"]
        if catalog is not None:
            model.metadata["catalog_version"] = catalog.version
        name = f"{key['trait']}.{key['scheme']}.{key['family']}.json"
        model.save(model_dir / name)
        manifest["jobs"].append({**key, "status": "trained", "model": f"models/{name}",
                                 "n_features": len(model.feature_names)})
    manifest["jobs"].sort(key=lambda j: (TRAITS.index(j["trait"]), j["scheme"], FAMILIES.index(j["family"])))
    done("train")

    evaluations = []
    for model, key in zip(models, keys_):
        trait, scheme = key["trait"], key["scheme"]
        lab = labels[trait, scheme]
        te = [pid for pid in test_ids if pid in lab]
        with _stage("evaluate", trait):
            X = matrix.columns(model.feature_names)[[row_of[p] for p in te]]
            proba = model.predict_proba_matrix(X)
            pred = [model.classes[i] for i in np.argmax(proba, axis=1)]
            evaluations.append(evaluate_predictions(trait, scheme, key["family"], [lab[p] for p in te],
                                                    pred, proba, split_seed))
    done("evaluate")

    with _stage("report"):
        report = build_report(evaluations, config.families)
        report.write(run_dir / "reports")
    done("report")
    manifest["_evaluations"] = evaluations


# --------------------------------------------------------------------------
# scoring a new candidate


def _best_families(run_dir: Path, scheme: str) -> dict[str, str]:
    report = json.loads((run_dir / "reports" / "report.json").read_text(encoding="utf-8"))
    best: dict[str, tuple[float, int, str]] = {}
    order = report["families"]
    for r in report["results"]:
        if r["scheme"] != scheme:
            continue
        cand = (r["accuracy"], -order.index(r["family"]), r["family"])
        if r["trait"] not in best or cand > best[r["trait"]]:
            best[r["trait"]] = cand
    return {t: v[2] for t, v in best.items()}


def score_candidate(run_dir, snapshot: ProfileSnapshot | None, demographics=None,
                    scheme: str = "two", family: str | None = None) -> dict:
    """Label one candidate for every trait with models from a finished run.

    The feature row is assembled with the run's stored catalog; every model
    must have been trained against that catalog version. ``family=None`` picks
    the family with the best test accuracy per trait.
    """
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("status") != "complete":
        raise ValidationError("run is incomplete; refusing to score")
    catalog = None
    if (run_dir / "catalog.json").exists():
        catalog = PopularAccountCatalog.load(run_dir / "catalog.json")
    include_instagram = catalog is not None
    row = feature_row(snapshot, demographics, catalog, include_instagram)
    chosen = _best_families(run_dir, scheme) if family is None else None
    low_coverage = snapshot is None or snapshot.is_private
    out = {"participant_id": getattr(snapshot, "participant_id", None) or getattr(demographics, "participant_id", None),
           "scheme": scheme, "low_coverage": low_coverage, "traits": {}}
    if low_coverage:
        out["coverage_note"] = ("private profile: scored from follower/following/post counts and demographics only"
                                if snapshot is not None else "no snapshot: scored from demographics only")
    for job in manifest["jobs"]:
        if job["scheme"] != scheme or job["status"] != "trained":
            continue
        fam = family or chosen.get(job["trait"])
        if job["family"] != fam:
            continue
        model = TrainedModel.load(run_dir / job["model"])
        if catalog is not None and model.metadata.get("catalog_version") != catalog.version:
            raise ValidationError(
                f"model {job['model']} was trained on catalog {model.metadata.get('catalog_version')}, "
                f"run catalog is {catalog.version}; refusing to score")
        label, scores = predict(model, row, strict=False)
        out["traits"][job["trait"]] = {
            "label": label,
            "scores": scores,
            "provenance": {"model": job["model"], "family": job["family"], "seed": job["seed"],
                           "model_version": MODEL_VERSION,
                           "catalog_version": model.metadata.get("catalog_version")},
        }
    return out
