"""Experiment orchestration: split, features, CV training, calibration,
operating-point selection, held-out evaluation and external evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from . import __version__
from .data import SampleSet, SplitConfig, load_manifest, stratified_kfold, stratified_split
from .errors import (ConfigError, ContractError, LeakageError, PipelineError, ProstMRIError,
                     UndefinedMetricError)
from .features import HogParams, hog, load_embeddings
from .imageproc import SAFE_AUG, AugSpec, load_standardized, synthesize_variants
from .linear import LinearModel, fit_platt, save_model, load_model, sigmoid, train
from .metrics import (ConfusionMatrix, Fixed, MetricSet, SensitivityFloor, auc, confusion,
                      select_threshold, summarize)
from .rng import SplitMix64

log = logging.getLogger(__name__)

AUG_LABELS = {"off": "Real only", "synthetic": "Real + Synthetic (train-only)",
              "safeaug": "Real + SafeAug"}


# -- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class Augmentation:
    mode: str = "off"                  # off | synthetic | safeaug
    n_per_image: int = 1
    spec: AugSpec = AugSpec()

    @property
    def label(self) -> str:
        return AUG_LABELS[self.mode]


@dataclass(frozen=True)
class PipelineConfig:
    name: str
    feature: str                       # hog | embedding
    kind: str                          # svm | logreg
    C: tuple[float, ...] = (1.0,)
    calibrated: bool = False
    policy: object = None              # Fixed | SensitivityFloor
    hog_params: HogParams = HogParams()
    embedding_file: Optional[str] = None
    augmentation: Augmentation = Augmentation()

    @property
    def output_space(self) -> str:
        return "probability" if (self.calibrated or self.kind == "logreg") else "score"


@dataclass(frozen=True)
class ExperimentConfig:
    source: str
    pipelines: tuple[PipelineConfig, ...]
    split: SplitConfig = SplitConfig()
    seed: int = 42
    output: str = "out"
    s_min: float = 0.95
    threshold_selection: str = "pooled"   # pooled | per_fold
    refit: bool = True
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        # the output location does not influence results
        canon = json.dumps({k: v for k, v in self.raw.items() if k != "output"},
                           sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def model_slug(name: str) -> str:
    """File stem for a pipeline's models: ``"HOG + SVM"`` -> ``"hog_svm"``."""
    return re.sub(r"[^0-9a-z]+", "_", name.lower()).strip("_") or "pipeline"


def config_schema() -> dict:
    return json.loads(resources.files("prostmri").joinpath("config_schema.json").read_text())


def _default_fixed(output_space: str) -> Fixed:
    return Fixed(0.5 if output_space == "probability" else 0.0)


def _aug_from(node, where) -> Augmentation:
    if node in (None, "off", False):
        return Augmentation()
    if isinstance(node, str):
        node = {"mode": node}
    mode = node.get("mode") or "off"  # YAML 1.1 reads a bare off as False
    if mode == "off":
        return Augmentation()
    base = SAFE_AUG if mode == "safeaug" else AugSpec()
    spec = AugSpec(**{**base.__dict__, **node.get("spec", {})})
    return Augmentation(mode, int(node.get("n_per_image", 1)), spec)


def config_from_dict(d: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Validate against the shipped schema and build an ExperimentConfig.

    Relative paths are resolved against ``base_dir`` (the config's folder).
    """
    try:
        jsonschema.validate(d, config_schema())
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from None
    base = Path(base_dir)

    def resolve(p):
        return str(p) if Path(p).is_absolute() else str(base / p)

    seed = int(d.get("seed", 42))
    sp = d.get("split", {})
    split = SplitConfig(float(sp.get("test_fraction", 0.2)), int(sp.get("k", 5)),
                        int(sp.get("seed", seed)))
    s_min = float(d.get("s_min", 0.95))
    default_aug = d.get("augmentation", "off")
    pipes, names, slugs = [], set(), set()
    for i, p in enumerate(d["pipelines"]):
        where = f"pipelines[{i}]"
        name = p["name"]
        if name in names:
            raise ConfigError(f"{where}: duplicate pipeline name {name!r}")
        names.add(name)
        if model_slug(name) in slugs:
            raise ConfigError(f"{where}: pipeline name {name!r} maps to an existing model file name")
        slugs.add(model_slug(name))
        feat = p["feature"]
        model = p["model"]
        C = model.get("C", 1.0)
        C = tuple(float(c) for c in (C if isinstance(C, list) else [C]))
        if any(c <= 0 for c in C):
            raise ConfigError(f"{where}: C must be positive")
        hp = HogParams(**{k: v for k, v in feat.items() if k != "type"}) if feat["type"] == "hog" else HogParams()
        emb = None
        if feat["type"] == "embedding":
            emb = resolve(feat["file"])
            if not Path(emb).is_file():
                raise ConfigError(f"{where}: embedding file not found: {emb}")
        aug = _aug_from(p.get("augmentation", default_aug), where)
        if aug.mode != "off" and feat["type"] != "hog":
            raise ConfigError(f"{where}: augmentation needs image (hog) features")
        pc = PipelineConfig(name, feat["type"], model["kind"], C, bool(p.get("calibrated", False)),
                            None, hp, emb, aug)
        th = p.get("threshold", {"policy": "fixed"})
        if th["policy"] == "fixed":
            policy = Fixed(float(th["t"])) if "t" in th else _default_fixed(pc.output_space)
        else:
            policy = SensitivityFloor(float(th.get("s_min", s_min)))
        pipes.append(PipelineConfig(**{**pc.__dict__, "policy": policy}))
    return ExperimentConfig(
        source=resolve(d["data"]["source"]), pipelines=tuple(pipes), split=split, seed=seed,
        output=resolve(d.get("output", "out")), s_min=s_min,
        threshold_selection=d.get("threshold_selection", "pooled"),
        refit=bool(d.get("refit", True)), raw=d)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            d = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(d, path.parent)


# -- leakage audit -----------------------------------------------------------------

class LeakageGuard:
    """Records which sample ids reach each fitting step and refuses test ids."""

    def __init__(self, test_ids):
        self.test_ids = frozenset(test_ids)
        self.touched: dict[str, set] = {}

    def check(self, step: str, ids) -> None:
        ids = set(ids)
        bad = ids & self.test_ids
        if bad:
            raise LeakageError(f"test ids reached step {step!r}: {sorted(bad)[:5]}")
        self.touched.setdefault(step, set()).update(ids)

    def all_touched(self) -> set:
        return set().union(*self.touched.values()) if self.touched else set()


# -- results -----------------------------------------------------------------------

@dataclass
class OperatingPoint:
    threshold: float
    cm: ConfusionMatrix
    metrics: MetricSet

    def to_dict(self):
        return {"threshold": self.threshold, "cm": str(self.cm), "metrics": self.metrics.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["threshold"], ConfusionMatrix.parse(d["cm"]), MetricSet(**d["metrics"]))


@dataclass
class PipelineResult:
    name: str
    feature: str
    kind: str
    calibrated: bool
    augmentation: str
    output_space: str
    C: float
    policy: str
    fold_metrics: list
    operating: OperatingPoint
    floor: OperatingPoint
    test_auc: Optional[float]
    test_outputs: list           # [id, label, output]
    model_file: Optional[str] = None

    @property
    def metrics(self) -> MetricSet:
        return self.operating.metrics.with_auc(self.test_auc)

    def to_dict(self):
        return {
            "name": self.name, "feature": self.feature, "kind": self.kind,
            "calibrated": self.calibrated, "augmentation": self.augmentation,
            "output_space": self.output_space, "C": self.C, "policy": self.policy,
            "fold_metrics": [m.to_dict() for m in self.fold_metrics],
            "operating": self.operating.to_dict(), "floor": self.floor.to_dict(),
            "test_auc": self.test_auc, "test_outputs": self.test_outputs,
            "model_file": self.model_file,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["feature"], d["kind"], d["calibrated"], d["augmentation"],
                   d["output_space"], d["C"], d["policy"],
                   [MetricSet(**m) for m in d["fold_metrics"]],
                   OperatingPoint.from_dict(d["operating"]), OperatingPoint.from_dict(d["floor"]),
                   d["test_auc"], d["test_outputs"], d.get("model_file"))


@dataclass
class RunReport:
    pipelines: list
    environment: dict
    split: dict
    audit: Optional[LeakageGuard] = None

    def to_dict(self):
        return {"pipelines": [p.to_dict() for p in self.pipelines],
                "environment": self.environment, "split": self.split}

    @classmethod
    def from_dict(cls, d):
        return cls([PipelineResult.from_dict(p) for p in d["pipelines"]], d["environment"], d["split"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- feature plumbing --------------------------------------------------------------

def _digest(path) -> Optional[str]:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


class FeatureStore:
    """Lazily computed, cached features for one SampleSet."""

    def __init__(self, samples: SampleSet):
        self.samples = {s.id: s for s in samples}
        self._images: dict[str, np.ndarray] = {}
        self._hog: dict[tuple, dict[str, np.ndarray]] = {}
        self._emb: dict[str, dict[str, np.ndarray]] = {}

    def image(self, sid: str) -> np.ndarray:
        if sid not in self._images:
            self._images[sid] = load_standardized(self.samples[sid].path)
        return self._images[sid]

    def hog(self, sid: str, p: HogParams) -> np.ndarray:
        cache = self._hog.setdefault(tuple(sorted(p.to_dict().items())), {})
        if sid not in cache:
            cache[sid] = hog(self.image(sid), p)
        return cache[sid]

    def embedding(self, sid: str, path: str, manifest: SampleSet) -> np.ndarray:
        if path not in self._emb:
            self._emb[path] = load_embeddings(path, manifest)
        return self._emb[path][sid]


def _matrix(store: FeatureStore, pc: PipelineConfig, ids, manifest: SampleSet) -> np.ndarray:
    if pc.feature == "hog":
        rows = [store.hog(i, pc.hog_params) for i in ids]
    else:
        rows = [store.embedding(i, pc.embedding_file, manifest) for i in ids]
    return np.vstack(rows)


def _training_data(store, pc, part: SampleSet, manifest, rng: SplitMix64):
    X = _matrix(store, pc, part.ids, manifest)
    y = np.array(part.labels)
    aug = pc.augmentation
    if aug.mode == "off" or aug.n_per_image == 0:
        return X, y
    pairs = [(store.image(s.id), s.label) for s in part]
    variants = synthesize_variants(pairs, aug.n_per_image, aug.spec, rng)
    Xa = np.vstack([hog(img, pc.hog_params) for img, _ in variants])
    ya = np.array([lab for _, lab in variants])
    return np.vstack([X, Xa]), np.concatenate([y, ya])


def _outputs(model: LinearModel, pc: PipelineConfig, X, cal) -> np.ndarray:
    s = model.decision(X)
    if cal is not None:
        return cal.prob(s)
    if pc.kind == "logreg":
        return sigmoid(s)
    return s


def _safe_auc(outputs, labels) -> Optional[float]:
    try:
        return auc(outputs, labels)
    except UndefinedMetricError:
        return None


def _policy_str(policy) -> str:
    if isinstance(policy, Fixed):
        return f"fixed({policy.t:g})"
    return f"sensitivity_floor({policy.s_min:g})"


# -- experiment --------------------------------------------------------------------

def _cross_validate(pc, C, folds, store, manifest, guard, seed):
    """Fold models and pooled out-of-fold raw scores (dev order)."""
    models, oof = [], {}
    for f, (train_part, val_part) in enumerate(folds):
        try:
            guard.check("train", train_part.ids)
            X, y = _training_data(store, pc, train_part, manifest, SplitMix64(seed).child(1000 + f))
            m = train(pc.kind, X, y, C, seed)
            Xv = _matrix(store, pc, val_part.ids, manifest)
            for sid, s in zip(val_part.ids, m.decision(Xv)):
                oof[sid] = float(s)
            models.append(m)
        except ProstMRIError as exc:
            raise PipelineError(pc.name, f, exc) from exc
    return models, oof


def _run_pipeline(pc: PipelineConfig, cfg: ExperimentConfig, dev, test, folds, store,
                  manifest, guard, out_dir: Optional[Path]) -> PipelineResult:
    seed = cfg.seed
    dev_ids, dev_y = dev.ids, np.array(dev.labels)

    best = None
    for C in sorted(pc.C):
        models, oof = _cross_validate(pc, C, folds, store, manifest, guard, seed)
        raw = np.array([oof[i] for i in dev_ids])
        score = auc(raw, dev_y) if len(pc.C) > 1 else 0.0
        if best is None or score > best[0]:
            best = (score, C, models, raw)
    _, C, fold_models, raw_oof = best

    try:
        cal = None
        if pc.calibrated:
            guard.check("calibration", dev_ids)
            cal = fit_platt(raw_oof, dev_y)
        oof_out = cal.prob(raw_oof) if cal is not None else (
            sigmoid(raw_oof) if pc.kind == "logreg" else raw_oof)

        guard.check("threshold", dev_ids)
        index = {sid: k for k, sid in enumerate(dev_ids)}
        fold_idx = [np.array([index[i] for i in val.ids]) for _, val in folds]
        floor_policy = pc.policy if isinstance(pc.policy, SensitivityFloor) else SensitivityFloor(cfg.s_min)

        def choose(policy):
            if isinstance(policy, Fixed) or cfg.threshold_selection == "pooled":
                return select_threshold(oof_out, dev_y, policy)
            return float(np.mean([select_threshold(oof_out[ix], dev_y[ix], policy) for ix in fold_idx]))

        threshold = choose(pc.policy)
        floor_t = choose(floor_policy)

        fold_metrics = []
        for ix in fold_idx:
            ms = summarize(confusion(oof_out[ix], dev_y[ix], threshold))
            fold_metrics.append(ms.with_auc(_safe_auc(oof_out[ix], dev_y[ix])))

        # final predictor
        if cfg.refit:
            guard.check("train", dev_ids)
            X, y = _training_data(store, pc, dev, manifest, SplitMix64(seed).child(999))
            final = [train(pc.kind, X, y, C, seed)]
        else:
            final = fold_models
    except ProstMRIError as exc:
        raise PipelineError(pc.name, None, exc) from exc

    # held-out test: evaluated exactly once
    Xt = _matrix(store, pc, test.ids, manifest)
    yt = np.array(test.labels)
    out_t = np.mean([_outputs(m, pc, Xt, cal) for m in final], axis=0)
    cm = confusion(out_t, yt, threshold)
    cm_floor = confusion(out_t, yt, floor_t)

    model_file = None
    if out_dir is not None:
        mdir = out_dir / "models"
        mdir.mkdir(parents=True, exist_ok=True)
        slug = model_slug(pc.name)
        meta = {
            "pipeline": pc.name, "output_space": pc.output_space,
            "thresholds": {"fixed": threshold if isinstance(pc.policy, Fixed)
                           else _default_fixed(pc.output_space).t, "floor": floor_t,
                           "s_min": floor_policy.s_min},
            "train_ids": sorted(dev_ids),
            "train_digests": sorted(d for d in (_digest(store.samples[i].path)
                                                for i in dev_ids) if d),
            "embedding_dim": int(Xt.shape[1]) if pc.feature == "embedding" else None,
        }
        for k, m in enumerate(final):
            m = m.with_calibration(cal).with_meta(**meta)
            m = replace(m, source=pc.feature,
                        hog_params=pc.hog_params.to_dict() if pc.feature == "hog" else None)
            name = f"{slug}.json" if cfg.refit else f"{slug}.fold{k}.json"
            save_model(m, mdir / name)
            if k == 0:
                model_file = f"models/{name}"

    return PipelineResult(
        name=pc.name, feature=pc.feature, kind=pc.kind, calibrated=pc.calibrated,
        augmentation=pc.augmentation.label, output_space=pc.output_space, C=C,
        policy=_policy_str(pc.policy), fold_metrics=fold_metrics,
        operating=OperatingPoint(threshold, cm, summarize(cm)),
        floor=OperatingPoint(floor_t, cm_floor, summarize(cm_floor)),
        test_auc=_safe_auc(out_t, yt),
        test_outputs=[[sid, int(lab), float(o)] for sid, lab, o in zip(test.ids, yt, out_t)],
        model_file=model_file,
    )


def data_digest(manifest: SampleSet) -> str:
    h = hashlib.sha256()
    for s in manifest:
        h.update(f"{s.id}\0{s.label}\0{_digest(s.path)}\n".encode())
    return h.hexdigest()


def run_experiment(cfg: ExperimentConfig, write: bool = True,
                   manifest: Optional[SampleSet] = None, split=None) -> RunReport:
    """Run every pipeline; with ``write`` the report, tables, figures and
    models land in ``cfg.output``. ``split`` may supply a (dev, test) pair."""
    manifest = manifest if manifest is not None else load_manifest(cfg.source)
    dev, test = split if split is not None else stratified_split(manifest, cfg.split)
    if set(dev.ids) & set(test.ids):
        raise LeakageError("dev and test splits overlap")
    folds = stratified_kfold(dev, cfg.split.k, cfg.split.seed)
    guard = LeakageGuard(test.ids)
    store = FeatureStore(manifest)
    out_dir = Path(cfg.output) if write else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for pc in cfg.pipelines:
        log.info("pipeline %s", pc.name)
        results.append(_run_pipeline(pc, cfg, dev, test, folds, store, manifest, guard, out_dir))
        if len(results[-1].test_outputs) != len(test):
            raise LeakageError("test evaluation does not cover the test split")

    if guard.all_touched() & guard.test_ids:
        raise LeakageError("test ids reached a fitting step")
    report = RunReport(
        pipelines=results,
        environment={"seed": cfg.seed, "config_hash": cfg.config_hash, "version": __version__,
                     "data_hash": data_digest(manifest)},
        split={"n_dev": len(dev), "n_dev_pos": dev.n_pos, "n_dev_neg": dev.n_neg,
               "n_test": len(test), "n_test_pos": test.n_pos, "n_test_neg": test.n_neg,
               "k": cfg.split.k, "test_fraction": cfg.split.test_fraction,
               "split_seed": cfg.split.seed, "test_ids": test.ids,
               "leakage_check": "passed"},
        audit=guard,
    )
    if out_dir is not None:
        from .report import render_report
        report.save(out_dir / "report.json")
        render_report(report, out_dir)
    return report


# -- external evaluation -------------------------------------------------------------

@dataclass
class ExternalResult:
    model: str
    n: int
    n_pos: int
    n_neg: int
    auc: Optional[float]
    fixed: OperatingPoint
    floor: OperatingPoint
    flags: list

    def to_dict(self):
        return {"model": self.model, "n": self.n, "n_pos": self.n_pos, "n_neg": self.n_neg,
                "auc": self.auc, "fixed": self.fixed.to_dict(), "floor": self.floor.to_dict(),
                "flags": self.flags}


def evaluate_external(model_path, source, embeddings: Optional[str] = None) -> ExternalResult:
    """Score an external manifest with a persisted model; nothing is refitted."""
    model = load_model(model_path)
    manifest = source if isinstance(source, SampleSet) else load_manifest(source)
    if model.source == "hog":
        if embeddings is not None:
            raise ContractError("HOG model cannot be evaluated on an embedding file; supply images")
        p = HogParams(**model.hog_params)
        X = np.vstack([hog(load_standardized(s.path), p) for s in manifest])
    elif model.source == "embedding":
        if embeddings is None:
            raise ContractError("embedding model needs an embedding file for the external set")
        vecs = load_embeddings(embeddings, manifest)
        X = np.vstack([vecs[i] for i in manifest.ids])
    else:
        raise ContractError(f"model has unknown feature source {model.source!r}")
    if X.shape[1] != model.dim:
        raise ContractError(f"external features have dim {X.shape[1]}, model expects {model.dim}")

    s = model.decision(X)
    space = model.meta.get("output_space", "score")
    if model.calibration is not None:
        out = model.calibration.prob(s)
    elif model.kind == "logreg":
        out = sigmoid(s)
    else:
        out = s
    y = np.array(manifest.labels)
    th = model.meta.get("thresholds", {})
    t_fixed = float(th.get("fixed", 0.5 if space == "probability" else 0.0))
    t_floor = float(th.get("floor", t_fixed))
    cm_f, cm_s = confusion(out, y, t_fixed), confusion(out, y, t_floor)

    flags = []
    train_ids = set(model.meta.get("train_ids", []))
    train_digests = set(model.meta.get("train_digests", []))
    # content digests decide when available; ids collide across unrelated datasets
    if train_digests:
        reused = bool(train_digests & {_digest(x.path) for x in manifest})
    else:
        reused = bool(train_ids & set(manifest.ids))
    if reused:
        flags.append("internal data reuse")
    a = _safe_auc(out, y)
    if a is None:
        flags.append("single class: AUC undefined")
    return ExternalResult(str(model_path), len(manifest), manifest.n_pos, manifest.n_neg, a,
                          OperatingPoint(t_fixed, cm_f, summarize(cm_f)),
                          OperatingPoint(t_floor, cm_s, summarize(cm_s)), flags)
