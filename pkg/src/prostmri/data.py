"""Sample manifests, stratified hold-out splitting and stratified k-fold."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import ConfigError, IngestionError, SchemaError
from .rng import SplitMix64

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
CLASS_NAMES = {"cancer": 1, "normal": 0}
LABEL_TOKENS = {"cancer": 1, "normal": 0, "1": 1, "0": 0}

# substream keys, so split and fold draws never share a stream
_SPLIT_KEY = 0x5D11
_FOLD_KEY = 0xF01D


@dataclass(frozen=True)
class SampleRef:
    id: str
    path: str
    label: int


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[SampleRef, ...] = ()
    n_pos: int = field(init=False)
    n_neg: int = field(init=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        ids = set()
        for s in samples:
            if s.label not in (0, 1):
                raise SchemaError(f"sample {s.id!r}: label must be 0 or 1, got {s.label!r}")
            if s.id in ids:
                raise SchemaError(f"duplicate sample id {s.id!r}")
            ids.add(s.id)
        n_pos = sum(s.label for s in samples)
        object.__setattr__(self, "n_pos", n_pos)
        object.__setattr__(self, "n_neg", len(samples) - n_pos)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def subset(self, ids: Iterable[str]) -> "SampleSet":
        keep = set(ids)
        return SampleSet(tuple(s for s in self.samples if s.id in keep))

    def by_label(self, label: int) -> list[SampleRef]:
        return [s for s in self.samples if s.label == label]


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    k: int = 5
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")


def _label_from_token(token: str, where: str) -> int:
    try:
        return LABEL_TOKENS[token.strip().lower()]
    except KeyError:
        raise SchemaError(f"{where}: unknown label {token!r} (expected cancer|normal|0|1)") from None


def _load_directory(root: Path) -> list[SampleRef]:
    samples = []
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        name = entry.name.lower()
        if name not in CLASS_NAMES:
            raise SchemaError(f"unknown class directory {str(entry)!r} (expected cancer/ or normal/)")
        for f in sorted(entry.iterdir()):
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES:
                samples.append(SampleRef(f"{entry.name}/{f.name}", str(f), CLASS_NAMES[name]))
    return samples


def _load_csv(path: Path) -> list[SampleRef]:
    base = path.parent
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["id", "path", "label"]:
            raise SchemaError(f"{path}: header must be 'id,path,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            sid, p, lab = (c.strip() for c in row)
            if not sid:
                raise SchemaError(f"{path}:{lineno}: empty id")
            full = Path(p) if os.path.isabs(p) else base / p
            samples.append(SampleRef(sid, str(full), _label_from_token(lab, f"{path}:{lineno}")))
    return samples


def load_manifest(source, check_files: bool = True) -> SampleSet:
    """Load a SampleSet from a ``cancer/``+``normal/`` directory or an
    ``id,path,label`` CSV. Samples are ordered lexicographically by id."""
    source = Path(source)
    if not source.exists():
        raise IngestionError(f"manifest source not found: {source}")
    samples = _load_directory(source) if source.is_dir() else _load_csv(source)
    if not samples:
        raise IngestionError(f"no samples in {source}")
    if check_files:
        for s in samples:
            if not os.path.isfile(s.path):
                raise IngestionError(f"missing file for sample {s.id!r}: {s.path}")
    samples.sort(key=lambda s: s.id)
    return SampleSet(tuple(samples))


def write_manifest(s: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "path", "label"])
        for r in s:
            w.writerow([r.id, r.path, r.label])


def stratified_split(s: SampleSet, cfg: SplitConfig) -> tuple[SampleSet, SampleSet]:
    """Hold out ``ceil(test_fraction * n_c)`` samples of each class c."""
    if not 0.0 < cfg.test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {cfg.test_fraction}")
    rng = SplitMix64(cfg.seed)
    test_ids = set()
    for label in (0, 1):
        members = s.by_label(label)
        if not members:
            raise ConfigError(f"class {label} has no samples; cannot stratify")
        n_test = math.ceil(cfg.test_fraction * len(members))
        perm = rng.child(_SPLIT_KEY + label).permutation(len(members))
        test_ids.update(members[i].id for i in perm[:n_test])
    dev = SampleSet(tuple(r for r in s if r.id not in test_ids))
    test = SampleSet(tuple(r for r in s if r.id in test_ids))
    return dev, test


def fold_assignment(dev: SampleSet, k: int, seed: int) -> dict[str, int]:
    """Map each id to its validation fold: per-class shuffle, then round-robin."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    rng = SplitMix64(seed)
    fold_of = {}
    for label in (0, 1):
        members = dev.by_label(label)
        if len(members) < k:
            raise ConfigError(f"class {label} has {len(members)} samples, fewer than k={k} folds")
        perm = rng.child(_FOLD_KEY + label).permutation(len(members))
        for pos, i in enumerate(perm):
            fold_of[members[i].id] = pos % k
    return fold_of


def stratified_kfold(dev: SampleSet, k: int, seed: int) -> list[tuple[SampleSet, SampleSet]]:
    fold_of = fold_assignment(dev, k, seed)
    folds = []
    for f in range(k):
        train = SampleSet(tuple(r for r in dev if fold_of[r.id] != f))
        val = SampleSet(tuple(r for r in dev if fold_of[r.id] == f))
        folds.append((train, val))
    return folds


def split_roles(test: SampleSet, folds: list[tuple[SampleSet, SampleSet]]) -> dict[str, str]:
    roles = {r.id: "test" for r in test}
    for f, (_, val) in enumerate(folds):
        for r in val:
            roles[r.id] = f"fold{f}"
    return roles


def write_split_csv(path, roles: dict[str, str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "role"])
        for sid in sorted(roles):
            w.writerow([sid, roles[sid]])


def read_split_csv(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "role"]:
            raise SchemaError(f"{path}: header must be 'id,role'")
        roles = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 fields")
            if row[1] != "test" and not (row[1].startswith("fold") and row[1][4:].isdigit()):
                raise SchemaError(f"{path}:{lineno}: bad role {row[1]!r}")
            roles[row[0]] = row[1]
    return roles
