"""Corpus metadata: CSV parsing, class subsets, and train/test splits.

The corpus layout is a metadata CSV plus fold1..fold10 directories of WAV
clips. Both `<root>/UrbanSound8K.csv` + `<root>/fold*` and the packaged
`<root>/metadata/UrbanSound8K.csv` + `<root>/audio/fold*` layouts work.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CLASS_NAMES = (
    "air_conditioner",
    "car_horn",
    "children_playing",
    "dog_bark",
    "drilling",
    "engine_idling",
    "gun_shot",
    "jackhammer",
    "siren",
    "street_music",
)

# The seven classes whose clips are mostly short ambient events; drilling,
# jackhammer, and street_music are the ones left out.
AV_SUBSET_IDS = (0, 1, 2, 3, 5, 6, 8)

MAX_CORPUS_CLIPS = 8732

_REQUIRED_COLUMNS = ("slice_file_name", "fsID", "start", "end", "salience", "fold",
                     "classID", "class")


class MetadataError(ValueError):
    """Raised when the metadata CSV cannot be interpreted."""


@dataclass(frozen=True)
class ManifestEntry:
    file_name: str
    fold: int
    class_id: int
    source_id: int
    start_s: float
    end_s: float
    salience: int
    path: Path


@dataclass
class DatasetManifest:
    entries: list
    root: Path
    class_names: tuple = CLASS_NAMES

    def class_counts(self):
        counts = {cid: 0 for cid in range(len(self.class_names))}
        for e in self.entries:
            counts[e.class_id] += 1
        return counts


def parse_metadata(csv_text, audio_root):
    """Parse the corpus CSV into a DatasetManifest.

    Columns may appear in any order and extra columns are ignored. Every
    malformed row is reported with its line number. The class name in each
    row must agree with its classID.
    """
    audio_root = Path(audio_root)
    reader = csv.reader(io.StringIO(csv_text.lstrip("﻿")))
    try:
        header = next(reader)
    except StopIteration:
        raise MetadataError("metadata CSV is empty") from None
    header = [h.strip() for h in header]
    missing = [c for c in _REQUIRED_COLUMNS if c not in header]
    if missing:
        raise MetadataError(f"metadata CSV is missing columns: {', '.join(missing)}")
    col = {name: header.index(name) for name in _REQUIRED_COLUMNS}

    entries = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise MetadataError(f"row {line_no}: expected {len(header)} fields, got {len(row)}")

        def cell(name):
            return row[col[name]].strip()

        try:
            fold = int(cell("fold"))
            class_id = int(cell("classID"))
            source_id = int(cell("fsID"))
            start_s = float(cell("start"))
            end_s = float(cell("end"))
            salience = int(cell("salience"))
        except ValueError as exc:
            raise MetadataError(f"row {line_no}: {exc}") from None

        if not 1 <= fold <= 10:
            raise MetadataError(f"row {line_no}: fold {fold} outside 1..10")
        if not 0 <= class_id < len(CLASS_NAMES):
            raise MetadataError(f"row {line_no}: classID {class_id} outside 0..9")
        name = cell("class")
        if name != CLASS_NAMES[class_id]:
            raise MetadataError(
                f"row {line_no}: class {name!r} does not match classID "
                f"{class_id} ({CLASS_NAMES[class_id]})"
            )
        if end_s < start_s:
            raise MetadataError(f"row {line_no}: end {end_s} before start {start_s}")
        if end_s - start_s >= 5.0:
            raise MetadataError(f"row {line_no}: slice longer than 5 s")

        file_name = cell("slice_file_name")
        entries.append(ManifestEntry(
            file_name=file_name,
            fold=fold,
            class_id=class_id,
            source_id=source_id,
            start_s=start_s,
            end_s=end_s,
            salience=salience,
            path=audio_root / f"fold{fold}" / file_name,
        ))

    if len(entries) > MAX_CORPUS_CLIPS:
        raise MetadataError(f"{len(entries)} rows exceed the {MAX_CORPUS_CLIPS}-clip corpus")
    return DatasetManifest(entries=entries, root=audio_root)


def load_dataset(root):
    """Locate the metadata CSV and audio folders under root and parse them."""
    root = Path(root)
    candidates = [root / "UrbanSound8K.csv", root / "metadata" / "UrbanSound8K.csv"]
    csv_path = next((p for p in candidates if p.is_file()), None)
    if csv_path is None:
        probed = ", ".join(str(p) for p in candidates)
        raise MetadataError(f"no metadata CSV found; probed {probed}")
    audio_root = root if (root / "fold1").is_dir() else root / "audio"
    if not (audio_root / "fold1").is_dir():
        raise MetadataError(
            f"no fold directories found under {root} or {root / 'audio'}"
        )
    return parse_metadata(csv_path.read_text(encoding="utf-8"), audio_root)


@dataclass(frozen=True)
class ClassSubset:
    """Kept original class IDs plus their contiguous remapping for the model."""

    kept_class_ids: tuple
    class_names: tuple

    @property
    def num_classes(self):
        return len(self.kept_class_ids)

    def remap(self, class_id):
        return self.kept_class_ids.index(class_id)


def make_subset(kept_class_ids):
    kept = tuple(sorted(set(int(c) for c in kept_class_ids)))
    if not kept:
        raise ValueError("class subset is empty")
    if kept[0] < 0 or kept[-1] >= len(CLASS_NAMES):
        raise ValueError(f"class ids {kept} outside 0..{len(CLASS_NAMES) - 1}")
    return ClassSubset(kept, tuple(CLASS_NAMES[c] for c in kept))


def select_subset(entries, kept_class_ids):
    """Filter entries to the kept classes; labels remap to 0..K-1 in ascending
    original-ID order."""
    subset = make_subset(kept_class_ids)
    keep = set(subset.kept_class_ids)
    return [e for e in entries if e.class_id in keep], subset


@dataclass
class SplitAssignment:
    train_indices: list
    test_indices: list
    seed: int = 0
    mode: str = "random"
    test_folds: tuple = field(default=())


def split_entries(entries, ratio, seed, stratified=True):
    """Seeded random train/test split over entry indices.

    Stratified mode permutes each class separately (classes visited in
    ascending ID order) and takes round(ratio * n) per class for training.
    The generator is numpy's default PCG64 seeded with `seed` alone, so a
    given (entries, ratio, seed) always produces the same assignment.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    if stratified:
        by_class = {}
        for i, e in enumerate(entries):
            by_class.setdefault(e.class_id, []).append(i)
        for cid in sorted(by_class):
            idxs = np.array(by_class[cid])
            perm = rng.permutation(len(idxs))
            n_train = round(ratio * len(idxs))
            if n_train == len(idxs) and len(idxs) > 0:
                log.warning("class %d has too few clips (%d) for a test share", cid, len(idxs))
            train.extend(idxs[perm[:n_train]])
            test.extend(idxs[perm[n_train:]])
    else:
        perm = rng.permutation(len(entries))
        n_train = round(ratio * len(entries))
        train = list(perm[:n_train])
        test = list(perm[n_train:])
    return SplitAssignment(sorted(int(i) for i in train), sorted(int(i) for i in test),
                           seed=seed, mode="random")


def split_by_folds(entries, ratio):
    """Deterministic split holding out the highest-numbered folds.

    The number of held-out folds is max(1, round((1 - ratio) * 10)), so the
    default 0.8 ratio keeps folds 9 and 10 for testing.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    folds = sorted({e.fold for e in entries})
    n_test_folds = max(1, round((1.0 - ratio) * 10))
    test_folds = tuple(folds[-n_test_folds:]) if folds else ()
    train = [i for i, e in enumerate(entries) if e.fold not in test_folds]
    test = [i for i, e in enumerate(entries) if e.fold in test_folds]
    return SplitAssignment(train, test, seed=0, mode="folds", test_folds=test_folds)
