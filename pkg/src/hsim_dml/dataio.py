"""Synthetic hierarchical datasets and feature-file input/output.

Binary layout (little-endian): magic ``HSFD1``, ``u32 n``, ``u32 d``, ``u32 c``,
then ``n`` labels as ``u32`` and ``n * d`` values as row-major ``f64``.
CSV layout: header ``label,f0,f1,...`` and one sample per row.
"""

import csv
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from ._typing import FloatArray, IntArray
from .errors import InconsistentDimensionsError, InvalidSpecError, MalformedFileError, UnknownMagicError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"HSFD1"
_HEADER = struct.Struct("<5sIII")

FileFormat = Literal["csv", "binary"]


@dataclass(frozen=True)
class HierarchySpec:
    """Superclass / subclass Gaussian hierarchy; ``c = superclasses * subclasses_per_super``."""

    superclasses: int = 5
    subclasses_per_super: int = 4
    samples_per_class: int = 60
    dim: int = 32
    super_scale: float = 4.0
    sub_scale: float = 1.5
    noise_scale: float = 1.0

    @property
    def num_classes(self) -> int:
        return self.superclasses * self.subclasses_per_super

    def validate(self) -> None:
        if min(self.superclasses, self.subclasses_per_super, self.dim) < 1:
            raise InvalidSpecError("superclasses, subclasses_per_super and dim must be at least 1")
        if self.samples_per_class < 2:
            raise InvalidSpecError("samples_per_class must be at least 2 so every class reaches both splits")
        if not self.super_scale > self.sub_scale > self.noise_scale > 0:
            raise InvalidSpecError(
                f"scales must satisfy super_scale > sub_scale > noise_scale > 0, got "
                f"{self.super_scale}, {self.sub_scale}, {self.noise_scale}"
            )


@dataclass(frozen=True)
class FeatureSplit:
    """Features and labels of one side of the split, with their dataset indices."""

    features: FloatArray
    labels: IntArray
    indices: IntArray
    num_classes: int


@dataclass(frozen=True)
class FeatureDataset:
    """Feature vectors, integer labels and the train/test partition.

    The split is a function of the labels: within every class, samples in index
    order alternate train, test, train, ...
    """

    features: FloatArray
    labels: IntArray
    num_classes: int
    provenance: str = ""
    train_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise InconsistentDimensionsError(f"{self.features.shape} features vs {self.labels.shape} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InconsistentDimensionsError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise InconsistentDimensionsError("features must be finite")
        object.__setattr__(self, "train_mask", stratified_train_mask(self.labels))

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def _split(self, mask: np.ndarray) -> FeatureSplit:
        idx = np.flatnonzero(mask).astype(np.int64)
        return FeatureSplit(features=self.features[idx], labels=self.labels[idx], indices=idx, num_classes=self.num_classes)

    def train(self) -> FeatureSplit:
        return self._split(self.train_mask)

    def test(self) -> FeatureSplit:
        return self._split(~self.train_mask)


def stratified_train_mask(labels: IntArray) -> np.ndarray:
    mask = np.zeros(labels.shape[0], dtype=bool)
    for a in np.unique(labels):
        idx = np.flatnonzero(labels == a)
        mask[idx[0::2]] = True
    return mask


def generate_hierarchical(spec: HierarchySpec, seed: int) -> FeatureDataset:
    """Draw a dataset whose class hierarchy is known by construction.

    Superclass centers are drawn at ``super_scale``, subclass centers around them
    at ``sub_scale`` and samples around subclass centers at ``noise_scale``.
    Class ``a`` belongs to superclass ``a // subclasses_per_super``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    d = spec.dim
    supers = rng.normal(0.0, spec.super_scale, size=(spec.superclasses, d))
    subs = np.repeat(supers, spec.subclasses_per_super, axis=0)
    subs = subs + rng.normal(0.0, spec.sub_scale, size=subs.shape)
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64), spec.samples_per_class)
    features = subs[labels] + rng.normal(0.0, spec.noise_scale, size=(labels.size, d))
    order = rng.permutation(labels.size)
    logger.info(f"generated {labels.size} samples in {spec.num_classes} classes (dim {d}, seed {seed})")
    return FeatureDataset(features=features[order], labels=labels[order], num_classes=spec.num_classes, provenance=f"synthetic:{spec}")


def _save_binary(dataset: FeatureDataset, path: Path) -> None:
    n, d = dataset.features.shape
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, n, d, dataset.num_classes))
        fh.write(dataset.labels.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())


def _load_binary(path: Path) -> FeatureDataset:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedFileError("file shorter than the header", offset=len(raw))
    magic, n, d, c = _HEADER.unpack_from(raw, 0)
    if magic != FEATURE_MAGIC:
        raise UnknownMagicError(f"expected magic {FEATURE_MAGIC!r}, found {magic!r}")
    expected = _HEADER.size + 4 * n + 8 * n * d
    if len(raw) != expected:
        raise InconsistentDimensionsError(f"header declares n={n}, d={d} ({expected} bytes) but file has {len(raw)} bytes")
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=_HEADER.size).astype(np.int64)
    features = np.frombuffer(raw, dtype="<f8", count=n * d, offset=_HEADER.size + 4 * n).astype(np.float64).reshape(n, d)
    return FeatureDataset(features=features, labels=labels, num_classes=int(c), provenance=str(path))


def _save_csv(dataset: FeatureDataset, path: Path) -> None:
    d = dataset.dim
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", *(f"f{k}" for k in range(d))])
        for label, row in zip(dataset.labels, dataset.features, strict=True):
            writer.writerow([int(label), *(f"{v:.17g}" for v in row)])


def _load_csv(path: Path) -> FeatureDataset:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise MalformedFileError("missing 'label,f0,...' header", line=1)
        d = len(header) - 1
        if d < 1:
            raise MalformedFileError("header names no feature columns", line=1)
        labels: list[int] = []
        rows: list[list[float]] = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != d + 1:
                raise MalformedFileError(f"expected {d + 1} fields, found {len(record)}", line=line_no)
            try:
                label = int(record[0])
                values = [float(v) for v in record[1:]]
            except ValueError as e:
                raise MalformedFileError(f"unparseable value: {e}", line=line_no) from e
            if label < 0:
                raise MalformedFileError(f"negative label {label}", line=line_no)
            labels.append(label)
            rows.append(values)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    y = np.array(labels, dtype=np.int64)
    c = int(y.max()) + 1 if y.size else 0
    return FeatureDataset(features=features, labels=y, num_classes=c, provenance=str(path))


def save_features(dataset: FeatureDataset, path: str | Path, format: FileFormat = "binary") -> Path:
    """Write ``dataset`` in ``format``; CSV values carry 17 significant digits."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if format == "binary":
        _save_binary(dataset, out)
    elif format == "csv":
        _save_csv(dataset, out)
    else:
        raise ValueError(f"unknown feature format: {format}")
    logger.info(f"saved {dataset.features.shape[0]} samples to {out} ({format})")
    return out


def load_features(path: str | Path, format: FileFormat = "binary") -> FeatureDataset:
    """Read a dataset written by ``save_features``.

    Raises
    ------
    MalformedFileError
        With the offending line (CSV) or byte offset (binary).
    InconsistentDimensionsError
        If declared and actual sizes disagree.
    UnknownMagicError
        If a binary file does not start with ``HSFD1``.
    """
    src = Path(path)
    if format == "binary":
        return _load_binary(src)
    if format == "csv":
        return _load_csv(src)
    raise ValueError(f"unknown feature format: {format}")
