"""Labelled feature corpus: building from a dataset tree, persistence, and retrieval.

Index file layout (little-endian)::

    "ARPX"  magic
    u32     format version
    32B     SHA-256 config fingerprint
    u32     record count
    per record:
        u32 + UTF-8   image id
        u8            label ordinal
        u32           keypoint count n
        n x 5 f32     x, y, scale, orientation, response
        n x 128 f32   descriptors
    u8      score-matrix flag
    [u32 m, m x m f64 scores]   when flag == 1
    u8      source-path flag
    [count x (u32 + UTF-8)]     when flag == 1
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import struct
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigMismatchError, CorruptIndexError, DatasetError, IncompatibleIndexError,
                     ImageFormatError, ImageReadError)
from .features import DESCRIPTOR_SIZE, FeatureSet, Keypoint, SiftConfig, extract_features
from .imaging import PreprocessConfig, load_image, preprocess, quality_gate
from .labels import PatternLabel, valid_labels
from .matching import DegenerateScoreWarning, MatchConfig, compare

logger = logging.getLogger(__name__)

MAGIC = b"ARPX"
FORMAT_VERSION = 1
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def config_fingerprint(pre: PreprocessConfig, sift: SiftConfig) -> bytes:
    """SHA-256 over every setting that changes extracted features."""
    pre_fields = asdict(pre)
    pre_fields.pop("gate_override")
    blob = json.dumps({"preprocess": pre_fields, "sift": asdict(sift)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).digest()


@dataclass(frozen=True)
class IndexRecord:
    image_id: str
    source_path: str
    label: PatternLabel
    features: FeatureSet


@dataclass
class BuildReport:
    indexed: list[str] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"REJECTED {path} {reason}" for path, reason in self.rejected]
        out.append(f"INDEXED {len(self.indexed)} REJECTED {len(self.rejected)}")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


@dataclass(eq=False)
class ImageIndex:
    records: list[IndexRecord]
    fingerprint: bytes
    scores: np.ndarray | None = None
    version: int = FORMAT_VERSION
    build_report: BuildReport | None = None

    def __post_init__(self):
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in index")
        if self.scores is not None and self.scores.shape != (len(ids), len(ids)):
            raise ValueError("score matrix dimension does not match record count")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> list[PatternLabel]:
        return [r.label for r in self.records]

    @property
    def ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def __eq__(self, other):
        if not isinstance(other, ImageIndex):
            return NotImplemented
        if (self.fingerprint, self.version, self.records) != (other.fingerprint, other.version, other.records):
            return False
        if (self.scores is None) != (other.scores is None):
            return False
        return self.scores is None or np.array_equal(self.scores, other.scores)

    def subset(self, keep: list[int]) -> "ImageIndex":
        scores = None if self.scores is None else self.scores[np.ix_(keep, keep)]
        return ImageIndex([self.records[i] for i in keep], self.fingerprint, scores, self.version)


@dataclass(frozen=True)
class QueryHit:
    image_id: str
    label: PatternLabel
    score: float


def _discover(root: Path) -> list[tuple[PatternLabel, Path]]:
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    items = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")):
        try:
            label = PatternLabel.parse(sub.name)
        except ValueError:
            raise DatasetError(f"unknown pattern directory {sub.name!r}; valid labels: "
                               f"{', '.join(valid_labels())}") from None
        for f in sorted(sub.iterdir()):
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES:
                items.append((label, f))
    if not items:
        raise DatasetError(f"no images found under {root}")
    return items


def _ingest(args):
    label, path, root, pre, sift, fp = args
    image_id = path.relative_to(root).as_posix()
    try:
        raster = load_image(path)
    except (ImageReadError, ImageFormatError) as exc:
        return image_id, str(path), None, f"unreadable: {exc}", None
    gate = quality_gate(raster, pre)
    if not gate.accepted:
        return image_id, str(path), None, gate.reason, None
    feats = extract_features(preprocess(raster, pre), sift, image_id, label, fingerprint=fp)
    return image_id, str(path), feats, None, gate.warning


def build_index(dataset_root: str | os.PathLike, pre: PreprocessConfig = PreprocessConfig(),
                sift: SiftConfig = SiftConfig(), workers: int = 1) -> ImageIndex:
    """Index every gate-passing image under ``<root>/<label>/``.

    The rejection report is attached as ``index.build_report``.
    """
    root = Path(dataset_root)
    items = _discover(root)
    fp = config_fingerprint(pre, sift)
    jobs = [(label, path, root, pre, sift, fp) for label, path in items]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_ingest, jobs, chunksize=8))
    else:
        results = [_ingest(j) for j in jobs]

    report = BuildReport()
    records = []
    for (label, _), (image_id, src, feats, reason, warn) in zip(items, results):
        if feats is None:
            report.rejected.append((src, reason))
            continue
        if warn:
            report.warnings.append(f"{src}: {warn}")
        records.append(IndexRecord(image_id, src, label, feats))
        report.indexed.append(image_id)
    logger.info("indexed %d, rejected %d", len(records), len(report.rejected))
    return ImageIndex(records, fp, build_report=report)


def _write_str(buf: io.BufferedIOBase, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def serialize_index(index: ImageIndex) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", index.version))
    if len(index.fingerprint) != 32:
        raise ValueError("fingerprint must be 32 bytes")
    buf.write(index.fingerprint)
    buf.write(struct.pack("<I", len(index.records)))
    for rec in index.records:
        _write_str(buf, rec.image_id)
        buf.write(struct.pack("<B", rec.label.ordinal))
        n = len(rec.features)
        buf.write(struct.pack("<I", n))
        kp = np.array([k.as_tuple() for k in rec.features.keypoints], dtype="<f4").reshape(n, 5)
        buf.write(kp.tobytes())
        buf.write(rec.features.descriptors.astype("<f4").tobytes())
    if index.scores is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01")
        buf.write(struct.pack("<I", index.scores.shape[0]))
        buf.write(np.ascontiguousarray(index.scores, dtype="<f8").tobytes())
    buf.write(b"\x01")
    for rec in index.records:
        _write_str(buf, rec.source_path)
    return buf.getvalue()


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary sibling file so failures never leave partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def save_index(index: ImageIndex, path: str | os.PathLike) -> None:
    atomic_write(path, serialize_index(index))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CorruptIndexError(f"index file truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptIndexError(f"invalid UTF-8 string in index: {exc}") from None


def deserialize_index(data: bytes) -> ImageIndex:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptIndexError("not an index file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise IncompatibleIndexError(f"index format version {version} is not supported "
                                     f"(expected {FORMAT_VERSION})")
    fp = r.take(32)
    count = r.u32()
    records = []
    for _ in range(count):
        image_id = r.string()
        try:
            label = PatternLabel.from_ordinal(r.u8())
        except ValueError as exc:
            raise CorruptIndexError(str(exc)) from None
        n = r.u32()
        kp = np.frombuffer(r.take(20 * n), dtype="<f4").reshape(n, 5)
        desc = np.frombuffer(r.take(4 * DESCRIPTOR_SIZE * n), dtype="<f4").reshape(n, DESCRIPTOR_SIZE)
        keypoints = [Keypoint(*map(float, row)) for row in kp]
        feats = FeatureSet(image_id, label, keypoints, desc.astype(np.float32), fingerprint=fp)
        records.append((image_id, label, feats))
    flag = r.u8()
    scores = None
    if flag == 1:
        m = r.u32()
        if m != count:
            raise CorruptIndexError(f"score matrix size {m} does not match record count {count}")
        scores = np.frombuffer(r.take(8 * m * m), dtype="<f8").reshape(m, m).astype(np.float64)
    elif flag != 0:
        raise CorruptIndexError(f"bad score-matrix flag {flag}")
    paths_flag = r.u8()
    if paths_flag == 1:
        sources = [r.string() for _ in range(count)]
    elif paths_flag == 0:
        sources = [""] * count
    else:
        raise CorruptIndexError(f"bad source-path flag {paths_flag}")
    records = [IndexRecord(i, src, label, feats) for (i, label, feats), src in zip(records, sources)]
    if r.pos != len(data):
        raise CorruptIndexError(f"{len(data) - r.pos} unexpected trailing bytes")
    try:
        return ImageIndex(records, fp, scores, version)
    except ValueError as exc:
        raise CorruptIndexError(str(exc)) from None


def load_index(path: str | os.PathLike) -> ImageIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    return deserialize_index(data)


def compute_pairwise_scores(index: ImageIndex, cfg: MatchConfig = MatchConfig()) -> np.ndarray:
    """Symmetric matrix of dissimilarity scores with a zero diagonal."""
    n = len(index)
    m = np.zeros((n, n))
    feats = [r.features for r in index.records]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateScoreWarning)
        for i in range(n):
            for j in range(i + 1, n):
                m[i, j] = m[j, i] = compare(feats[i], feats[j], cfg).score
    return m


def check_fingerprint(index: ImageIndex, q: FeatureSet) -> None:
    if q.fingerprint is not None and q.fingerprint != index.fingerprint:
        raise ConfigMismatchError(
            f"query {q.image_id!r} was extracted with config {q.fingerprint.hex()[:12]}, "
            f"index uses {index.fingerprint.hex()[:12]}")


def rank(index: ImageIndex, q: FeatureSet, cfg: MatchConfig = MatchConfig(),
         exclude_id: str | None = None) -> list[QueryHit]:
    check_fingerprint(index, q)
    hits = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateScoreWarning)
        for rec in index.records:
            if rec.image_id == exclude_id:
                continue
            hits.append(QueryHit(rec.image_id, rec.label, compare(q, rec.features, cfg).score))
    hits.sort(key=lambda h: (h.score, h.image_id))
    return hits


def query(index: ImageIndex, q: FeatureSet, k: int = 5, cfg: MatchConfig = MatchConfig()) -> list[QueryHit]:
    """Top-``k`` records by ascending dissimilarity; ties by image id."""
    if len(index) == 0:
        raise DatasetError("cannot query an empty index")
    return rank(index, q, cfg)[:max(k, 0)]
