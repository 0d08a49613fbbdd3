"""Pattern/quality-attribute/tactic knowledge base and design evaluation reports.

Knowledge-base file grammar (UTF-8, one record per line)::

    qa <name> [(<characteristic>)]
    pattern <label>: strength <qa>, <qa>, ...; weakness <qa>, ...
    tactic <name> -> <qa>, <qa>, ... : <description>

Blank lines are ignored. ``#`` starts a comment line; comment lines starting
with ``#:`` that sit directly above a record become that record's provenance
note. Names are case-insensitive and stored lower-case. A strength or
weakness list may be empty (or ``-``). Every pattern label must appear exactly
once, every referenced QA must be declared by a ``qa`` record, and a QA may
not be both a strength and a weakness of one pattern. A ``qa`` record without
a characteristic must itself name one of the ISO/IEC 25010 characteristics.
"""

from __future__ import annotations

import json
import logging
import os
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import KBValidationError, QualityGateError, StageError, UnknownQAError
from .evaluation import classify
from .features import SiftConfig, extract_features
from .imaging import PreprocessConfig, load_image, preprocess, quality_gate
from .index import ImageIndex, config_fingerprint
from .labels import PatternLabel
from .matching import MatchConfig

logger = logging.getLogger(__name__)

ISO_CHARACTERISTICS = (
    "performance-efficiency", "security", "reliability", "availability", "maintainability",
    "usability", "compatibility", "portability", "functional-suitability",
)

_NAME = r"[a-z0-9][a-z0-9 /_.-]*"
_QA_RE = re.compile(rf"^qa\s+({_NAME}?)\s*(?:\(\s*({_NAME}?)\s*\))?\s*$")
_PATTERN_RE = re.compile(r"^pattern\s+([a-z0-9-]+)\s*:\s*strength\b(.*?);\s*weakness\b(.*)$")
_TACTIC_RE = re.compile(r"^tactic\s+(.+?)\s*->\s*(.+?)\s*:\s*(.*)$")


@dataclass(frozen=True)
class QualityAttribute:
    name: str
    characteristic: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Tactic:
    name: str
    targets: tuple[str, ...]
    description: str
    provenance: str = ""


@dataclass(frozen=True)
class PatternEntry:
    label: PatternLabel
    strengths: tuple[str, ...]
    weaknesses: tuple[str, ...]
    provenance: str = ""


@dataclass
class KnowledgeBase:
    qualities: dict[str, QualityAttribute]
    patterns: dict[PatternLabel, PatternEntry]
    tactics: list[Tactic]
    source: str = ""

    def qa(self, name: str | QualityAttribute) -> QualityAttribute:
        key = str(name).strip().lower()
        try:
            return self.qualities[key]
        except KeyError:
            raise UnknownQAError(f"unknown quality attribute {key!r}") from None

    def summary(self) -> str:
        return f"{len(self.patterns)} patterns, {len(self.tactics)} tactics, {len(self.qualities)} quality attributes"


def _split_list(text: str) -> list[str]:
    text = text.strip()
    if text in ("", "-"):
        return []
    return [t.strip().lower() for t in text.split(",")]


def parse_kb(text: str, source: str = "<string>") -> KnowledgeBase:
    """Parse and validate KB text, collecting every violation before raising."""
    errors: list[str] = []
    qualities: dict[str, QualityAttribute] = {}
    raw_patterns: list[tuple[int, str, list[str], list[str], str]] = []
    raw_tactics: list[tuple[int, str, list[str], str, str]] = []
    note: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            note = []
            continue
        if line.startswith("#"):
            if line.startswith("#:"):
                note.append(line[2:].strip())
            continue
        provenance, note = " ".join(note), []
        where = f"line {lineno}"
        lower = line.lower()
        if lower.startswith("qa ") or lower == "qa":
            m = _QA_RE.match(lower)
            if not m or not m.group(1):
                errors.append(f"{where}: malformed qa record: {line!r}")
                continue
            name, parent = m.group(1).strip(), (m.group(2) or "").strip()
            if name in qualities:
                errors.append(f"{where}: duplicate qa {name!r}")
                continue
            if parent:
                if parent not in ISO_CHARACTERISTICS:
                    errors.append(f"{where}: qa {name!r} refers to unknown characteristic {parent!r}")
                    continue
            elif name not in ISO_CHARACTERISTICS:
                errors.append(f"{where}: qa {name!r} is not a quality characteristic and names no parent")
                continue
            qualities[name] = QualityAttribute(name, parent or name)
        elif lower.startswith("pattern "):
            m = _PATTERN_RE.match(lower)
            if not m:
                errors.append(f"{where}: malformed pattern record: {line!r}")
                continue
            raw_patterns.append((lineno, m.group(1), _split_list(m.group(2)), _split_list(m.group(3)), provenance))
        elif lower.startswith("tactic "):
            m = _TACTIC_RE.match(line)
            if not m:
                errors.append(f"{where}: malformed tactic record: {line!r}")
                continue
            raw_tactics.append((lineno, m.group(1).strip().lower(), _split_list(m.group(2)),
                                m.group(3).strip(), provenance))
        else:
            errors.append(f"{where}: unknown record kind: {line!r}")

    def check_qas(names: list[str], where: str) -> None:
        for n in names:
            if not n:
                errors.append(f"{where}: empty quality attribute name")
            elif n not in qualities:
                errors.append(f"{where}: unknown quality attribute {n!r}")

    patterns: dict[PatternLabel, PatternEntry] = {}
    for lineno, label_text, strengths, weaknesses, prov in raw_patterns:
        where = f"line {lineno}"
        try:
            label = PatternLabel.parse(label_text)
        except ValueError:
            errors.append(f"{where}: unknown pattern {label_text!r}")
            continue
        if label in patterns:
            errors.append(f"{where}: duplicate pattern {label.value!r}")
            continue
        check_qas(strengths, f"{where} ({label.value})")
        check_qas(weaknesses, f"{where} ({label.value})")
        for dup in sorted({q for q in strengths if strengths.count(q) > 1}
                          | {q for q in weaknesses if weaknesses.count(q) > 1}):
            errors.append(f"{where}: {label.value} lists {dup!r} twice")
        for both in [q for q in strengths if q in weaknesses]:
            errors.append(f"{where}: polarity conflict: {label.value} lists {both!r} as strength and weakness")
        patterns[label] = PatternEntry(label, tuple(dict.fromkeys(strengths)),
                                       tuple(dict.fromkeys(weaknesses)), prov)
    for label in PatternLabel:
        if label not in patterns:
            errors.append(f"missing pattern entry {label.value!r}")

    tactics: list[Tactic] = []
    seen_tactics: set[str] = set()
    for lineno, name, targets, desc, prov in raw_tactics:
        where = f"line {lineno}"
        if name in seen_tactics:
            errors.append(f"{where}: duplicate tactic {name!r}")
            continue
        seen_tactics.add(name)
        if not targets:
            errors.append(f"{where}: tactic {name!r} targets no quality attribute")
        check_qas(targets, f"{where} (tactic {name})")
        tactics.append(Tactic(name, tuple(dict.fromkeys(targets)), desc, prov))

    if errors:
        raise KBValidationError([f"{source}: {e}" for e in errors])
    ordered = {label: patterns[label] for label in PatternLabel}
    return KnowledgeBase(qualities, ordered, tactics, source)


def load_kb(path: str | os.PathLike) -> KnowledgeBase:
    """Read and validate a KB file. I/O failures surface as ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_kb(text, str(path))


def seed_kb_path() -> Path:
    return Path(str(resources.files("archeval") / "data" / "seed_kb.txt"))


def load_seed_kb() -> KnowledgeBase:
    return load_kb(seed_kb_path())


def qas_for_pattern(kb: KnowledgeBase, pattern: PatternLabel) -> tuple[list[QualityAttribute], list[QualityAttribute]]:
    entry = kb.patterns[pattern]
    return [kb.qualities[q] for q in entry.strengths], [kb.qualities[q] for q in entry.weaknesses]


def tactics_for_qa(kb: KnowledgeBase, qa: str | QualityAttribute) -> list[Tactic]:
    name = kb.qa(qa).name
    return [t for t in kb.tactics if name in t.targets]


@dataclass
class EvidenceItem:
    image_id: str
    label: str
    score: float


@dataclass
class EvaluationReport:
    query_id: str
    pattern: str
    score: float
    evidence: list[EvidenceItem]
    strengths: list[str]
    weaknesses: list[str]
    tactics: dict[str, list[str]]
    low_confidence: bool
    confidence_threshold: float
    requested_qas: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def candidate_patterns(self) -> list[str]:
        """Distinct labels among the evidence, rank-1 first."""
        return list(dict.fromkeys(e.label for e in self.evidence))

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "pattern": self.pattern,
            "score": self.score,
            "evidence": [{"image_id": e.image_id, "label": e.label, "score": e.score} for e in self.evidence],
            "strengths": list(self.strengths),
            "weaknesses": list(self.weaknesses),
            "tactics": {k: list(v) for k, v in self.tactics.items()},
            "low_confidence": self.low_confidence,
            "confidence_threshold": self.confidence_threshold,
            "requested_qas": list(self.requested_qas),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            query_id=d["query_id"], pattern=d["pattern"], score=float(d["score"]),
            evidence=[EvidenceItem(e["image_id"], e["label"], float(e["score"])) for e in d["evidence"]],
            strengths=list(d["strengths"]), weaknesses=list(d["weaknesses"]),
            tactics={k: list(v) for k, v in d["tactics"].items()},
            low_confidence=bool(d["low_confidence"]), confidence_threshold=float(d["confidence_threshold"]),
            requested_qas=list(d.get("requested_qas", [])), notes=list(d.get("notes", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        out = []
        if self.low_confidence:
            out.append(f"*** LOW CONFIDENCE: rank-1 dissimilarity {self.score:.4f} "
                       f"exceeds threshold {self.confidence_threshold:.2f} ***")
        out.append(f"image:     {self.query_id}")
        out.append(f"pattern:   {self.pattern} (rank-1 dissimilarity {self.score:.4f})")
        if len(self.candidate_patterns) > 1:
            out.append(f"also near: {', '.join(self.candidate_patterns[1:])}")
        out.append("evidence:")
        for i, e in enumerate(self.evidence, 1):
            out.append(f"  {i}. {e.image_id}  [{e.label}]  {e.score:.4f}")
        out.append(f"strengths: {', '.join(self.strengths) or 'none recorded'}")
        out.append(f"weaknesses: {', '.join(self.weaknesses) or 'no weaknesses recorded'}")
        if self.tactics:
            out.append("recommended tactics:")
            for qa, names in self.tactics.items():
                out.append(f"  {qa}: {', '.join(names) if names else '(no tactic recorded)'}")
        for n in self.notes:
            out.append(f"note: {n}")
        return "\n".join(out)


DEFAULT_CONFIDENCE_THRESHOLD = 0.9


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def evaluate_design(kb: KnowledgeBase, index: ImageIndex, image_path: str | os.PathLike,
                    pre: PreprocessConfig = PreprocessConfig(), sift: SiftConfig = SiftConfig(),
                    match: MatchConfig = MatchConfig(), *, top_k: int = 5,
                    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
                    requested_qas: list[str] = ()) -> EvaluationReport:
    """Classify a design image and attach its quality-attribute profile.

    Failures are re-raised as :class:`StageError` naming the stage
    (load, quality-gate, preprocess, features, classify, knowledge).
    """
    notes: list[str] = []
    raster = _stage("load", load_image, image_path)
    gate = quality_gate(raster, pre)
    if not gate.accepted:
        raise StageError("quality-gate", QualityGateError(gate.reason))
    if gate.warning:
        notes.append(gate.warning)
    gray = _stage("preprocess", preprocess, raster, pre)
    query_id = Path(image_path).name
    feats = _stage("features", extract_features, gray, sift, query_id, None,
                   fingerprint=config_fingerprint(pre, sift))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = _stage("classify", classify, index, feats, match, top_k)

    def assemble():
        strengths, weaknesses = qas_for_pattern(kb, result.label)
        wanted = [kb.qa(q).name for q in requested_qas]
        tactics: dict[str, list[str]] = {}
        for qa in dict.fromkeys([w.name for w in weaknesses] + wanted):
            tactics[qa] = [t.name for t in tactics_for_qa(kb, qa)]
        return strengths, weaknesses, wanted, tactics

    strengths, weaknesses, wanted, tactics = _stage("knowledge", assemble)
    if not weaknesses:
        notes.append(f"no weaknesses recorded for {result.label.value}")
    if len(feats) == 0:
        notes.append("query image produced no keypoints")
    low = result.low_confidence or result.score > confidence_threshold
    return EvaluationReport(
        query_id=query_id,
        pattern=result.label.value,
        score=result.score,
        evidence=[EvidenceItem(h.image_id, h.label.value, h.score) for h in result.evidence],
        strengths=[q.name for q in strengths],
        weaknesses=[q.name for q in weaknesses],
        tactics=tactics,
        low_confidence=low,
        confidence_threshold=confidence_threshold,
        requested_qas=wanted,
        notes=notes,
    )
