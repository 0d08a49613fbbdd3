"""Rank-1 classification, recognition rates and score distributions."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, DegenerateIndexError
from .features import FeatureSet
from .index import ImageIndex, QueryHit, compute_pairwise_scores, rank
from .labels import PatternLabel
from .matching import MatchConfig

logger = logging.getLogger(__name__)

PAIR_POLICY = "ordered"
DEFAULT_SAMPLE_CAP = 200


class LowConfidenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Classification:
    label: PatternLabel
    score: float
    evidence: list[QueryHit]
    low_confidence: bool = False

    @property
    def evidence_labels(self) -> list[PatternLabel]:
        """Distinct labels among the evidence, in rank order."""
        seen: list[PatternLabel] = []
        for hit in self.evidence:
            if hit.label not in seen:
                seen.append(hit.label)
        return seen


def classify(index: ImageIndex, q: FeatureSet, cfg: MatchConfig = MatchConfig(), k: int = 5) -> Classification:
    """Label of the least dissimilar record, never counting ``q`` itself."""
    if len(index) == 0:
        raise DatasetError("cannot classify against an empty index")
    hits = rank(index, q, cfg, exclude_id=q.image_id)
    if not hits:
        raise DatasetError(f"index holds no record other than {q.image_id!r}")
    best = hits[0]
    low = len(q) == 0
    if low:
        warnings.warn(f"query {q.image_id!r} has no keypoints; rank-1 label carries no evidence",
                      LowConfidenceWarning, stacklevel=2)
    return Classification(best.label, best.score, hits[:max(k, 1)], low)


@dataclass
class ClassCrr:
    n: int
    x: int

    @property
    def crr(self) -> float:
        return 100.0 * self.x / self.n if self.n else 0.0


@dataclass
class CrrReport:
    n: int
    x: int
    crr: float
    per_class: dict[PatternLabel, ClassCrr]
    labels: list[PatternLabel]
    confusion: np.ndarray  # rows: true label, cols: predicted label
    predictions: list[tuple[str, PatternLabel, PatternLabel, str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "x": self.x, "crr": self.crr,
            "labels": [str(l) for l in self.labels],
            "per_class": [{"label": str(l), "n": c.n, "x": c.x, "crr": c.crr} for l, c in self.per_class.items()],
            "confusion": self.confusion.tolist(),
            "predictions": [{"image_id": i, "true": str(t), "predicted": str(p), "match": m, "score": s}
                            for i, t, p, m, s in self.predictions],
        }

    def to_text(self) -> str:
        lines = [f"CRR {self.crr:.2f}% ({self.x}/{self.n} correct at rank 1)", "per class:"]
        width = max(len(str(l)) for l in self.labels)
        for label, c in self.per_class.items():
            lines.append(f"  {str(label):<{width}}  {c.x:>5}/{c.n:<5} {c.crr:6.2f}%")
        lines.append("confusion (rows true, columns predicted):")
        for label, row in zip(self.labels, self.confusion):
            lines.append(f"  {str(label):<{width}}  " + " ".join(f"{v:4d}" for v in row))
        return "\n".join(lines)


def _scores_for(index: ImageIndex, cfg: MatchConfig, scores: np.ndarray | None) -> np.ndarray:
    if scores is not None:
        return scores
    if index.scores is not None:
        return index.scores
    return compute_pairwise_scores(index, cfg)


def _rank1(scores: np.ndarray, ids: list[str]) -> np.ndarray:
    """Index of each row's best non-self match: lowest score, then lowest id."""
    n = scores.shape[0]
    id_rank = np.argsort(np.argsort(np.array(ids, dtype=object), kind="stable"), kind="stable")
    best = np.empty(n, dtype=int)
    for i in range(n):
        row = scores[i].copy()
        row[i] = np.inf
        cand = np.flatnonzero(row == row.min())
        best[i] = cand[np.argmin(id_rank[cand])]
    return best


def crr_from_scores(scores: np.ndarray, labels: list[PatternLabel], ids: list[str]) -> CrrReport:
    n = len(labels)
    if n < 2:
        raise DegenerateIndexError("leave-one-out evaluation needs at least 2 records")
    present = sorted(set(labels), key=lambda l: l.ordinal)
    if len(present) < 2:
        raise DegenerateIndexError(f"index holds a single label ({present[0]}); CRR would trivially be 100%")
    pos = {l: i for i, l in enumerate(present)}
    confusion = np.zeros((len(present), len(present)), dtype=int)
    best = _rank1(scores, ids)
    preds = []
    for i, j in enumerate(best):
        confusion[pos[labels[i]], pos[labels[j]]] += 1
        preds.append((ids[i], labels[i], labels[j], ids[j], float(scores[i, j])))
    per_class = {l: ClassCrr(int(confusion[pos[l]].sum()), int(confusion[pos[l], pos[l]])) for l in present}
    x = int(np.trace(confusion))
    return CrrReport(n, x, 100.0 * x / n, per_class, present, confusion, preds)


def leave_one_out_crr(index: ImageIndex, cfg: MatchConfig = MatchConfig(),
                      scores: np.ndarray | None = None) -> CrrReport:
    """Classify every record against all others and tally rank-1 hits."""
    if len(index) < 2:
        raise DegenerateIndexError("leave-one-out evaluation needs at least 2 records")
    if len(set(index.labels)) < 2:
        raise DegenerateIndexError("index holds a single label; CRR would trivially be 100%")
    return crr_from_scores(_scores_for(index, cfg, scores), index.labels, index.ids)


@dataclass
class ScoreDistributions:
    genuine: np.ndarray
    imposter: np.ndarray
    policy: str = PAIR_POLICY

    @property
    def genuine_count(self) -> int:
        return int(self.genuine.size)

    @property
    def imposter_count(self) -> int:
        return int(self.imposter.size)

    @staticmethod
    def _stats(a: np.ndarray) -> dict:
        if a.size == 0:
            return {"count": 0, "mean": None, "median": None}
        return {"count": int(a.size), "mean": float(a.mean()), "median": float(np.median(a))}

    def to_dict(self) -> dict:
        return {"policy": self.policy, "genuine": self._stats(self.genuine),
                "imposter": self._stats(self.imposter),
                "total": self.genuine_count + self.imposter_count}

    def to_text(self) -> str:
        d = self.to_dict()
        out = [f"pair policy: {self.policy} (each image against all remaining images)"]
        for kind in ("genuine", "imposter"):
            s = d[kind]
            if s["count"]:
                out.append(f"{kind:<9} {s['count']:>10} scores  mean {s['mean']:.4f}  median {s['median']:.4f}")
            else:
                out.append(f"{kind:<9} {0:>10} scores")
        out.append(f"total     {d['total']:>10} scores")
        return "\n".join(out)


def genuine_imposter_split(scores: np.ndarray, labels: list[PatternLabel]) -> ScoreDistributions:
    """Partition off-diagonal entries into same-label and cross-label scores (ordered pairs)."""
    lab = np.array([l.ordinal for l in labels])
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(len(lab), dtype=bool)
    return ScoreDistributions(scores[same & off], scores[~same & off])


@dataclass
class SubsetResult:
    labels: tuple[PatternLabel, ...]
    n: int
    x: int

    @property
    def crr(self) -> float:
        return 100.0 * self.x / self.n


@dataclass
class SubsetCrrCurve:
    per_k: dict[int, list[SubsetResult]]
    seed: int
    sample_cap: int
    sampled: dict[int, bool]

    def summary(self, k: int) -> dict:
        vals = [s.crr for s in self.per_k[k]]
        return {"k": k, "subsets": len(vals), "sampled": self.sampled[k],
                "mean": float(np.mean(vals)), "min": float(np.min(vals)), "max": float(np.max(vals))}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "sample_cap": self.sample_cap,
            "summary": [self.summary(k) for k in sorted(self.per_k)],
            "subsets": [{"k": k, "labels": [str(l) for l in s.labels], "n": s.n, "x": s.x, "crr": s.crr}
                        for k in sorted(self.per_k) for s in self.per_k[k]],
        }

    def to_text(self) -> str:
        lines = ["classes  subsets   mean CRR    min CRR    max CRR"]
        for k in sorted(self.per_k):
            s = self.summary(k)
            tag = "*" if s["sampled"] else " "
            lines.append(f"{k:>7}  {s['subsets']:>6}{tag}  {s['mean']:8.2f}%  {s['min']:8.2f}%  {s['max']:8.2f}%")
        if any(self.sampled.values()):
            lines.append(f"* seeded sample of {self.sample_cap} subsets (seed {self.seed})")
        return "\n".join(lines)


def _choose_subsets(labels: list[PatternLabel], k: int, cap: int, rng: np.random.Generator):
    total = math.comb(len(labels), k)
    combos = itertools.combinations(labels, k)
    if total <= cap:
        return list(combos), False
    picks = set(rng.choice(total, size=cap, replace=False).tolist())
    return [c for i, c in enumerate(combos) if i in picks], True


def class_subset_crr(index: ImageIndex, cfg: MatchConfig = MatchConfig(), seed: int = 0,
                     sample_cap: int = DEFAULT_SAMPLE_CAP, scores: np.ndarray | None = None,
                     ks: list[int] | None = None) -> SubsetCrrCurve:
    """Leave-one-out CRR restricted to k-class subsets for k = 2..K."""
    present = sorted(set(index.labels), key=lambda l: l.ordinal)
    if len(present) < 2:
        raise DegenerateIndexError("subset curve needs at least 2 labels")
    if sample_cap < 1:
        raise ValueError("sample_cap must be >= 1")
    full = _scores_for(index, cfg, scores)
    labels = index.labels
    ids = index.ids
    rng = np.random.default_rng(seed)
    per_k, sampled = {}, {}
    for k in ks or range(2, len(present) + 1):
        subsets, was_sampled = _choose_subsets(present, k, sample_cap, rng)
        results = []
        for subset in subsets:
            keep = [i for i, l in enumerate(labels) if l in subset]
            sub_scores = full[np.ix_(keep, keep)]
            rep = crr_from_scores(sub_scores, [labels[i] for i in keep], [ids[i] for i in keep])
            results.append(SubsetResult(tuple(subset), rep.n, rep.x))
        per_k[k], sampled[k] = results, was_sampled
    return SubsetCrrCurve(per_k, seed, sample_cap, sampled)
