"""Descriptor correspondence and the count-based dissimilarity score."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .features import FeatureSet


class DegenerateScoreWarning(UserWarning):
    """One of the feature sets being compared has no keypoints."""


@dataclass(frozen=True)
class MatchConfig:
    ratio_threshold: float = 0.75
    require_mutual: bool = True

    def __post_init__(self):
        if not 0 < self.ratio_threshold <= 1:
            raise ValueError("ratio_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class Correspondence:
    index_a: int
    index_b: int
    distance: float


@dataclass(frozen=True)
class MatchResult:
    n_a: int
    n_b: int
    n_ab: int
    score: float
    correspondences: list[Correspondence] = field(default_factory=list)
    degenerate: bool = False


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(sq, 0.0))


def _two_nearest(dist: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest index, nearest distance, second-nearest distance per row.

    Ties go to the lowest column index (stable sort). With a single column
    the second distance is +inf.
    """
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(dist.shape[0])
    nn = order[:, 0]
    d1 = dist[rows, nn]
    d2 = dist[rows, order[:, 1]] if dist.shape[1] > 1 else np.full(dist.shape[0], np.inf)
    return nn, d1, d2


def _ratio_ok(d1: np.ndarray, d2: np.ndarray, threshold: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        # d1 < t * d2 avoids 0/0 when both neighbours coincide
        return d1 < threshold * d2


def match_descriptors(a: FeatureSet, b: FeatureSet, cfg: MatchConfig = MatchConfig()) -> list[Correspondence]:
    """One-to-one correspondences between ``a`` and ``b``.

    Each descriptor in ``a`` proposes its nearest neighbour in ``b`` if it
    passes the ratio test. In mutual mode the proposal must also be the
    reverse nearest neighbour and pass the reverse ratio test, which makes
    the result independent of argument order.
    """
    if len(a) == 0 or len(b) == 0:
        return []
    dist = _pairwise_distances(a.descriptors, b.descriptors)
    nn_ab, d1_ab, d2_ab = _two_nearest(dist)
    ok_ab = _ratio_ok(d1_ab, d2_ab, cfg.ratio_threshold)

    out: list[Correspondence] = []
    if cfg.require_mutual:
        nn_ba, d1_ba, d2_ba = _two_nearest(dist.T)
        ok_ba = _ratio_ok(d1_ba, d2_ba, cfg.ratio_threshold)
        for i in np.flatnonzero(ok_ab):
            j = nn_ab[i]
            if nn_ba[j] == i and ok_ba[j]:
                out.append(Correspondence(int(i), int(j), float(dist[i, j])))
        return out

    best: dict[int, int] = {}
    for i in np.flatnonzero(ok_ab):
        j = int(nn_ab[i])
        # keep the closest claimant of each b index; ties keep the lower a index
        if j not in best or dist[i, j] < dist[best[j], j]:
            best[j] = int(i)
    for j, i in sorted(best.items(), key=lambda t: t[1]):
        out.append(Correspondence(i, j, float(dist[i, j])))
    return out


def dissimilarity_score(n_a: int, n_b: int, n_ab: int) -> float:
    """``1 - n_ab / min(n_a, n_b)``; 1.0 with a warning when either set is empty."""
    if min(n_a, n_b, n_ab) < 0:
        raise ContractViolation(f"counts must be non-negative, got ({n_a}, {n_b}, {n_ab})")
    m = min(n_a, n_b)
    if n_ab > m:
        raise ContractViolation(f"n_ab={n_ab} exceeds min(n_a, n_b)={m}")
    if m == 0:
        warnings.warn(f"degenerate comparison: feature set sizes ({n_a}, {n_b})",
                      DegenerateScoreWarning, stacklevel=2)
        return 1.0
    return 1.0 - n_ab / m


def compare(a: FeatureSet, b: FeatureSet, cfg: MatchConfig = MatchConfig()) -> MatchResult:
    corr = match_descriptors(a, b, cfg)
    n_a, n_b = len(a), len(b)
    degenerate = min(n_a, n_b) == 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateScoreWarning)
        score = dissimilarity_score(n_a, n_b, len(corr))
    if degenerate:
        warnings.warn(f"degenerate comparison {a.image_id!r} vs {b.image_id!r}: "
                      f"feature set sizes ({n_a}, {n_b})", DegenerateScoreWarning, stacklevel=2)
    return MatchResult(n_a, n_b, len(corr), score, corr, degenerate)
