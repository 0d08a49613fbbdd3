"""Architecture-diagram pattern recognition and quality-attribute evaluation."""

__version__ = "0.1.0"

from .errors import ArchEvalError  # noqa: E402
from .evaluation import classify, class_subset_crr, genuine_imposter_split, leave_one_out_crr  # noqa: E402
from .features import FeatureSet, Keypoint, SiftConfig, extract_features  # noqa: E402
from .imaging import GrayImage, PreprocessConfig, RasterImage, load_image, preprocess, quality_gate  # noqa: E402
from .index import ImageIndex, build_index, compute_pairwise_scores, load_index, query, save_index  # noqa: E402
from .knowledge import evaluate_design, load_kb, load_seed_kb, qas_for_pattern, tactics_for_qa  # noqa: E402
from .labels import PatternLabel  # noqa: E402
from .matching import MatchConfig, MatchResult, compare, dissimilarity_score, match_descriptors  # noqa: E402

__all__ = [
    "ArchEvalError",
    "FeatureSet",
    "GrayImage",
    "ImageIndex",
    "Keypoint",
    "MatchConfig",
    "MatchResult",
    "PatternLabel",
    "PreprocessConfig",
    "RasterImage",
    "SiftConfig",
    "build_index",
    "class_subset_crr",
    "classify",
    "compare",
    "compute_pairwise_scores",
    "dissimilarity_score",
    "evaluate_design",
    "extract_features",
    "genuine_imposter_split",
    "leave_one_out_crr",
    "load_image",
    "load_index",
    "load_kb",
    "load_seed_kb",
    "match_descriptors",
    "preprocess",
    "qas_for_pattern",
    "quality_gate",
    "query",
    "save_index",
    "tactics_for_qa",
]
