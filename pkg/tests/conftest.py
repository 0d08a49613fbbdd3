import numpy as np
import pytest

from archeval.features import FeatureSet, Keypoint, SiftConfig, extract_features
from archeval.imaging import PreprocessConfig, RasterImage, preprocess
from archeval.index import ImageIndex, IndexRecord, build_index, config_fingerprint
from archeval.labels import PatternLabel
from archeval.synthetic import make_corpus, render_diagram

SIX_LABELS = [PatternLabel.BROKER, PatternLabel.LAYERED, PatternLabel.PIPE_AND_FILTER,
              PatternLabel.CLIENT_SERVER, PatternLabel.MICROSERVICES, PatternLabel.REPOSITORY]


def features_of(pil_image, image_id="q", label=None, pre=PreprocessConfig(), sift=SiftConfig()):
    raster = RasterImage(np.asarray(pil_image))
    return extract_features(preprocess(raster, pre), sift, image_id, label,
                            fingerprint=config_fingerprint(pre, sift))


def token_featureset(image_id, label, tokens, pool):
    """FeatureSet whose descriptors are rows of ``pool`` selected by ``tokens``."""
    kps = [Keypoint(float(10 + i), 20.0, 2.0, 0.0, 0.1) for i in range(len(tokens))]
    return FeatureSet(image_id, label, kps, pool[list(tokens)])


def descriptor_pool(n, seed=0):
    rng = np.random.default_rng(seed)
    pool = rng.random((n, 128)) ** 4
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)
    return pool.astype(np.float32)


def index_from_featuresets(fsets):
    fp = config_fingerprint(PreprocessConfig(), SiftConfig())
    return ImageIndex([IndexRecord(f.image_id, f"/virtual/{f.image_id}", f.label, f) for f in fsets], fp)


def shared_token_index(names, labels, edges, per_image=10):
    """Feature sets where each edge (i, j, k) makes images i and j share k tokens."""
    tokens = {n: [] for n in names}
    nxt = 0
    for a, b, k in edges:
        for _ in range(k):
            tokens[a].append(nxt)
            tokens[b].append(nxt)
            nxt += 1
    for n in names:
        assert len(tokens[n]) <= per_image
        while len(tokens[n]) < per_image:
            tokens[n].append(nxt)
            nxt += 1
    pool = descriptor_pool(nxt, seed=17)
    return index_from_featuresets([token_featureset(n, l, tokens[n], pool) for n, l in zip(names, labels)])


# Two classes of five; rank-1 outcome is fixed by the shared-token edges:
# 7 of 10 correct, confusion [[4, 1], [2, 3]].
HAND_NAMES = [f"A{i}" for i in range(5)] + [f"B{i}" for i in range(5)]
HAND_LABELS = [PatternLabel.BROKER] * 5 + [PatternLabel.LAYERED] * 5
HAND_EDGES = [("A0", "A1", 6), ("A2", "A3", 6), ("A4", "B0", 5), ("B1", "B2", 6), ("B3", "A2", 4), ("B4", "B3", 3)]


@pytest.fixture(scope="session")
def micro_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("micro")
    make_corpus(root, [PatternLabel.PIPE_AND_FILTER, PatternLabel.LAYERED], per_class=5, seed=3)
    return root


@pytest.fixture(scope="session")
def micro_index(micro_corpus):
    return build_index(micro_corpus)


@pytest.fixture(scope="session")
def six_class_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("six")
    make_corpus(root, SIX_LABELS, per_class=5, seed=1)
    return root


@pytest.fixture(scope="session")
def six_class_index(six_class_corpus):
    return build_index(six_class_corpus)


@pytest.fixture(scope="session")
def diagram_image():
    return render_diagram(PatternLabel.BROKER, np.random.default_rng(5))
