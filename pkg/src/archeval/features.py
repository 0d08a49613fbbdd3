"""Scale-invariant interest points and 128-d gradient descriptors.

Pipeline: Gaussian/DoG pyramid -> 3x3x3 extrema -> sub-pixel refinement with
contrast and edge rejection -> dominant orientations -> 4x4x8 descriptors.
Coordinates and scales of returned keypoints are in the frame of the input
(working-resolution) image.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, maximum_filter, minimum_filter

from .errors import FeatureExtractionError
from .imaging import GrayImage
from .labels import PatternLabel

logger = logging.getLogger(__name__)

DESCRIPTOR_SIZE = 128
DESCRIPTOR_SUPPORT = 16  # samples across the descriptor window
_GRID = 4
_ORI_BINS_DESC = 8
_ORI_BINS_HIST = 36
_ORI_PEAK_RATIO = 0.8
_ORI_SIGMA_FACTOR = 1.5
_ORI_RADIUS_FACTOR = 3.0
_BIN_WIDTH_FACTOR = 3.0  # spatial bin width in units of keypoint sigma
_MAX_REFINE_STEPS = 5


@dataclass(frozen=True)
class SiftConfig:
    octaves: int = 4
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_threshold: float = 10.0
    magnitude_clamp: float = 0.2
    # blur already present in the input image
    assumed_blur: float = 0.5
    duplicate_orientations: bool = True

    def __post_init__(self):
        if self.octaves < 1 or self.scales_per_octave < 1:
            raise ValueError("octaves and scales_per_octave must be >= 1")
        for name in ("base_sigma", "contrast_threshold", "edge_threshold", "magnitude_clamp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 <= self.assumed_blur < self.base_sigma:
            raise ValueError("assumed_blur must be in [0, base_sigma)")


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float
    response: float
    # pyramid bookkeeping; not persisted
    octave: int = field(default=0, compare=False, repr=False)
    layer: int = field(default=1, compare=False, repr=False)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.scale, self.orientation, self.response)


@dataclass(eq=False)
class FeatureSet:
    image_id: str
    label: PatternLabel | None
    keypoints: list[Keypoint]
    descriptors: np.ndarray  # (n, 128) float32
    fingerprint: bytes | None = None

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float32)
        if d.size == 0:
            d = d.reshape(0, DESCRIPTOR_SIZE)
        if d.ndim != 2 or d.shape[1] != DESCRIPTOR_SIZE:
            raise ValueError(f"descriptors must have shape (n, {DESCRIPTOR_SIZE}), got {d.shape}")
        if d.shape[0] != len(self.keypoints):
            raise ValueError("keypoints and descriptors must be parallel")
        self.descriptors = d

    def __len__(self) -> int:
        return len(self.keypoints)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (self.image_id == other.image_id and self.label == other.label
                and self.keypoints == other.keypoints
                and self.descriptors.shape == other.descriptors.shape
                and self.descriptors.tobytes() == other.descriptors.tobytes())


@dataclass
class ScaleSpace:
    """Per-octave Gaussian levels (S+3) and DoG levels (S+2).

    Levels hold mean-centred intensities; DoG and gradients are unaffected by
    the offset and constant inputs give exactly zero responses.
    """

    gaussians: list[np.ndarray]  # each (S+3, h, w)
    dogs: list[np.ndarray]  # each (S+2, h, w)
    config: SiftConfig

    @property
    def sizes(self) -> list[tuple[int, int]]:
        return [g.shape[1:] for g in self.gaussians]

    def level_sigma(self, layer: float) -> float:
        """Blur of a level in its own octave's pixel units."""
        cfg = self.config
        return cfg.base_sigma * 2.0 ** (layer / cfg.scales_per_octave)


def _f32(v: float) -> float:
    return float(np.float32(v))


def build_scale_space(img: GrayImage, cfg: SiftConfig = SiftConfig()) -> ScaleSpace:
    h, w = img.pixels.shape
    if min(h, w) < 2 * DESCRIPTOR_SUPPORT:
        raise FeatureExtractionError(
            f"image {w}x{h} is smaller than twice the descriptor support ({2 * DESCRIPTOR_SUPPORT}px)")
    S = cfg.scales_per_octave
    k = 2.0 ** (1.0 / S)
    sigmas = [cfg.base_sigma * k ** i for i in range(S + 3)]
    increments = [math.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2) for i in range(1, S + 3)]

    base = img.pixels - img.pixels.mean()
    base = gaussian_filter(base, math.sqrt(cfg.base_sigma ** 2 - cfg.assumed_blur ** 2), mode="nearest")
    gaussians, dogs = [], []
    for o in range(cfg.octaves):
        if min(base.shape) < 3:
            break
        levels = [base]
        for inc in increments:
            levels.append(gaussian_filter(levels[-1], inc, mode="nearest"))
        stack = np.stack(levels)
        gaussians.append(stack)
        dogs.append(stack[1:] - stack[:-1])
        nxt = stack[S]
        hh, ww = nxt.shape
        base = nxt[: 2 * (hh // 2): 2, : 2 * (ww // 2): 2]
    return ScaleSpace(gaussians, dogs, cfg)


def _derivatives(dog: np.ndarray, s: int, y: int, x: int):
    c = dog[s, y, x]
    dx = 0.5 * (dog[s, y, x + 1] - dog[s, y, x - 1])
    dy = 0.5 * (dog[s, y + 1, x] - dog[s, y - 1, x])
    ds = 0.5 * (dog[s + 1, y, x] - dog[s - 1, y, x])
    dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * c
    dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * c
    dss = dog[s + 1, y, x] + dog[s - 1, y, x] - 2 * c
    dxy = 0.25 * (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1])
    dxs = 0.25 * (dog[s + 1, y, x + 1] - dog[s + 1, y, x - 1] - dog[s - 1, y, x + 1] + dog[s - 1, y, x - 1])
    dys = 0.25 * (dog[s + 1, y + 1, x] - dog[s + 1, y - 1, x] - dog[s - 1, y + 1, x] + dog[s - 1, y - 1, x])
    grad = np.array([dx, dy, ds])
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    return grad, hess


def _refine(dog: np.ndarray, s: int, y: int, x: int, cfg: SiftConfig):
    """Quadratic sub-pixel refinement. Returns (s, y, x, offset, value) or None."""
    n_layers, h, w = dog.shape
    for _ in range(_MAX_REFINE_STEPS):
        grad, hess = _derivatives(dog, s, y, x)
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            break
        x += int(round(offset[0]))
        y += int(round(offset[1]))
        s += int(round(offset[2]))
        if not (1 <= s <= n_layers - 2 and 1 <= y <= h - 2 and 1 <= x <= w - 2):
            return None
    else:
        return None

    value = dog[s, y, x] + 0.5 * float(grad @ offset)
    if abs(value) < cfg.contrast_threshold:
        return None
    dxx, dyy, dxy = hess[0, 0], hess[1, 1], hess[0, 1]
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    r = cfg.edge_threshold
    if det <= 0 or tr * tr * r >= (r + 1) ** 2 * det:
        return None
    return s, y, x, offset, value


def _gradients(level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(level)
    gy = np.zeros_like(level)
    gx[:, 1:-1] = 0.5 * (level[:, 2:] - level[:, :-2])
    gy[1:-1, :] = 0.5 * (level[2:, :] - level[:-2, :])
    return gx, gy


def _orientations(gx, gy, xo: float, yo: float, sigma_oct: float, cfg: SiftConfig) -> list[float]:
    h, w = gx.shape
    radius = int(round(_ORI_RADIUS_FACTOR * _ORI_SIGMA_FACTOR * sigma_oct))
    cx, cy = int(round(xo)), int(round(yo))
    x0, x1 = max(cx - radius, 1), min(cx + radius, w - 2)
    y0, y1 = max(cy - radius, 1), min(cy + radius, h - 2)
    if x0 > x1 or y0 > y1:
        return []
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    px, py = gx[y0:y1 + 1, x0:x1 + 1], gy[y0:y1 + 1, x0:x1 + 1]
    mag = np.hypot(px, py)
    weight = np.exp(-((xs - xo) ** 2 + (ys - yo) ** 2) / (2 * (_ORI_SIGMA_FACTOR * sigma_oct) ** 2))
    ang = np.mod(np.arctan2(py, px), 2 * np.pi)
    bins = np.floor(ang * _ORI_BINS_HIST / (2 * np.pi)).astype(int) % _ORI_BINS_HIST
    hist = np.bincount(bins.ravel(), (mag * weight).ravel(), minlength=_ORI_BINS_HIST)
    # circular [1 4 6 4 1] smoothing
    hist = (6 * hist + 4 * (np.roll(hist, 1) + np.roll(hist, -1))
            + np.roll(hist, 2) + np.roll(hist, -2)) / 16.0
    peak = hist.max()
    if peak <= 0:
        return []
    left, right = np.roll(hist, 1), np.roll(hist, -1)
    candidates = np.flatnonzero((hist > left) & (hist > right) & (hist >= _ORI_PEAK_RATIO * peak))
    if not cfg.duplicate_orientations:
        candidates = candidates[np.argsort(-hist[candidates], kind="stable")[:1]]
    out = []
    for b in candidates:
        l, c, r = left[b], hist[b], right[b]
        shift = 0.5 * (l - r) / (l - 2 * c + r)
        angle = (b + 0.5 + shift) * 2 * np.pi / _ORI_BINS_HIST
        out.append(float(np.mod(angle, 2 * np.pi)))
    return out


def detect_keypoints(space: ScaleSpace, cfg: SiftConfig | None = None) -> list[Keypoint]:
    cfg = cfg or space.config
    prefilter = 0.5 * cfg.contrast_threshold
    keypoints: list[Keypoint] = []
    seen: set[tuple] = set()
    for o, (gauss, dog) in enumerate(zip(space.gaussians, space.dogs)):
        _, h, w = dog.shape
        if h < 3 or w < 3:
            continue
        footprint = np.ones((3, 3, 3), bool)
        is_max = (dog == maximum_filter(dog, footprint=footprint, mode="nearest")) & (dog > prefilter)
        is_min = (dog == minimum_filter(dog, footprint=footprint, mode="nearest")) & (dog < -prefilter)
        cand = is_max | is_min
        cand[0] = cand[-1] = False
        cand[:, [0, -1], :] = False
        cand[:, :, [0, -1]] = False
        grads = {}
        for s, y, x in zip(*np.nonzero(cand)):
            refined = _refine(dog, int(s), int(y), int(x), cfg)
            if refined is None:
                continue
            rs, ry, rx, off, value = refined
            key = (o, rs, ry, rx)
            if key in seen:
                continue
            seen.add(key)
            xo, yo = rx + off[0], ry + off[1]
            if not (0 <= xo <= w - 1 and 0 <= yo <= h - 1):
                continue
            sigma_oct = space.level_sigma(rs + off[2])
            if rs not in grads:
                grads[rs] = _gradients(gauss[rs])
            gx, gy = grads[rs]
            scale = 2.0 ** o
            for theta in _orientations(gx, gy, xo, yo, sigma_oct, cfg):
                keypoints.append(Keypoint(
                    x=_f32(xo * scale), y=_f32(yo * scale), scale=_f32(sigma_oct * scale),
                    orientation=_f32(theta) % _f32(2 * np.pi), response=_f32(abs(value)),
                    octave=o, layer=rs))
    return keypoints


def _sample_offsets() -> tuple[np.ndarray, np.ndarray]:
    # sample centres in units of the descriptor bin width, spanning [-2, 2)
    c = (np.arange(DESCRIPTOR_SUPPORT) + 0.5) / (DESCRIPTOR_SUPPORT / _GRID) - _GRID / 2
    v, u = np.meshgrid(c, c, indexing="ij")
    return u.ravel(), v.ravel()


_U, _V = _sample_offsets()
# Gaussian window with sigma = half the window width (window width = _GRID bins)
_SPATIAL_WEIGHT = np.exp(-(_U ** 2 + _V ** 2) / (2 * (_GRID / 2) ** 2))


def _descriptor(gx, gy, kp: Keypoint, sigma_oct: float, xo: float, yo: float, clamp: float):
    h, w = gx.shape
    bin_w = _BIN_WIDTH_FACTOR * sigma_oct
    cos_t, sin_t = math.cos(kp.orientation), math.sin(kp.orientation)
    half = _GRID / 2 * bin_w
    corners = np.array([[-half, -half], [half, -half], [-half, half], [half, half]])
    cxs = xo + cos_t * corners[:, 0] - sin_t * corners[:, 1]
    cys = yo + sin_t * corners[:, 0] + cos_t * corners[:, 1]
    if cxs.min() < 1 or cys.min() < 1 or cxs.max() > w - 2 or cys.max() > h - 2:
        return None

    su, sv = _U * bin_w, _V * bin_w
    xs = xo + cos_t * su - sin_t * sv
    ys = yo + sin_t * su + cos_t * sv
    coords = np.vstack([ys, xs])
    sgx = map_coordinates(gx, coords, order=1, mode="nearest")
    sgy = map_coordinates(gy, coords, order=1, mode="nearest")
    # gradient expressed in the keypoint frame
    ru = cos_t * sgx + sin_t * sgy
    rv = -sin_t * sgx + cos_t * sgy
    mag = np.hypot(ru, rv) * _SPATIAL_WEIGHT
    ang = np.mod(np.arctan2(rv, ru), 2 * np.pi)

    rb = _V + _GRID / 2 - 0.5
    cb = _U + _GRID / 2 - 0.5
    ob = ang * _ORI_BINS_DESC / (2 * np.pi)
    r0, c0, o0 = np.floor(rb).astype(int), np.floor(cb).astype(int), np.floor(ob).astype(int)
    dr, dc, do = rb - r0, cb - c0, ob - o0

    hist = np.zeros((_GRID, _GRID, _ORI_BINS_DESC))
    for i in (0, 1):
        wr = dr if i else 1 - dr
        rr = r0 + i
        for j in (0, 1):
            wc = dc if j else 1 - dc
            cc = c0 + j
            ok = (rr >= 0) & (rr < _GRID) & (cc >= 0) & (cc < _GRID)
            for m in (0, 1):
                wo = do if m else 1 - do
                oo = (o0 + m) % _ORI_BINS_DESC
                np.add.at(hist, (rr[ok], cc[ok], oo[ok]), (mag * wr * wc * wo)[ok])
    vec = hist.ravel()
    norm = np.linalg.norm(vec)
    if norm <= 1e-12:
        return None
    vec = np.minimum(vec / norm, clamp)
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32)


def compute_descriptors(space: ScaleSpace, keypoints: list[Keypoint], cfg: SiftConfig | None = None):
    """Descriptors for ``keypoints``; keypoints whose window leaves the image are dropped.

    Returns the surviving keypoints and an (n, 128) float32 array.
    """
    cfg = cfg or space.config
    kept, descs = [], []
    grads: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    for kp in keypoints:
        o, layer = kp.octave, kp.layer
        if o >= len(space.gaussians):
            continue
        key = (o, layer)
        if key not in grads:
            grads[key] = _gradients(space.gaussians[o][layer])
        gx, gy = grads[key]
        f = 2.0 ** o
        d = _descriptor(gx, gy, kp, kp.scale / f, kp.x / f, kp.y / f, cfg.magnitude_clamp)
        if d is None:
            continue
        kept.append(kp)
        descs.append(d)
    arr = np.vstack(descs) if descs else np.zeros((0, DESCRIPTOR_SIZE), np.float32)
    return kept, arr


def extract_features(img: GrayImage, cfg: SiftConfig = SiftConfig(), image_id: str = "",
                     label: PatternLabel | None = None, fingerprint: bytes | None = None) -> FeatureSet:
    space = build_scale_space(img, cfg)
    kps = detect_keypoints(space, cfg)
    kps, descs = compute_descriptors(space, kps, cfg)
    logger.debug("%s: %d keypoints", image_id, len(kps))
    return FeatureSet(image_id=image_id, label=label, keypoints=kps, descriptors=descs,
                      fingerprint=fingerprint)
