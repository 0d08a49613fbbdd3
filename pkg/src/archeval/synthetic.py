"""Synthetic block-and-line diagrams for tests, demos and smoke corpora.

Each pattern label gets its own component layout and its own vocabulary of
label glyphs (small seeded bitmaps standing in for text labels). Images of
the same label share glyphs; images of different labels do not.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .labels import PatternLabel

GLYPH_CELLS = 5
VOCABULARY_SIZE = 10
_VOCAB_SEED = 20_350


def glyph_vocabulary(label: PatternLabel, size: int = VOCABULARY_SIZE) -> list[np.ndarray]:
    """Deterministic label-specific set of 5x5 binary glyphs."""
    rng = np.random.default_rng([_VOCAB_SEED, label.ordinal])
    glyphs = []
    while len(glyphs) < size:
        g = rng.random((GLYPH_CELLS, GLYPH_CELLS)) < 0.45
        # reject near-empty, near-full, and rotationally symmetric glyphs
        if not 8 <= g.sum() <= 17:
            continue
        if any(np.array_equal(g, np.rot90(g, k)) for k in (1, 2)):
            continue
        glyphs.append(g)
    return glyphs


_LO, _MID, _HI = 0.25, 0.5, 0.75


def _layout(label: PatternLabel, rng: np.random.Generator):
    """Component centres (unit coordinates) and edges for one diagram."""
    L = PatternLabel
    layouts = {
        L.LAYERED: ([(_MID, _LO), (_MID, _MID), (_MID, _HI)], [(0, 1), (1, 2)]),
        L.PIPE_AND_FILTER: ([(_LO, _MID), (_MID, _MID), (_HI, _MID)], [(0, 1), (1, 2)]),
        L.CLIENT_SERVER: ([(_MID, _LO), (_LO, _HI), (_HI, _HI)], [(1, 0), (2, 0)]),
        L.MODEL_VIEW_CONTROLLER: ([(_LO, _LO), (_HI, _LO), (_MID, _HI)], [(0, 1), (1, 2), (2, 0)]),
        L.BROKER: ([(_MID, _MID), (_LO, _LO), (_HI, _HI)], [(1, 0), (0, 2)]),
        L.REPOSITORY: ([(_MID, _HI), (_LO, _LO), (_HI, _LO)], [(1, 0), (2, 0)]),
        L.MICROKERNEL: ([(_MID, _MID), (_LO, _HI), (_HI, _LO)], [(1, 0), (2, 0)]),
        L.EVENT_BUS: ([(_LO, _MID), (_HI, _LO), (_HI, _HI)], [(0, 1), (0, 2)]),
        L.PEER_TO_PEER: ([(_LO, _LO), (_HI, _MID), (_LO, _HI)], [(0, 1), (1, 2), (2, 0)]),
        L.PRESENTATION_ABSTRACTION_CONTROLLER: ([(_MID, _LO), (_LO, _HI), (_MID, _HI)], [(0, 1), (0, 2)]),
        L.MICROSERVICES: ([(_LO, _LO), (_HI, _LO), (_LO, _HI), (_HI, _HI)], [(0, 1), (0, 2), (0, 3)]),
        L.SPACE_BASED: ([(_LO, _LO), (_MID, _MID), (_HI, _HI), (_HI, _LO)], [(0, 1), (1, 2), (1, 3)]),
        L.REST: ([(_LO, _MID), (_HI, _MID), (_MID, _LO)], [(0, 1), (2, 1)]),
        L.PUBLISHER_SUBSCRIBER: ([(_MID, _LO), (_LO, _MID), (_MID, _HI), (_HI, _MID)], [(0, 1), (0, 2), (0, 3)]),
    }
    centres, edges = layouts[label]
    jitter = rng.uniform(-0.02, 0.02, size=(len(centres), 2))
    return [(x + dx, y + dy) for (x, y), (dx, dy) in zip(centres, jitter)], edges


def render_diagram(label: PatternLabel, rng: np.random.Generator, size: int = 400,
                   rgb: bool = True) -> Image.Image:
    """Draw one diagram of ``label``: boxes carrying glyphs, joined by connectors."""
    vocab = glyph_vocabulary(label)
    centres, edges = _layout(label, rng)
    picks = rng.choice(len(vocab), size=len(centres), replace=False)
    img = Image.new("RGB" if rgb else "L", (size, size), (255, 255, 255) if rgb else 255)
    draw = ImageDraw.Draw(img)
    line_w = max(1, size // 100)
    cell = size * 0.04
    half = GLYPH_CELLS * cell / 2 + size * 0.015

    ink = (20, 20, 20) if rgb else 20
    for a, b in edges:
        (x0, y0), (x1, y1) = centres[a], centres[b]
        draw.line([x0 * size, y0 * size, x1 * size, y1 * size], fill=ink, width=line_w)

    for (cx, cy), pick in zip(centres, picks):
        px, py = cx * size, cy * size
        fill = (235, 235, 235) if rgb else 235
        draw.rectangle([px - half, py - half, px + half, py + half], fill=fill, outline=ink, width=line_w)
        glyph = vocab[pick]
        ox, oy = px - GLYPH_CELLS * cell / 2, py - GLYPH_CELLS * cell / 2
        for r, c in zip(*np.nonzero(glyph)):
            draw.rectangle([ox + c * cell, oy + r * cell, ox + (c + 1) * cell - 1, oy + (r + 1) * cell - 1],
                           fill=ink)
    return img


def make_corpus(root: str | os.PathLike, labels: list[PatternLabel], per_class: int,
                seed: int = 0, size: int = 400) -> list[Path]:
    """Write ``per_class`` PNG diagrams for each label under ``root/<label>/``."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    paths = []
    for label in labels:
        d = root / label.value
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            p = d / f"{label.value}_{i:03d}.png"
            render_diagram(label, rng, size=size).save(p)
            paths.append(p)
    return paths
