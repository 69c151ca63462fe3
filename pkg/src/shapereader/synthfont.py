"""Built-in synthetic stroke alphabet: 52 letters in two synthetic fonts.

Letters are polylines in a unit box (y grows downward; baseline at 0.78,
x-height top at 0.35, ascender top 0.05, descender bottom 0.98). The two fonts
share the skeletons: "plain" renders them upright with a thick stroke,
"slant" compresses and shears them with a thinner stroke. "I" and "l" are both
bare stems on purpose, so they are genuinely ambiguous without a language
model.

The renderer also produces word images with exact per-character ink masks for
evaluation and parser training.
"""

from __future__ import annotations

import numpy as np
from skimage.draw import line as draw_line
from skimage.morphology import binary_dilation, disk

from .shapes import ALPHABET

FONT_IDS = ("plain", "slant")

_CAP_TOP = 0.05
_BASE = 0.78
_X_TOP = 0.35
_DESC = 0.98


def _arc(cx, cy, rx, ry, a0, a1, n=14):
    ang = np.deg2rad(np.linspace(a0, a1, n))
    return [(cx + rx * np.cos(t), cy + ry * np.sin(t)) for t in ang]


def _cap(strokes):
    """Map y from the 0..1 design space of the capitals onto cap-top..baseline."""
    out = []
    for s in strokes:
        out.append([(x, _CAP_TOP + y * (_BASE - _CAP_TOP)) for x, y in s])
    return out


_UPPER = {
    "A": [[(0, 1), (0.5, 0), (1, 1)], [(0.22, 0.62), (0.78, 0.62)]],
    "B": [
        [(0, 0), (0, 1)],
        [(0, 0), (0.55, 0)] + _arc(0.55, 0.25, 0.27, 0.25, -90, 90) + [(0.55, 0.5), (0, 0.5)],
        [(0, 0.5), (0.58, 0.5)] + _arc(0.58, 0.75, 0.3, 0.25, -90, 90) + [(0.58, 1.0), (0, 1.0)],
    ],
    "C": [_arc(0.5, 0.5, 0.48, 0.5, 55, 305)],
    "D": [
        [(0, 0), (0, 1)],
        [(0, 0), (0.35, 0)] + _arc(0.35, 0.5, 0.55, 0.5, -90, 90) + [(0.35, 1.0), (0, 1.0)],
    ],
    "E": [[(0.9, 0), (0, 0), (0, 1), (0.9, 1)], [(0, 0.5), (0.7, 0.5)]],
    "F": [[(0.9, 0), (0, 0), (0, 1)], [(0, 0.5), (0.7, 0.5)]],
    "G": [_arc(0.5, 0.5, 0.48, 0.5, 0, 300), [(0.98, 0.5), (0.55, 0.5)]],
    "H": [[(0, 0), (0, 1)], [(1, 0), (1, 1)], [(0, 0.5), (1, 0.5)]],
    "I": [[(0.5, 0), (0.5, 1)]],
    "J": [[(0.7, 0), (0.7, 0.72)] + _arc(0.45, 0.72, 0.25, 0.26, 0, 180)],
    "K": [[(0, 0), (0, 1)], [(0.9, 0), (0, 0.52)], [(0.2, 0.4), (0.95, 1)]],
    "L": [[(0, 0), (0, 1), (0.85, 1)]],
    "M": [[(0, 1), (0, 0), (0.5, 0.6), (1, 0), (1, 1)]],
    "N": [[(0, 1), (0, 0), (1, 1), (1, 0)]],
    "O": [_arc(0.5, 0.5, 0.46, 0.5, 0, 360, n=22)],
    "P": [
        [(0, 0), (0, 1)],
        [(0, 0), (0.55, 0)] + _arc(0.55, 0.27, 0.3, 0.27, -90, 90) + [(0.55, 0.54), (0, 0.54)],
    ],
    "Q": [_arc(0.5, 0.5, 0.46, 0.5, 0, 360, n=22), [(0.62, 0.68), (1.0, 1.0)]],
    "R": [
        [(0, 0), (0, 1)],
        [(0, 0), (0.55, 0)] + _arc(0.55, 0.27, 0.3, 0.27, -90, 90) + [(0.55, 0.54), (0, 0.54)],
        [(0.32, 0.54), (0.95, 1)],
    ],
    "S": [
        [(0.85, 0.14), (0.6, 0.0), (0.28, 0.0), (0.07, 0.15), (0.07, 0.35), (0.3, 0.5),
         (0.68, 0.5), (0.9, 0.64), (0.9, 0.85), (0.68, 1.0), (0.32, 1.0), (0.08, 0.85)]
    ],
    "T": [[(0, 0), (1, 0)], [(0.5, 0), (0.5, 1)]],
    "U": [[(0, 0), (0, 0.68)] + _arc(0.5, 0.68, 0.5, 0.32, 180, 0) + [(1, 0.68), (1, 0)]],
    "V": [[(0, 0), (0.5, 1), (1, 0)]],
    "W": [[(0, 0), (0.25, 1), (0.5, 0.4), (0.75, 1), (1, 0)]],
    "X": [[(0, 0), (1, 1)], [(1, 0), (0, 1)]],
    "Y": [[(0, 0), (0.5, 0.5)], [(1, 0), (0.5, 0.5)], [(0.5, 0.5), (0.5, 1)]],
    "Z": [[(0, 0), (1, 0), (0, 1), (1, 1)]],
}

_LOWER = {
    "a": [_arc(0.35, 0.565, 0.33, 0.215, 0, 360, n=18), [(0.68, _X_TOP), (0.68, _BASE)]],
    "b": [[(0, _CAP_TOP), (0, _BASE)], _arc(0.34, 0.565, 0.34, 0.215, 0, 360, n=18)],
    "c": [_arc(0.4, 0.565, 0.36, 0.215, 50, 310)],
    "d": [[(0.72, _CAP_TOP), (0.72, _BASE)], _arc(0.38, 0.565, 0.34, 0.215, 0, 360, n=18)],
    "e": [_arc(0.375, 0.565, 0.34, 0.215, 60, 360), [(0.05, 0.55), (0.7, 0.55)]],
    "f": [[(0.3, _BASE), (0.3, 0.15), (0.38, 0.06), (0.58, 0.05)], [(0.05, _X_TOP), (0.55, _X_TOP)]],
    "g": [
        _arc(0.35, 0.565, 0.33, 0.215, 0, 360, n=18),
        [(0.68, _X_TOP), (0.68, 0.88), (0.5, _DESC), (0.12, 0.93)],
    ],
    "h": [[(0, _CAP_TOP), (0, _BASE)], _arc(0.33, 0.57, 0.33, 0.22, 180, 360) + [(0.66, _BASE)]],
    "i": [[(0.15, 0.17), (0.15, 0.21)], [(0.15, _X_TOP), (0.15, _BASE)]],
    "j": [[(0.45, 0.17), (0.45, 0.21)], [(0.45, _X_TOP), (0.45, 0.88), (0.28, _DESC), (0.05, 0.93)]],
    "k": [[(0, _CAP_TOP), (0, _BASE)], [(0.6, _X_TOP), (0, 0.6)], [(0.17, 0.52), (0.65, _BASE)]],
    "l": [[(0.15, _CAP_TOP), (0.15, _BASE)]],
    "m": [
        [(0, _X_TOP), (0, _BASE)],
        _arc(0.2, 0.55, 0.2, 0.2, 180, 360) + [(0.4, _BASE)],
        _arc(0.6, 0.55, 0.2, 0.2, 180, 360) + [(0.8, _BASE)],
    ],
    "n": [[(0, _X_TOP), (0, _BASE)], _arc(0.3, 0.57, 0.3, 0.22, 180, 360) + [(0.6, _BASE)]],
    "o": [_arc(0.36, 0.565, 0.34, 0.215, 0, 360, n=18)],
    "p": [[(0, _X_TOP), (0, _DESC)], _arc(0.34, 0.565, 0.34, 0.215, 0, 360, n=18)],
    "q": [_arc(0.38, 0.565, 0.34, 0.215, 0, 360, n=18), [(0.72, _X_TOP), (0.72, _DESC)]],
    "r": [[(0, _X_TOP), (0, _BASE)], [(0, 0.52), (0.12, 0.39), (0.35, _X_TOP), (0.52, 0.42)]],
    "s": [
        [(0.58, 0.4), (0.42, _X_TOP), (0.15, _X_TOP), (0.03, 0.43), (0.1, 0.53), (0.3, 0.565),
         (0.5, 0.6), (0.6, 0.67), (0.52, _BASE), (0.18, _BASE), (0.03, 0.71)]
    ],
    "t": [[(0.3, 0.12), (0.3, 0.7), (0.38, _BASE), (0.56, 0.75)], [(0.05, _X_TOP), (0.55, _X_TOP)]],
    "u": [[(0, _X_TOP), (0, 0.6)] + _arc(0.3, 0.6, 0.3, 0.18, 180, 0), [(0.6, _X_TOP), (0.6, _BASE)]],
    "v": [[(0, _X_TOP), (0.3, _BASE), (0.6, _X_TOP)]],
    "w": [[(0, _X_TOP), (0.18, _BASE), (0.36, 0.47), (0.54, _BASE), (0.72, _X_TOP)]],
    "x": [[(0, _X_TOP), (0.6, _BASE)], [(0.6, _X_TOP), (0, _BASE)]],
    "y": [[(0, _X_TOP), (0.3, _BASE)], [(0.6, _X_TOP), (0.18, _DESC)]],
    "z": [[(0, _X_TOP), (0.6, _X_TOP), (0, _BASE), (0.6, _BASE)]],
}


def letter_strokes(letter: str) -> list[list[tuple[float, float]]]:
    if letter in _UPPER:
        return _cap(_UPPER[letter])
    if letter in _LOWER:
        return _LOWER[letter]
    raise KeyError(f"no strokes for {letter!r}")


def _font_transform(strokes, font_id: str):
    if font_id == "plain":
        return strokes, 5
    if font_id == "slant":
        out = []
        for s in strokes:
            out.append([(0.85 * x + 0.16 * (_BASE - y), y) for x, y in s])
        return out, 4
    raise KeyError(f"unknown font {font_id!r}")


def _stroke_extent(strokes):
    xs = [x for s in strokes for x, _ in s]
    return min(xs), max(xs)


def _rasterize(strokes, height: int, pad: int, stroke_width: int):
    """Ink mask for one glyph; unit coords scale with the glyph box height."""
    scale = (height - 2 * pad) / 1.0
    x0, x1 = _stroke_extent(strokes)
    width = int(round((x1 - x0) * scale * 0.8)) + 2 * pad + stroke_width
    ink = np.zeros((height, max(width, 2 * pad + stroke_width)), dtype=bool)
    h, w = ink.shape
    for s in strokes:
        pts = [
            (int(round(pad + (x - x0) * scale * 0.8)), int(round(pad + y * scale)))
            for x, y in s
        ]
        for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
            rr, cc = draw_line(ya, xa, yb, xb)
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            ink[rr[ok], cc[ok]] = True
        if len(pts) == 1:
            xa, ya = pts[0]
            if 0 <= ya < h and 0 <= xa < w:
                ink[ya, xa] = True
    return binary_dilation(ink, disk(max(1, stroke_width // 2)))


def render_glyph(letter: str, font_id: str = "plain", height: int = 48, pad: int = 6) -> np.ndarray:
    """White-background uint8 glyph image."""
    strokes, width = _font_transform(letter_strokes(letter), font_id)
    ink = _rasterize(strokes, height, pad, width)
    return np.where(ink, 0, 255).astype(np.uint8)


def render_word(
    text: str,
    font_id: str = "plain",
    height: int = 48,
    pad: int = 6,
    spacing: float = 0.22,
    noise: float = 0.0,
    seed: int = 0,
):
    """Render a word image plus exact per-character ink masks.

    Returns (image, labels, masks) where masks are full-image booleans.
    """
    inks = []
    for ch in text:
        strokes, width = _font_transform(letter_strokes(ch), font_id)
        inks.append(_rasterize(strokes, height, pad, width))
    gap = int(round(spacing * height))
    total_w = sum(ink.shape[1] for ink in inks) + gap * (len(inks) - 1) + 2 * pad
    canvas = np.zeros((height + 2 * pad, total_w), dtype=bool)
    masks = []
    x = pad
    for ink in inks:
        mask = np.zeros_like(canvas)
        mask[pad : pad + height, x : x + ink.shape[1]] = ink
        canvas |= mask
        masks.append(mask)
        x += ink.shape[1] + gap
    image = np.where(canvas, 0, 255).astype(np.uint8)
    if noise > 0:
        rng = np.random.default_rng(seed)
        flip = rng.random(image.shape) < noise
        values = rng.integers(0, 2, size=image.shape) * 255
        image = np.where(flip, values, image).astype(np.uint8)
    return image, list(text), masks


def build_synthetic_bank(letters: str | None = None, fonts=FONT_IDS, params=None):
    """Model bank over the synthetic alphabet (used by tests and demos)."""
    from .shapes import BuildParams, ModelBank, model_from_image

    letters = letters if letters is not None else ALPHABET
    params = params or BuildParams()
    models = []
    for font in fonts:
        for ch in letters:
            image = render_glyph(ch, font_id=font, height=params.normalized_height)
            models.append(model_from_image(ch, font, image, params))
    return ModelBank(models=models, build_params=params)
