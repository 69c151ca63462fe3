"""Font compatibility scoring and greedy representative-font selection."""

from __future__ import annotations

import numpy as np

from .detect import (
    backtrace,
    forward_pass,
    nonmax_suppress,
    refine_anchor,
    to_spanning_tree,
)
from .edges import detect_edges
from .shapes import CharacterModel, ModelBank

DEFAULT_COMPAT_THRESHOLD = 0.8
DEFAULT_COVERAGE = 0.9


def compatibility_score(model: CharacterModel, glyph: np.ndarray, edge_threshold: float | None = None) -> float:
    """Matched-landmark fraction of `model` backtraced on `glyph` at the best
    forward-pass anchor. A model scored on its own training glyph yields 1.0."""
    emap = detect_edges(glyph, threshold=edge_threshold)
    if not emap.active.any():
        return 0.0
    tree = to_spanning_tree(model)
    heat = forward_pass(tree, emap)
    radius = 0.25 * model.normalized_height
    peaks = nonmax_suppress(heat, max(1.0, radius), min_score=0.5 * float(heat.max()))
    best = 0.0
    for x, y, _ in peaks[:4]:
        anchor = refine_anchor(heat, x, y, radius)
        det = backtrace(model, emap, anchor, theta=0.0, tree=tree)
        if det is not None and det.score > best:
            best = det.score
        if best >= 0.95:
            break
    return best


def select_fonts_from_scores(
    font_ids: list[str],
    scores: np.ndarray,
    threshold: float = DEFAULT_COMPAT_THRESHOLD,
    coverage: float = DEFAULT_COVERAGE,
) -> tuple[list[str], float]:
    """Greedy cover: repeatedly keep the font representing the most remaining
    fonts (scores[i, j] > threshold, self always included), drop it and all it
    represents, until the covered fraction reaches `coverage`.

    Returns (selected font ids, achieved coverage).
    """
    n = len(font_ids)
    if n == 0:
        return [], 1.0
    scores = np.asarray(scores)
    represent = [
        {j for j in range(n) if j == i or scores[i, j] > threshold} for i in range(n)
    ]
    remaining = set(range(n))
    selected: list[int] = []
    while (n - len(remaining)) / n < coverage:
        best = min(remaining, key=lambda i: (-len(represent[i] & remaining), font_ids[i]))
        selected.append(best)
        remaining -= represent[best] | {best}
    achieved = (n - len(remaining)) / n
    return [font_ids[i] for i in sorted(selected, key=lambda i: font_ids[i])], achieved


def select_fonts(
    bank: ModelBank,
    glyphs: dict[tuple[str, str], np.ndarray],
    threshold: float = DEFAULT_COMPAT_THRESHOLD,
    coverage: float = DEFAULT_COVERAGE,
) -> tuple[set[tuple[str, str]], dict[str, float]]:
    """Per-letter greedy font selection over pairwise compatibility scores.

    glyphs maps (letter, font_id) to the rendered glyph image. Returns the
    union of selected (letter, font_id) pairs and the achieved coverage per
    letter.
    """
    letters = sorted({label for label, _ in glyphs})
    selected: set[tuple[str, str]] = set()
    coverage_by_letter: dict[str, float] = {}
    edge_threshold = bank.build_params.edge_threshold
    for letter in letters:
        font_ids = sorted(font for lab, font in glyphs if lab == letter)
        models = {}
        for font in font_ids:
            try:
                models[font] = bank.get(letter, font)
            except KeyError:
                continue
        fonts = [f for f in font_ids if f in models]
        if not fonts:
            continue
        n = len(fonts)
        scores = np.zeros((n, n))
        for i, fi in enumerate(fonts):
            for j, fj in enumerate(fonts):
                scores[i, j] = (
                    1.0 if i == j else compatibility_score(models[fi], glyphs[(letter, fj)], edge_threshold)
                )
        chosen, achieved = select_fonts_from_scores(fonts, scores, threshold, coverage)
        coverage_by_letter[letter] = achieved
        selected.update((letter, f) for f in chosen)
    return selected, coverage_by_letter
