"""Word parsing: candidate-letter graph, factor features, exact k-best DP.

Candidates become nodes of a DAG between two pseudo-nodes, start (*) and
end (#). Edges are the binary variables; a word is a start-to-end path. Edge
(transition) potentials use a 12-feature vector, consecutive-edge (smoothness)
potentials a 6-feature vector, both linear in learned weights. Inference is
exact k-best dynamic programming over (previous edge) states, which satisfies
the flow-consistency and singleton constraints by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detect import CandidateDetection
from .edges import InvalidInputError
from .langmodel import CharNGramModel

START = -1
END = -2

N_TRANSITION = 12
N_SMOOTHNESS = 6

DEFAULT_MAX_GAP_FACTOR = 2.0


class EmptyGraphError(ValueError):
    pass


class ConstraintViolationError(ValueError):
    pass


def min_max(x: float, a: float, b: float) -> float:
    """Clamp x to [a, b]."""
    if a > b:
        raise InvalidInputError(f"min_max bounds reversed: {a} > {b}")
    return min(max(x, a), b)


# the 18 feature formulas, each mapping its raw measure to a log score
def _f_unit(x: float) -> float:
    return math.log(1.0 - min_max(x, 0.0, 0.99))


def _f_size_prior(x: float) -> float:
    return math.log(1.0 - min_max(x, 0.0, 4.0) / 5.0)


def _f_border(x: float) -> float:
    return math.log(min_max(x, 1.0, 20.0) / 20.0)


def _f_height_diff(x: float) -> float:
    return math.log(min_max(x, 0.01, 1.0))


def _f_y_offset(x: float) -> float:
    return math.log(min_max(x, 0.01, 1.0))


def _f_color_diff(x: float) -> float:
    return math.log(min_max(x, 0.1, 10.0) / 10.0)


def _f_angle(x: float) -> float:
    return math.log(min_max(x, 0.01, 45.0) / 45.0)


def _f_evenness(x: float) -> float:
    return math.log(min_max(x, 0.01, 16.0) / 16.0)


TRANSITION_FORMULAS = [
    ("left_score", _f_unit),
    ("shape_size_prior", _f_size_prior),
    ("border_distance", _f_border),
    ("height_difference", _f_height_diff),
    ("y_offset", _f_y_offset),
    ("color_difference", _f_color_diff),
    ("left_unigram", _f_unit),
    ("head_unigram", _f_unit),
    ("tail_unigram", _f_unit),
    ("bigram", _f_unit),
    ("head_bigram", _f_unit),
    ("tail_bigram", _f_unit),
]

SMOOTHNESS_FORMULAS = [
    ("trigram", _f_unit),
    ("head_bigram3", _f_unit),
    ("tail_bigram3", _f_unit),
    ("bottom_angle", _f_angle),
    ("top_angle", _f_angle),
    ("spacing_evenness", _f_evenness),
]


@dataclass
class FeatureWeights:
    w_transition: np.ndarray = field(default_factory=lambda: np.zeros(N_TRANSITION))
    w_smoothness: np.ndarray = field(default_factory=lambda: np.zeros(N_SMOOTHNESS))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w_transition, self.w_smoothness])

    @staticmethod
    def from_vector(v: np.ndarray) -> "FeatureWeights":
        v = np.asarray(v, dtype=float)
        return FeatureWeights(v[:N_TRANSITION].copy(), v[N_TRANSITION:].copy())


def save_weights(path, weights: FeatureWeights) -> None:
    names = [n for n, _ in TRANSITION_FORMULAS] + [n for n, _ in SMOOTHNESS_FORMULAS]
    with open(path, "w") as fh:
        fh.write("PARSEWEIGHTS v1\n")
        for name, value in zip(names, weights.as_vector()):
            fh.write(f"{name}\t{float(value)!r}\n")


def load_weights(path) -> FeatureWeights:
    with open(path) as fh:
        if fh.readline().strip() != "PARSEWEIGHTS v1":
            raise InvalidInputError("not a PARSEWEIGHTS v1 file")
        values = [float(line.rstrip("\n").split("\t")[1]) for line in fh if line.strip()]
    if len(values) != N_TRANSITION + N_SMOOTHNESS:
        raise InvalidInputError(f"expected 18 weights, got {len(values)}")
    return FeatureWeights.from_vector(np.array(values))


# ---------------------------------------------------------------------------
# graph construction

@dataclass
class ParseGraph:
    candidates: list[CandidateDetection]
    edges: list[tuple[int, int]]              # (u, v); u in {START} | nodes, v in nodes | {END}
    image_shape: tuple[int, int]
    median_height: float
    heads: set[int]
    tails: set[int]
    edge_index: dict[tuple[int, int], int] = field(default_factory=dict)
    out_edges: dict[int, list[int]] = field(default_factory=dict)
    in_edges: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.edge_index:
            self.edge_index = {e: i for i, e in enumerate(self.edges)}
            for i, (u, v) in enumerate(self.edges):
                self.out_edges.setdefault(u, []).append(i)
                self.in_edges.setdefault(v, []).append(i)


def build_graph(
    candidates: list[CandidateDetection],
    image_shape: tuple[int, int],
    max_gap_factor: float = DEFAULT_MAX_GAP_FACTOR,
) -> ParseGraph:
    """DAG over candidates ordered by center x. An edge joins a candidate to
    every candidate strictly to its right within max_gap_factor times the mean
    candidate height; candidates whose boxes mostly overlap are rival readings
    of the same glyph, not neighbors, and get no edge. Start connects to head
    letters (nothing linkable on their left), end symmetrically."""
    if not candidates:
        raise EmptyGraphError("no candidates")
    mean_h = float(np.mean([c.height for c in candidates]))
    gap = max_gap_factor * mean_h
    n = len(candidates)
    cx = [c.center[0] for c in candidates]
    edges: list[tuple[int, int]] = []
    has_left = [False] * n
    has_right = [False] * n
    order = sorted(range(n), key=lambda i: (cx[i], candidates[i].bbox[1], i))
    for oi, i in enumerate(order):
        for j in order[oi + 1 :]:
            if cx[j] <= cx[i]:
                continue  # not strictly right
            if cx[j] - cx[i] > gap:
                continue
            ax0, _, ax1, _ = candidates[i].bbox
            bx0, _, bx1, _ = candidates[j].bbox
            overlap = min(ax1, bx1) - max(ax0, bx0)
            if overlap > 0.5 * min(ax1 - ax0, bx1 - bx0):
                continue  # same glyph, competing labels
            edges.append((i, j))
            has_left[j] = True
            has_right[i] = True
    heads = {i for i in range(n) if not has_left[i]}
    tails = {i for i in range(n) if not has_right[i]}
    all_edges = (
        [(START, i) for i in sorted(heads)]
        + sorted(edges)
        + [(i, END) for i in sorted(tails)]
    )
    median_h = float(np.median([c.height for c in candidates]))
    return ParseGraph(
        candidates=candidates,
        edges=all_edges,
        image_shape=image_shape,
        median_height=median_h,
        heads=heads,
        tails=tails,
    )


# ---------------------------------------------------------------------------
# features

def _border_distance(det: CandidateDetection, image_shape) -> float:
    h, w = image_shape
    x0, y0, x1, y1 = det.bbox
    return max(0.0, min(x0, y0, (w - 1) - x1, (h - 1) - y1))


def transition_features(
    left: CandidateDetection | None,
    right: CandidateDetection | None,
    image_shape: tuple[int, int],
    median_height: float,
    lm: CharNGramModel | None,
    is_head_edge: bool = False,
    is_tail_edge: bool = False,
    ngram_mask: bool = True,
) -> np.ndarray:
    """12 transition features for edge (left, right); None stands for a pseudo
    node. Rows that need an absent measure (pseudo endpoint, no language model)
    contribute 0."""
    f = np.zeros(N_TRANSITION)
    anchor = left if left is not None else right
    if anchor is not None:
        ratio = max(anchor.height, 1e-6) / max(median_height, 1e-6)
        f[1] = _f_size_prior(2.0 * abs(math.log2(ratio)))
        f[2] = _f_border(_border_distance(anchor, image_shape))
    if left is not None:
        f[0] = _f_unit(left.score)
    if left is not None and right is not None:
        hmax = max(left.height, right.height, 1e-6)
        f[3] = _f_height_diff(abs(right.height - left.height) / hmax)
        f[4] = _f_y_offset(abs(right.center[1] - left.center[1]) / hmax)
        f[5] = _f_color_diff(abs(right.mean_color - left.mean_color))
    if lm is not None and ngram_mask:
        if left is not None:
            f[6] = _f_unit(lm.unigram_prob(left.label))
        if left is None and right is not None:
            f[7] = _f_unit(lm.head_unigram_prob(right.label))
        if right is None and left is not None:
            f[8] = _f_unit(lm.tail_unigram_prob(left.label))
        if left is not None and right is not None:
            f[9] = _f_unit(lm.bigram_prob(left.label, right.label))
            if is_head_edge:
                f[10] = _f_unit(lm.head_bigram_prob(left.label, right.label))
            if is_tail_edge:
                f[11] = _f_unit(lm.tail_bigram_prob(left.label, right.label))
    return f


def _anchor_angle(a, b, c, where: str) -> float:
    """Deviation from collinearity (degrees) at b, measured at bbox anchor
    points: bottom-center or top-center."""

    def pt(det):
        x0, y0, x1, y1 = det.bbox
        return np.array([0.5 * (x0 + x1), y1 if where == "bottom" else y0])

    pa, pb, pc = pt(a), pt(b), pt(c)
    u, v = pa - pb, pc - pb
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-9 or nv < 1e-9:
        return 0.0
    cosang = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    interior = math.degrees(math.acos(cosang))
    return 180.0 - interior


def smoothness_features(
    a: CandidateDetection | None,
    b: CandidateDetection,
    c: CandidateDetection | None,
    lm: CharNGramModel | None,
    ngram_mask: bool = True,
) -> np.ndarray:
    """6 smoothness features for the consecutive triplet (a, b, c); a may be the
    start pseudo-node and c the end pseudo-node. Geometric rows are zeroed for
    pseudo triplets."""
    f = np.zeros(N_SMOOTHNESS)
    if lm is not None and ngram_mask:
        if a is not None and c is not None:
            f[0] = _f_unit(lm.trigram_prob(a.label, b.label, c.label))
        if a is None and c is not None:
            f[1] = _f_unit(lm.head_bigram_prob(b.label, c.label))
        if c is None and a is not None:
            f[2] = _f_unit(lm.tail_bigram_prob(a.label, b.label))
    if a is not None and c is not None:
        f[3] = _f_angle(_anchor_angle(a, b, c, "bottom"))
        f[4] = _f_angle(_anchor_angle(a, b, c, "top"))
        ca = np.array(a.center)
        cb = np.array(b.center)
        cc = np.array(c.center)
        d1 = float(np.linalg.norm(cb - ca))
        d2 = float(np.linalg.norm(cc - cb))
        f[5] = _f_evenness(abs(d2 - d1))
    return f


# ---------------------------------------------------------------------------
# paths and inference

@dataclass
class ParsePath:
    nodes: list[int]             # candidate indices, start/end pseudo-nodes excluded
    edge_ids: list[int]
    score: float
    word: str
    final_score: float = 0.0


class _FeatureCache:
    def __init__(self, graph: ParseGraph, lm, ngram_mask=True):
        self.graph = graph
        self.lm = lm
        self.ngram_mask = ngram_mask
        self._t: dict[int, np.ndarray] = {}
        self._s: dict[tuple[int, int], np.ndarray] = {}

    def _det(self, node):
        return None if node in (START, END) else self.graph.candidates[node]

    def transition(self, edge_id: int) -> np.ndarray:
        if edge_id not in self._t:
            u, v = self.graph.edges[edge_id]
            self._t[edge_id] = transition_features(
                self._det(u),
                self._det(v),
                self.graph.image_shape,
                self.graph.median_height,
                self.lm,
                is_head_edge=(u in self.graph.heads and v not in (START, END)),
                is_tail_edge=(v in self.graph.tails and u not in (START, END)),
                ngram_mask=self.ngram_mask,
            )
        return self._t[edge_id]

    def smoothness(self, e_in: int, e_out: int) -> np.ndarray:
        key = (e_in, e_out)
        if key not in self._s:
            a, b = self.graph.edges[e_in]
            b2, c = self.graph.edges[e_out]
            assert b == b2
            self._s[key] = smoothness_features(
                self._det(a), self._det(b), self._det(c), self.lm, ngram_mask=self.ngram_mask
            )
        return self._s[key]


def path_features(graph: ParseGraph, path: ParsePath, lm, ngram_mask=True, cache=None) -> np.ndarray:
    """Joint 18-dim feature vector: summed transition features over activated
    edges plus summed smoothness features over consecutive edge pairs."""
    cache = cache or _FeatureCache(graph, lm, ngram_mask)
    t = np.zeros(N_TRANSITION)
    s = np.zeros(N_SMOOTHNESS)
    for e in path.edge_ids:
        t += cache.transition(e)
    for e1, e2 in zip(path.edge_ids, path.edge_ids[1:]):
        s += cache.smoothness(e1, e2)
    return np.concatenate([t, s])


def validate_path(graph: ParseGraph, path: ParsePath) -> None:
    ids = path.edge_ids
    if not ids:
        raise ConstraintViolationError("empty path")
    seq = [graph.edges[e] for e in ids]
    if seq[0][0] != START or seq[-1][1] != END:
        raise ConstraintViolationError("path must run start to end")
    for (u1, v1), (u2, v2) in zip(seq, seq[1:]):
        if v1 != u2:
            raise ConstraintViolationError("flow consistency violated")
    for e in ids:
        if e not in range(len(graph.edges)):
            raise ConstraintViolationError("unknown edge")


def score_path(
    graph: ParseGraph,
    weights: FeatureWeights,
    path: ParsePath,
    lm=None,
    ngram_mask=True,
) -> float:
    validate_path(graph, path)
    cache = _FeatureCache(graph, lm, ngram_mask)
    total = 0.0
    for e in path.edge_ids:
        total += float(weights.w_transition @ cache.transition(e))
    for e1, e2 in zip(path.edge_ids, path.edge_ids[1:]):
        total += float(weights.w_smoothness @ cache.smoothness(e1, e2))
    return total


def infer_best(
    graph: ParseGraph,
    weights: FeatureWeights,
    k: int = 1,
    lm=None,
    ngram_mask: bool = True,
    edge_bonus: dict[int, float] | None = None,
) -> list[ParsePath]:
    """Exact k-best start-to-end paths by second-order DP over edge states.

    edge_bonus adds a per-edge additive term (used for loss-augmented
    inference). Returns paths with non-increasing scores; scores exclude the
    bonus terms.
    """
    cache = _FeatureCache(graph, lm, ngram_mask)
    bonus = edge_bonus or {}
    n = len(graph.candidates)
    node_rank = {START: -1, END: n}
    order = sorted(
        range(n),
        key=lambda i: (graph.candidates[i].center[0], graph.candidates[i].bbox[1], i),
    )
    for r, i in enumerate(order):
        node_rank[i] = r

    tdot = {
        e: float(weights.w_transition @ cache.transition(e)) + bonus.get(e, 0.0)
        for e in range(len(graph.edges))
    }

    # entries[e] = up to k of (aug_score, plain_score, prev_edge, prev_rank)
    entries: dict[int, list[tuple[float, float, int | None, int | None]]] = {}
    edge_order = sorted(
        range(len(graph.edges)),
        key=lambda e: (node_rank[graph.edges[e][1]], node_rank[graph.edges[e][0]], e),
    )
    for e in edge_order:
        u, v = graph.edges[e]
        if u == START:
            entries[e] = [(tdot[e], float(weights.w_transition @ cache.transition(e)), None, None)]
            continue
        merged: list[tuple[float, float, int | None, int | None]] = []
        for e_in in graph.in_edges.get(u, []):
            if e_in not in entries:
                continue
            sdot = float(weights.w_smoothness @ cache.smoothness(e_in, e))
            plain_t = float(weights.w_transition @ cache.transition(e))
            for rank, (aug, plain, _, _) in enumerate(entries[e_in]):
                merged.append((aug + tdot[e] + sdot, plain + plain_t + sdot, e_in, rank))
        merged.sort(key=lambda t: (-t[0], t[2] if t[2] is not None else -1, t[3] or 0))
        if merged:
            entries[e] = merged[:k]

    finals: list[tuple[float, float, int, int]] = []
    for e in range(len(graph.edges)):
        if graph.edges[e][1] == END and e in entries:
            for rank, (aug, plain, _, _) in enumerate(entries[e]):
                finals.append((aug, plain, e, rank))
    finals.sort(key=lambda t: (-t[0], t[2], t[3]))

    paths: list[ParsePath] = []
    for aug, plain, e, rank in finals[:k]:
        edge_ids: list[int] = []
        cur, r = e, rank
        while cur is not None:
            edge_ids.append(cur)
            _, _, cur, r = entries[cur][r]
        edge_ids.reverse()
        nodes = [graph.edges[eid][1] for eid in edge_ids[:-1]]
        word = "".join(graph.candidates[i].label for i in nodes)
        paths.append(ParsePath(nodes=nodes, edge_ids=edge_ids, score=plain, word=word))
    return paths
