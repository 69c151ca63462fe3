"""Per-letter generative shape models: pool variables plus lateral constraints.

A model is built from one clean glyph image. Landmarks become pool variables,
contour-adjacent landmarks get "contour" lateral constraints, and long-range
"distant" constraints are added greedily wherever the existing graph leaves a
pair of pools too much slack (the gamma rule). Every constraint is hard: it
bounds the change of the relative position of its two pools by its perturbation
radius (Chebyshev box). Radii grow with pair distance so that moderate global
scalings and rotations stay feasible.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edges import (
    InvalidInputError,
    Landmark,
    LandmarkSet,
    OrientedEdgeMap,
    detect_edges,
    sparsify_landmarks,
)

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"

CONTOUR = "contour"
DISTANT = "distant"

INF_BOUND = math.inf


@dataclass(frozen=True)
class PoolVariable:
    landmark: Landmark
    window: int  # half-width of the training-side pooling region


@dataclass(frozen=True)
class LateralConstraint:
    a: int
    b: int
    radius: int
    kind: str  # CONTOUR or DISTANT

    def __post_init__(self):
        if self.a == self.b:
            raise InvalidInputError("constraint endpoints must differ")
        if self.radius <= 0:
            raise InvalidInputError("constraint radius must be positive")


@dataclass
class BuildParams:
    pool_window: int = 8
    radius: int = 2           # minimum perturbation radius (pixels at model scale)
    radius_scale: float = 0.4  # radius grows as max(radius, round(scale * distance))
    gamma: float = 3.0
    suppression_radius: float = 3.0
    edge_threshold: float | None = None
    normalized_height: int = 48

    def radius_for(self, distance: float) -> int:
        return max(self.radius, int(round(self.radius_scale * distance)))

    def to_dict(self) -> dict:
        return {
            "pool_window": self.pool_window,
            "radius": self.radius,
            "radius_scale": self.radius_scale,
            "gamma": self.gamma,
            "suppression_radius": self.suppression_radius,
            "edge_threshold": self.edge_threshold,
            "normalized_height": self.normalized_height,
        }


@dataclass
class CharacterModel:
    label: str
    font_id: str
    pools: list[PoolVariable]
    constraints: list[LateralConstraint]
    contours: list[list[int]]       # pool-index sequences
    contour_closed: list[bool]
    normalized_height: int

    def positions(self) -> np.ndarray:
        """(n, 2) model-frame landmark coordinates (x, y)."""
        return np.array([[p.landmark.x, p.landmark.y] for p in self.pools], dtype=float)

    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(self.pools))}
        for c in self.constraints:
            adj[c.a].append((c.b, c.radius))
            adj[c.b].append((c.a, c.radius))
        return adj

    def is_connected(self) -> bool:
        n = len(self.pools)
        if n == 0:
            return False
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n


@dataclass
class ModelBank:
    models: list[CharacterModel]
    build_params: BuildParams

    def __post_init__(self):
        keys = [(m.label, m.font_id) for m in self.models]
        if len(set(keys)) != len(keys):
            raise InvalidInputError("duplicate (label, font_id) in bank")

    def get(self, label: str, font_id: str) -> CharacterModel:
        for m in self.models:
            if m.label == label and m.font_id == font_id:
                return m
        raise KeyError((label, font_id))


# ---------------------------------------------------------------------------
# contour tracing

_EIGHT = np.ones((3, 3), dtype=int)


def trace_contours(
    landmarks: LandmarkSet, edges: OrientedEdgeMap
) -> tuple[list[list[int]], list[bool]]:
    """Partition landmarks into chains along edge contours.

    Linking is local and orientation-aware: each landmark proposes its nearest
    neighbor ahead of and behind its edge tangent, among landmarks on the same
    8-connected edge component with a compatible orientation. Proposals are
    merged greedily (shortest first, degree <= 2, no cycles) into open paths;
    a path whose ends land next to each other is marked closed. Boundary loops
    of a stroke therefore come out as single closed chains, which is what the
    segmentation fill relies on.
    """
    pts = landmarks.landmarks
    n = len(pts)
    if n == 0:
        return [], []
    labels, _ = ndimage.label(edges.active, structure=_EIGHT)
    comp = np.array([int(labels[p.y, p.x]) for p in pts])
    pos = landmarks.positions()
    orient = np.array([p.orientation for p in pts])
    from .edges import BIN_DEGREES, N_ORIENT

    theta = np.deg2rad(orient * BIN_DEGREES)
    tangent = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    link_range = 2.5 * max(landmarks.suppression_radius, 1.0)

    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    odiff = np.abs(orient[:, None] - orient[None, :]) % N_ORIENT
    odiff = np.minimum(odiff, N_ORIENT - odiff)
    compat = (
        (comp[:, None] == comp[None, :])
        & (dist <= link_range)
        & (odiff <= 3)
        & ~np.eye(n, dtype=bool)
    )

    proposed: set[tuple[int, int]] = set()
    for i in range(n):
        cand = np.nonzero(compat[i])[0]
        if len(cand) == 0:
            continue
        along = diff[cand, i] @ tangent[i]  # displacement i -> j along i's tangent
        for side in (1.0, -1.0):
            mask = side * along > 1e-9
            if not mask.any():
                continue
            side_cand = cand[mask]
            order = np.lexsort((side_cand, dist[i, side_cand]))
            for j in side_cand[order[:2]]:
                proposed.add((min(i, int(j)), max(i, int(j))))

    parent = list(range(n))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    deg = [0] * n
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in sorted(proposed, key=lambda e: (dist[e[0], e[1]], e)):
        if deg[a] >= 2 or deg[b] >= 2:
            continue
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        parent[ra] = rb
        deg[a] += 1
        deg[b] += 1
        adj[a].append(b)
        adj[b].append(a)

    def key(a):
        return (pts[a].y, pts[a].x)

    seen = [False] * n
    chains: list[list[int]] = []
    closed: list[bool] = []
    for start in sorted(range(n), key=lambda a: (deg[a] != 1, key(a))):
        if seen[start]:
            continue
        chain = [start]
        seen[start] = True
        cur, prev = start, -1
        while True:
            nxt = [v for v in adj[cur] if v != prev and not seen[v]]
            if not nxt:
                break
            nxt = min(nxt, key=key)
            chain.append(nxt)
            seen[nxt] = True
            prev, cur = cur, nxt
        is_closed = (
            len(chain) >= 6
            and comp[chain[0]] == comp[chain[-1]]
            and dist[chain[0], chain[-1]] <= link_range
        )
        chains.append(chain)
        closed.append(is_closed)
    return chains, closed


# ---------------------------------------------------------------------------
# deformation bound and model construction

def _dijkstra_bound(adj: dict[int, list[tuple[int, int]]], i: int, j: int) -> float:
    if i == j:
        return 0.0
    dist = {i: 0.0}
    heap = [(0.0, i)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == j:
            return d
        if d > dist.get(u, INF_BOUND):
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, INF_BOUND):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return INF_BOUND


def deformation_bound(model: CharacterModel, i: int, j: int) -> float:
    """Slack in the relative position of pools i and j permitted by the current
    constraints: the minimum total perturbation radius over connecting paths.
    Disconnected pairs return inf.
    """
    return _dijkstra_bound(model.adjacency(), i, j)


def build_model(
    label: str,
    font_id: str,
    landmarks: LandmarkSet,
    edges: OrientedEdgeMap,
    params: BuildParams | None = None,
) -> CharacterModel:
    """Build one character model from a glyph's landmarks.

    Contour constraints join chain-adjacent landmark pairs. Distant constraints
    are then added greedily, shortest pair first, wherever the graph currently
    lets a pair deform more than gamma times what a direct constraint would
    allow. This also connects disjoint contours, since a disconnected pair has
    infinite slack.
    """
    params = params or BuildParams()
    pts = landmarks.landmarks
    if len(pts) < 2:
        raise InvalidInputError(f"need >= 2 landmarks, got {len(pts)}")
    chains, closed = trace_contours(landmarks, edges)
    pos = landmarks.positions()

    def dist(a, b):
        return float(np.hypot(*(pos[a] - pos[b])))

    constraints: list[LateralConstraint] = []
    seen_pairs: set[tuple[int, int]] = set()
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(pts))}

    def add(a, b, kind):
        a, b = min(a, b), max(a, b)
        if (a, b) in seen_pairs:
            return
        r = params.radius_for(dist(a, b))
        seen_pairs.add((a, b))
        constraints.append(LateralConstraint(a=a, b=b, radius=r, kind=kind))
        adj[a].append((b, r))
        adj[b].append((a, r))

    for chain, is_closed in zip(chains, closed):
        for a, b in zip(chain, chain[1:]):
            add(a, b, CONTOUR)
        if is_closed and len(chain) >= 3:
            add(chain[0], chain[-1], CONTOUR)

    n = len(pts)
    pairs = sorted(
        ((a, b) for a in range(n) for b in range(a + 1, n)),
        key=lambda p: (dist(*p), p),
    )
    for a, b in pairs:
        if (a, b) in seen_pairs:
            continue
        allowed = params.radius_for(dist(a, b))
        if _dijkstra_bound(adj, a, b) > params.gamma * allowed:
            add(a, b, DISTANT)

    model = CharacterModel(
        label=label,
        font_id=font_id,
        pools=[PoolVariable(landmark=p, window=params.pool_window) for p in pts],
        constraints=constraints,
        contours=chains,
        contour_closed=closed,
        normalized_height=params.normalized_height,
    )
    assert model.is_connected()
    return model


def model_from_image(label: str, font_id: str, image: np.ndarray, params: BuildParams | None = None) -> CharacterModel:
    """Convenience path: detect edges, sparsify, build."""
    params = params or BuildParams()
    emap = detect_edges(image, threshold=params.edge_threshold)
    lms = sparsify_landmarks(emap, params.suppression_radius)
    model = build_model(label, font_id, lms, emap, params)
    model.normalized_height = image.shape[0]
    return model


# ---------------------------------------------------------------------------
# bank serialization (GLYPHBANK v1)

def save_bank(path, bank: ModelBank) -> None:
    lines = ["GLYPHBANK v1"]
    for key, value in sorted(bank.build_params.to_dict().items()):
        lines.append(f"param {key} {value}")
    for m in bank.models:
        lines.append(
            f"model {m.label} {m.font_id} {m.normalized_height} "
            f"{len(m.pools)} {len(m.constraints)} {len(m.contours)}"
        )
        for p in m.pools:
            lines.append(f"pool {p.landmark.x} {p.landmark.y} {p.landmark.orientation} {p.window}")
        for c in m.constraints:
            lines.append(f"constraint {c.a} {c.b} {c.radius} {c.kind}")
        for chain, is_closed in zip(m.contours, m.contour_closed):
            tag = "closed" if is_closed else "open"
            lines.append("contour " + tag + " " + " ".join(str(i) for i in chain))
        lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_param(value: str):
    if value == "None":
        return None
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def load_bank(path) -> ModelBank:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "GLYPHBANK v1":
        raise InvalidInputError("not a GLYPHBANK v1 file")
    params_kw: dict = {}
    models: list[CharacterModel] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "param":
            params_kw[parts[1]] = _parse_param(parts[2])
            i += 1
        elif parts[0] == "model":
            label, font_id = parts[1], parts[2]
            height, npools, ncons, nchains = map(int, parts[3:7])
            i += 1
            pools = []
            for _ in range(npools):
                x, y, orient, window = map(int, lines[i].split()[1:])
                pools.append(PoolVariable(Landmark(x=x, y=y, orientation=orient), window=window))
                i += 1
            constraints = []
            for _ in range(ncons):
                toks = lines[i].split()
                constraints.append(
                    LateralConstraint(a=int(toks[1]), b=int(toks[2]), radius=int(toks[3]), kind=toks[4])
                )
                i += 1
            chains, closed = [], []
            for _ in range(nchains):
                toks = lines[i].split()
                closed.append(toks[1] == "closed")
                chains.append([int(t) for t in toks[2:]])
                i += 1
            if lines[i] != "end":
                raise InvalidInputError(f"bank parse error near line {i + 1}")
            i += 1
            models.append(
                CharacterModel(
                    label=label,
                    font_id=font_id,
                    pools=pools,
                    constraints=constraints,
                    contours=chains,
                    contour_closed=closed,
                    normalized_height=height,
                )
            )
        else:
            raise InvalidInputError(f"unexpected line in bank file: {lines[i]!r}")
    return ModelBank(models=models, build_params=BuildParams(**params_kw))
