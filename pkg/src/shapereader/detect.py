"""Character instance detection and segmentation.

The forward pass relaxes a model's constraint graph to its minimum spanning
tree and runs one leaves-to-root sweep of max-product belief propagation with
image-wide pooling, producing a per-pixel activation heatmap for the root pool.
This tree score always overestimates the score attainable in the full loopy
graph. Strong heatmap peaks are backtraced: loopy max-product BP in the full
constraint graph with the root clamped near the anchor, followed by a decode
that satisfies every lateral constraint exactly and yields the segmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.draw import line as draw_line
from skimage.draw import polygon as draw_polygon
from skimage.filters import threshold_otsu
from skimage.morphology import binary_closing, binary_dilation, disk

from .edges import InvalidInputError, OrientedEdgeMap, detect_edges
from .shapes import CharacterModel, ModelBank, _dijkstra_bound

NEG = -50.0  # soft "infeasible" log-score; hard feasibility is enforced at decode
ORIENT_TOLERANCE = 1

DEFAULT_FORWARD_MIN_SCORE = 0.6
DEFAULT_THETA_BACKTRACE = 0.7
DEFAULT_NMS_RADIUS_FRAC = 0.25
DEFAULT_ANCHORS_PER_MODEL = 5
DEFAULT_BP_ITERATIONS = 4
DEFAULT_BP_DAMPING = 0.5
BP_TOLERANCE = 1e-3
DEFAULT_MERGE_IOU = 0.5


@dataclass
class SpanningTreeModel:
    model: CharacterModel
    root: int
    parent: list[int]           # parent[pool] = parent index, -1 at root
    order: list[int]            # BFS order from root
    edge_radius: dict[tuple[int, int], int]  # (child, parent) -> radius


@dataclass
class CandidateDetection:
    label: str
    score: float
    anchor: tuple[int, int]       # (x, y) in original image coordinates
    scale: int
    positions: np.ndarray         # (n, 2) decoded (x, y) per pool
    polylines: list[np.ndarray]   # one (k, 2) array per contour
    closed: list[bool]
    bbox: tuple[float, float, float, float]  # x0, y0, x1, y1 inclusive
    height: float
    mean_color: float = 0.0
    low_confidence: bool = False
    font_id: str = ""

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))


# ---------------------------------------------------------------------------
# spanning tree

def to_spanning_tree(model: CharacterModel) -> SpanningTreeModel:
    """MST over the constraint graph, weighted by pixel distance between pools.

    Ties break by (weight, min index, max index). Root is the pool nearest the
    model centroid.
    """
    n = len(model.pools)
    pos = model.positions()
    weighted = []
    for c in model.constraints:
        a, b = min(c.a, c.b), max(c.a, c.b)
        w = float(np.hypot(*(pos[a] - pos[b])))
        weighted.append((w, a, b, c.radius))
    weighted.sort(key=lambda t: t[:3])

    parent_dsu = list(range(n))

    def find(u):
        while parent_dsu[u] != u:
            parent_dsu[u] = parent_dsu[parent_dsu[u]]
            u = parent_dsu[u]
        return u

    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    count = 0
    for w, a, b, r in weighted:
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        parent_dsu[ra] = rb
        adj[a].append((b, r))
        adj[b].append((a, r))
        count += 1
    if count != n - 1:
        raise InvalidInputError("constraint graph is disconnected")

    centroid = pos.mean(axis=0)
    root = int(np.lexsort((np.arange(n), np.hypot(*(pos - centroid).T)))[0])

    parent = [-1] * n
    order = [root]
    seen = {root}
    edge_radius: dict[tuple[int, int], int] = {}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, r in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                edge_radius[(v, u)] = r
                order.append(v)
    return SpanningTreeModel(model=model, root=root, parent=parent, order=order, edge_radius=edge_radius)


# ---------------------------------------------------------------------------
# forward pass

def _shift2d(arr: np.ndarray, dx: int, dy: int, fill: float = 0.0) -> np.ndarray:
    """out[y, x] = arr[y + dy, x + dx], out-of-range positions get `fill`."""
    h, w = arr.shape
    out = np.full_like(arr, fill)
    ys0, ys1 = max(0, -dy), min(h, h - dy)
    xs0, xs1 = max(0, -dx), min(w, w - dx)
    if ys0 < ys1 and xs0 < xs1:
        out[ys0:ys1, xs0:xs1] = arr[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
    return out


def _unary_maps(model: CharacterModel, edges: OrientedEdgeMap) -> list[np.ndarray]:
    """Per-pool 0/1 evidence: an active edge within +-1 orientation bin."""
    cache: dict[int, np.ndarray] = {}
    maps = []
    for p in model.pools:
        o = p.landmark.orientation
        if o not in cache:
            cache[o] = edges.match_map(o, ORIENT_TOLERANCE).astype(np.float32)
        maps.append(cache[o])
    return maps


def forward_pass(
    tree: SpanningTreeModel, edges: OrientedEdgeMap, window: int | None = None
) -> np.ndarray:
    """Activation heatmap: heat[y, x] = best matched-landmark fraction of any
    tree-feasible configuration with the root pool at (x, y).

    With window=None the pooling window is the entire image (single sweep of
    max-product message passing, sliding-window maxima). With an integer window
    each pool's states are restricted to a (2*window+1)^2 box around its
    anchor-relative model position; this path is exact but slow and is meant
    for small test problems.
    """
    model = tree.model
    if window is not None:
        return _forward_windowed(tree, edges, window)
    unary = _unary_maps(model, edges)
    pos = model.positions()
    n = len(model.pools)
    belief = [None] * n
    for u in reversed(tree.order):
        b = unary[u].copy()
        for v in tree.order:
            if tree.parent[v] == u:
                b += belief[v]
        p = tree.parent[u]
        if p >= 0:
            r = tree.edge_radius[(u, p)]
            m = ndimage.maximum_filter(b, size=2 * r + 1, mode="constant", cval=0.0)
            d = pos[u] - pos[p]
            b = _shift2d(m, int(round(d[0])), int(round(d[1])), fill=0.0)
        belief[u] = b
    heat = belief[tree.root] / float(n)
    return np.clip(heat, 0.0, 1.0)


def _forward_windowed(tree: SpanningTreeModel, edges: OrientedEdgeMap, window: int) -> np.ndarray:
    model = tree.model
    h, w = edges.shape
    pos = model.positions().round().astype(int)
    offsets = pos - pos[tree.root]
    unary = _unary_maps(model, edges)
    n = len(model.pools)
    heat = np.zeros((h, w), dtype=np.float32)
    for ay in range(h):
        for ax in range(w):
            heat[ay, ax] = _tree_score_at(tree, unary, offsets, (ax, ay), window) / n
    return np.clip(heat, 0.0, 1.0)


def _pool_states(offset, anchor, window, shape):
    h, w = shape
    cx, cy = anchor[0] + offset[0], anchor[1] + offset[1]
    xs = range(max(0, cx - window), min(w, cx + window + 1))
    ys = range(max(0, cy - window), min(h, cy + window + 1))
    return [(x, y) for y in ys for x in xs]


def _tree_score_at(tree, unary, offsets, anchor, window) -> float:
    """Exact DP over windowed states on the spanning tree; root fixed near anchor."""
    model = tree.model
    shape = unary[0].shape
    states = [_pool_states(offsets[i], anchor, window, shape) for i in range(len(model.pools))]
    msg_to: dict[int, list[np.ndarray]] = {i: [] for i in range(len(model.pools))}
    for u in reversed(tree.order):
        su = states[u]
        b = np.array([unary[u][y, x] for x, y in su]) if su else np.array([])
        for m in msg_to[u]:
            b = b + m
        p = tree.parent[u]
        if p < 0:
            root_states = [(x, y) for x, y in su if x == anchor[0] and y == anchor[1]]
            if not root_states or len(b) == 0:
                return NEG
            idx = su.index(root_states[0])
            return float(b[idx])
        r = tree.edge_radius[(u, p)]
        d = offsets[u] - offsets[p]
        sp = states[p]
        out = np.full(len(sp), NEG)
        for j, (px, py) in enumerate(sp):
            best = NEG
            for i, (ux, uy) in enumerate(su):
                if abs(ux - px - d[0]) <= r and abs(uy - py - d[1]) <= r:
                    if len(b) and b[i] > best:
                        best = b[i]
            out[j] = best
        msg_to[p].append(out)
    raise AssertionError("tree order did not end at root")


# ---------------------------------------------------------------------------
# non-maximum suppression

def nonmax_suppress(heatmap: np.ndarray, radius: float, min_score: float) -> list[tuple[int, int, float]]:
    """Greedy strongest-first peak picking with a Euclidean suppression disk.

    Returns (x, y, score) tuples; ties break by (y, x).
    """
    if radius < 1:
        raise InvalidInputError(f"radius must be >= 1, got {radius}")
    ys, xs = np.nonzero(heatmap >= min_score)
    if len(ys) == 0:
        return []
    scores = heatmap[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    ys, xs, scores = ys[order], xs[order], scores[order]
    kept: list[tuple[int, int, float]] = []
    alive = np.ones(len(ys), dtype=bool)
    r2 = radius * radius
    for i in range(len(ys)):
        if not alive[i]:
            continue
        x, y, s = int(xs[i]), int(ys[i]), float(scores[i])
        kept.append((x, y, s))
        d2 = (xs - x) ** 2 + (ys - y) ** 2
        alive &= d2 > r2
    return kept


def refine_anchor(heatmap: np.ndarray, x: int, y: int, radius: float) -> tuple[int, int]:
    """Move an anchor to the center of its heatmap plateau.

    Pooling slack makes the forward score constant over a box of root positions
    around the true placement; picking a plateau corner starves the backtrace's
    root clamp. Among cells within `radius` matching the peak value, return the
    one nearest their centroid.
    """
    h, w = heatmap.shape
    r = int(math.ceil(radius))
    y0, y1 = max(0, y - r), min(h, y + r + 1)
    x0, x1 = max(0, x - r), min(w, x + r + 1)
    view = heatmap[y0:y1, x0:x1]
    yy, xx = np.nonzero(view >= heatmap[y, x] - 1e-6)
    keep = (xx + x0 - x) ** 2 + (yy + y0 - y) ** 2 <= radius * radius
    xs, ys = xx[keep] + x0, yy[keep] + y0
    if len(xs) == 0:
        return x, y
    cx, cy = xs.mean(), ys.mean()
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    k = int(np.lexsort((xs, ys, d2))[0])
    return int(xs[k]), int(ys[k])


# ---------------------------------------------------------------------------
# backtracing

def _constraint_depths(model: CharacterModel, root: int) -> list[int]:
    adj = model.adjacency()
    depth = [-1] * len(model.pools)
    depth[root] = 0
    queue = [root]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        for v, _ in sorted(adj[u]):
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                queue.append(v)
    return depth


def backtrace(
    model: CharacterModel,
    edges: OrientedEdgeMap,
    anchor: tuple[int, int],
    theta: float = DEFAULT_THETA_BACKTRACE,
    iterations: int = DEFAULT_BP_ITERATIONS,
    damping: float = DEFAULT_BP_DAMPING,
    clamp: int | None = None,
    tree: SpanningTreeModel | None = None,
) -> CandidateDetection | None:
    """Loopy max-product MAP in the full constraint graph, root clamped near the
    anchor. Returns None when the score falls below theta or no constraint-
    feasible decode exists. The decoded positions satisfy every lateral
    constraint exactly.
    """
    tree = tree or to_spanning_tree(model)
    root = tree.root
    if clamp is None:
        # pooling slack flattens the forward peak into a plateau; allow the
        # root to travel that far from the reported anchor
        clamp = max(2, int(round(0.15 * model.normalized_height)))
    n = len(model.pools)
    pos = model.positions().round().astype(int)
    offsets = pos - pos[root]

    # crop a working window: pool i can stray from anchor+offset_i by at most
    # the root-to-i slack, capped to keep the crop small
    adj = model.adjacency()
    cap = max(12.0, 0.35 * model.normalized_height)
    slack = [min(_dijkstra_bound(adj, root, i), cap) for i in range(n)]
    h, w = edges.shape
    ax, ay = anchor
    x0 = max(0, min(int(ax + offsets[i][0] - slack[i]) for i in range(n)))
    x1 = min(w, max(int(ax + offsets[i][0] + slack[i]) + 1 for i in range(n)))
    y0 = max(0, min(int(ay + offsets[i][1] - slack[i]) for i in range(n)))
    y1 = min(h, max(int(ay + offsets[i][1] + slack[i]) + 1 for i in range(n)))
    if x0 >= x1 or y0 >= y1:
        return None
    sub = OrientedEdgeMap(
        orientation=edges.orientation[y0:y1, x0:x1], magnitude=edges.magnitude[y0:y1, x0:x1]
    )
    cax, cay = ax - x0, ay - y0

    unary = [u.copy() for u in _unary_maps(model, sub)]
    raw_root_unary = unary[root].copy()
    mask = np.full(sub.shape, NEG, dtype=np.float32)
    my0, my1 = max(0, cay - clamp), min(sub.shape[0], cay + clamp + 1)
    mx0, mx1 = max(0, cax - clamp), min(sub.shape[1], cax + clamp + 1)
    if my0 >= my1 or mx0 >= mx1:
        return None
    mask[my0:my1, mx0:mx1] = 0.0
    unary[root] = unary[root] + mask

    depth = _constraint_depths(model, root)
    directed = []
    for c in model.constraints:
        a, b = c.a, c.b
        lo, hi = (a, b) if (depth[a], a) <= (depth[b], b) else (b, a)
        directed.append((lo, hi, c.radius))  # sweep down: lo -> hi
    directed.sort(key=lambda t: (depth[t[0]], t[0], t[1]))

    msgs: dict[tuple[int, int], np.ndarray] = {}
    belief = [u.astype(np.float32).copy() for u in unary]
    zeros = np.zeros(sub.shape, dtype=np.float32)
    for a, b, _ in directed:
        msgs[(a, b)] = zeros.copy()
        msgs[(b, a)] = zeros.copy()

    def update(a, b, r):
        d = offsets[a] - offsets[b]
        excl = belief[a] - msgs[(b, a)]
        m = ndimage.maximum_filter(excl, size=2 * r + 1, mode="constant", cval=NEG)
        raw = _shift2d(m, int(d[0]), int(d[1]), fill=NEG)
        raw -= raw.max()
        raw = np.maximum(raw, NEG)
        new = damping * msgs[(a, b)] + (1.0 - damping) * raw
        delta = new - msgs[(a, b)]
        msgs[(a, b)] = new
        belief[b] += delta
        return float(np.abs(delta).max())

    converged = False
    for _ in range(iterations):
        change = 0.0
        for a, b, r in directed:
            change = max(change, update(a, b, r))
        for a, b, r in reversed(directed):
            change = max(change, update(b, a, r))
        if change < BP_TOLERANCE:
            converged = True
            break

    # decode: start from the rigid anchor-aligned placement (trivially
    # constraint-feasible), then coordinate-ascent each pool to the best belief
    # inside the box its decoded neighbors allow — feasibility is invariant
    sh, sw = sub.shape
    incident: list[list] = [[] for _ in range(n)]
    for c in model.constraints:
        incident[c.a].append((c.b, c.radius))
        incident[c.b].append((c.a, c.radius))

    def best_translation(pts, rng):
        # a global translation preserves every constraint; matched counts for
        # all shifts at once: acc[dy, dx] = #pools with evidence at pts + (dx, dy)
        size = 2 * rng + 1
        acc = np.zeros((size, size))
        for i in range(n):
            u = raw_root_unary if i == root else unary[i]
            x, y = int(pts[i][0]), int(pts[i][1])
            win = np.zeros((size, size), dtype=bool)
            ys0, ys1 = max(0, y - rng), min(sh, y + rng + 1)
            xs0, xs1 = max(0, x - rng), min(sw, x + rng + 1)
            if ys0 < ys1 and xs0 < xs1:
                win[ys0 - (y - rng) : ys1 - (y - rng), xs0 - (x - rng) : xs1 - (x - rng)] = (
                    u[ys0:ys1, xs0:xs1] > 0
                )
            acc += win
        dgrid = np.arange(-rng, rng + 1)
        ok_x = (pts[:, 0].min() + dgrid >= 0) & (pts[:, 0].max() + dgrid < sw)
        ok_y = (pts[:, 1].min() + dgrid >= 0) & (pts[:, 1].max() + dgrid < sh)
        acc[~ok_y, :] = -1.0
        acc[:, ~ok_x] = -1.0
        dy, dx = np.meshgrid(dgrid, dgrid, indexing="ij")
        flat = np.lexsort(
            (dx.ravel(), dy.ravel(), (dx * dx + dy * dy).ravel(), -acc.ravel())
        )[0]
        sy, sx = int(dy.ravel()[flat]), int(dx.ravel()[flat])
        return pts + np.array([sx, sy]), int(acc.ravel()[flat])

    order = sorted(range(n), key=lambda i: (depth[i], i))

    def feasible(pts):
        for c in model.constraints:
            da = pts[c.a] - pts[c.b]
            dm = offsets[c.a] - offsets[c.b]
            if max(abs(int(da[0] - dm[0])), abs(int(da[1] - dm[1]))) > c.radius:
                return False
        return True

    def decode_from(init):
        pts, rigid_matched = best_translation(init, max(3, 2 * clamp))
        rigid = pts.copy()
        for _ in range(5):
            moved = False
            for i in order:
                bx0, bx1, by0, by1 = 0, sw, 0, sh
                if i == root:
                    bx0, bx1 = mx0, mx1
                    by0, by1 = my0, my1
                for j, r in incident[i]:
                    cx = pts[j][0] + (offsets[i][0] - offsets[j][0])
                    cy = pts[j][1] + (offsets[i][1] - offsets[j][1])
                    bx0, bx1 = max(bx0, cx - r), min(bx1, cx + r + 1)
                    by0, by1 = max(by0, cy - r), min(by1, cy + r + 1)
                if bx0 >= bx1 or by0 >= by1:
                    continue  # can happen when the init was shifted past the clamp
                view = belief[i][by0:by1, bx0:bx1]
                yy, xx = np.nonzero(view >= view.max() - 1e-6)
                xs, ys = bx0 + xx, by0 + yy
                d2 = (xs - pts[i][0]) ** 2 + (ys - pts[i][1]) ** 2
                k = int(np.lexsort((xs, ys, d2))[0])  # plateau tie: stay close
                if (xs[k], ys[k]) != tuple(pts[i]):
                    pts[i] = (xs[k], ys[k])
                    moved = True
            if not moved:
                break
        pts, matched = best_translation(pts, 3)
        if rigid_matched > matched and feasible(rigid):
            # belief maxima sometimes sit a pixel off the evidence; the rigid
            # placement is then the better answer
            pts, matched = rigid, rigid_matched
        return pts, matched

    def try_init(init):
        # translate into the frame if it sticks out (a global shift keeps
        # every constraint satisfied); reject inits that cannot fit at all
        fit = np.array(
            [
                max(0, -init[:, 0].min()) - max(0, init[:, 0].max() - (sw - 1)),
                max(0, -init[:, 1].min()) - max(0, init[:, 1].max() - (sh - 1)),
            ]
        )
        init = init + fit
        if (
            init[:, 0].min() < 0
            or init[:, 1].min() < 0
            or init[:, 0].max() >= sw
            or init[:, 1].max() >= sh
        ):
            return None
        return decode_from(init)

    # decode from rigid inits at a few global scales: a uniformly scaled
    # placement within +-30% stays inside every constraint radius, but the
    # local ascent cannot travel that far on its own. When that falls short,
    # escalate to globally rotated inits (also radius-feasible up to +-20 deg).
    anchor_xy = np.array([cax, cay])
    decoded, matched = None, -1
    for s in (1.0, 0.85, 0.7, 1.15, 1.3):
        out = try_init(np.round(offsets * s).astype(int) + anchor_xy)
        if out is not None and out[1] > matched:
            decoded, matched = out
        if matched == n:
            break
    target = max(theta, DEFAULT_THETA_BACKTRACE) * n
    if matched < target and matched < n:
        for deg in (10, -10, 20, -20):
            a = math.radians(deg)
            rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            for s in (1.0, 0.85, 1.15):
                out = try_init(np.round(offsets @ rot.T * s).astype(int) + anchor_xy)
                if out is not None and out[1] > matched:
                    decoded, matched = out
            if matched >= target:
                break
    if decoded is None or not feasible(decoded):
        return None

    score = matched / n
    if score < theta:
        return None

    full = decoded + np.array([x0, y0])
    polylines = [full[chain].astype(float) for chain in model.contours]
    bx0f, by0f = full.min(axis=0)
    bx1f, by1f = full.max(axis=0)
    return CandidateDetection(
        label=model.label,
        score=score,
        anchor=(ax, ay),
        scale=1,
        positions=full,
        polylines=polylines,
        closed=list(model.contour_closed),
        bbox=(float(bx0f), float(by0f), float(bx1f), float(by1f)),
        height=float(by1f - by0f + 1),
        low_confidence=not converged,
        font_id=model.font_id,
    )


# ---------------------------------------------------------------------------
# segmentation masks

def detection_mask(
    det: CandidateDetection,
    shape: tuple[int, int],
    stroke_radius: int = 2,
    image: np.ndarray | None = None,
) -> np.ndarray:
    """Rasterize a detection's segmentation: closed contours are filled with the
    even-odd rule (XOR), open chains are stroked with width 2*stroke_radius,
    then the union is morphologically closed.

    Landmarks ride the edge response peak, which sits a pixel or two outside
    the ink, so the geometric region over-covers. When `image` is given the
    region is refined to the pixels closer in intensity to the stroke than to
    the local background.
    """
    h, w = shape
    canvas = np.zeros((h, w), dtype=bool)
    strokes = np.zeros((h, w), dtype=bool)
    for poly, is_closed in zip(det.polylines, det.closed):
        pts = np.asarray(poly)
        if is_closed and len(pts) >= 3:
            rr, cc = draw_polygon(pts[:, 1], pts[:, 0], shape=(h, w))
            filled = np.zeros((h, w), dtype=bool)
            filled[rr, cc] = True
            canvas ^= filled
        else:
            for (xa, ya), (xb, yb) in zip(pts[:-1], pts[1:]):
                rr, cc = draw_line(int(round(ya)), int(round(xa)), int(round(yb)), int(round(xb)))
                ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
                strokes[rr[ok], cc[ok]] = True
            if len(pts) == 1:
                xa, ya = pts[0]
                if 0 <= int(ya) < h and 0 <= int(xa) < w:
                    strokes[int(ya), int(xa)] = True
    if strokes.any():
        strokes = binary_dilation(strokes, disk(stroke_radius))
    mask = canvas | strokes
    if mask.any():
        mask = binary_closing(mask, disk(stroke_radius))
    if image is not None and mask.any():
        img = np.asarray(image, dtype=float)
        vals = img[mask]
        if vals.max() - vals.min() > 1e-9:
            t = threshold_otsu(vals)
            ring = binary_dilation(mask, disk(3)) & ~mask
            bg_level = float(np.median(img[ring])) if ring.any() else float(vals.max())
            refined = mask & ((img < t) if bg_level >= t else (img > t))
            if refined.any():
                mask = binary_closing(refined, disk(1))
    return mask


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def bbox_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax1, bx1), min(ay1, by1)
    iw, ih = max(0.0, ix1 - ix0 + 1), max(0.0, iy1 - iy0 + 1)
    inter = iw * ih
    area_a = (ax1 - ax0 + 1) * (ay1 - ay0 + 1)
    area_b = (bx1 - bx0 + 1) * (by1 - by0 + 1)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


# ---------------------------------------------------------------------------
# multi-scale orchestration

@dataclass
class DetectParams:
    forward_min_score: float = DEFAULT_FORWARD_MIN_SCORE
    theta_backtrace: float = DEFAULT_THETA_BACKTRACE
    nms_radius_frac: float = DEFAULT_NMS_RADIUS_FRAC
    anchors_per_model: int = DEFAULT_ANCHORS_PER_MODEL
    bp_iterations: int = DEFAULT_BP_ITERATIONS
    bp_damping: float = DEFAULT_BP_DAMPING
    merge_iou: float = DEFAULT_MERGE_IOU
    edge_threshold: float | None = None
    scales: tuple[int, ...] = (1, 2)


def _upscale(image: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return image
    return np.kron(image, np.ones((factor, factor), dtype=image.dtype))


def detect_multiscale(
    bank: ModelBank,
    image: np.ndarray,
    params: DetectParams | None = None,
    trees: dict | None = None,
) -> list[CandidateDetection]:
    """Run every model at every scale, map detections back to the original
    frame, and merge with label-aware NMS on bounding boxes."""
    params = params or DetectParams()
    if trees is None:
        trees = {}
    detections: list[CandidateDetection] = []
    for scale in params.scales:
        scaled = _upscale(image, scale)
        if scaled.shape[0] < 3 or scaled.shape[1] < 3:
            continue
        emap = detect_edges(scaled, threshold=params.edge_threshold)
        if not emap.active.any():
            continue
        for model in bank.models:
            key = (model.label, model.font_id)
            if key not in trees:
                trees[key] = to_spanning_tree(model)
            tree = trees[key]
            heat = forward_pass(tree, emap)
            radius = max(1.0, params.nms_radius_frac * model.normalized_height)
            anchors = nonmax_suppress(heat, radius, params.forward_min_score)
            for axy in anchors[: params.anchors_per_model]:
                det = backtrace(
                    model,
                    emap,
                    refine_anchor(heat, axy[0], axy[1], radius),
                    theta=params.theta_backtrace,
                    iterations=params.bp_iterations,
                    damping=params.bp_damping,
                    tree=tree,
                )
                if det is None:
                    continue
                det.scale = scale
                if scale != 1:
                    det.positions = (det.positions / scale).round().astype(int)
                    det.polylines = [p / scale for p in det.polylines]
                    x0, y0, x1, y1 = det.bbox
                    det.bbox = (x0 / scale, y0 / scale, x1 / scale, y1 / scale)
                    det.height = det.height / scale
                    det.anchor = (det.anchor[0] // scale, det.anchor[1] // scale)
                mask = detection_mask(det, image.shape, image=image)
                if mask.any():
                    det.mean_color = float(np.asarray(image, dtype=float)[mask].mean())
                detections.append(det)

    detections.sort(key=lambda d: (-d.score, d.label, d.bbox[1], d.bbox[0], d.font_id))
    kept: list[CandidateDetection] = []
    for det in detections:
        if any(
            k.label == det.label and bbox_iou(k.bbox, det.bbox) >= params.merge_iou for k in kept
        ):
            continue
        kept.append(det)
    kept.sort(key=lambda d: (d.center[0], d.bbox[1], d.label, -d.score))
    return kept


# ---------------------------------------------------------------------------
# detection dump format

def detections_to_text(dets: list[CandidateDetection]) -> str:
    lines = [f"DETECTIONS v1 {len(dets)}"]
    for d in dets:
        x0, y0, x1, y1 = d.bbox
        lines.append(
            f"det {d.label} {d.score:.6f} {d.scale} {d.anchor[0]} {d.anchor[1]} "
            f"{x0:.2f} {y0:.2f} {x1:.2f} {y1:.2f} {d.mean_color:.3f} {d.height:.3f} "
            f"{int(d.low_confidence)} {d.font_id or '-'} {len(d.polylines)}"
        )
        for poly, closed in zip(d.polylines, d.closed):
            tag = "closed" if closed else "open"
            coords = " ".join(f"{x:.2f} {y:.2f}" for x, y in np.asarray(poly))
            lines.append(f"poly {tag} {coords}")
    return "\n".join(lines) + "\n"


def detections_from_text(text: str) -> list[CandidateDetection]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("DETECTIONS v1"):
        raise InvalidInputError("not a DETECTIONS v1 dump")
    dets: list[CandidateDetection] = []
    i = 1
    while i < len(lines):
        toks = lines[i].split()
        if toks[0] != "det":
            raise InvalidInputError(f"unexpected line {lines[i]!r}")
        label = toks[1]
        score = float(toks[2])
        scale = int(toks[3])
        anchor = (int(toks[4]), int(toks[5]))
        bbox = tuple(float(t) for t in toks[6:10])
        mean_color = float(toks[10])
        height = float(toks[11])
        lowc = bool(int(toks[12]))
        font_id = "" if toks[13] == "-" else toks[13]
        npoly = int(toks[14])
        i += 1
        polys, closed = [], []
        for _ in range(npoly):
            ptoks = lines[i].split()
            closed.append(ptoks[1] == "closed")
            vals = [float(t) for t in ptoks[2:]]
            polys.append(np.array(vals, dtype=float).reshape(-1, 2))
            i += 1
        positions = (
            np.concatenate(polys).round().astype(int) if polys else np.zeros((0, 2), dtype=int)
        )
        dets.append(
            CandidateDetection(
                label=label,
                score=score,
                anchor=anchor,
                scale=scale,
                positions=positions,
                polylines=polys,
                closed=closed,
                bbox=bbox,
                height=height,
                mean_color=mean_color,
                low_confidence=lowc,
                font_id=font_id,
            )
        )
    return dets
