"""Oriented edge detection and landmark sparsification.

Images are uint8 grayscale arrays indexed [y, x]. Orientation is quantized into
16 bins over the full 360 degrees of edge direction (polarity is part of the
bin): bin k means the edge tangent points along k*22.5 degrees, with the bright
side on the left of the tangent. Inverting image polarity therefore flips the
winning bin by 8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

N_ORIENT = 16
BIN_DEGREES = 360.0 / N_ORIENT

DEFAULT_SIGMA = 1.5
DEFAULT_KERNEL_SIZE = 9
DEFAULT_THRESHOLD_FRAC = 0.10
DEFAULT_SUPPRESSION_RADIUS = 3.0


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class Landmark:
    x: int
    y: int
    orientation: int  # bin index in [0, 16)


@dataclass
class LandmarkSet:
    landmarks: list[Landmark]
    suppression_radius: float

    def __len__(self) -> int:
        return len(self.landmarks)

    def positions(self) -> np.ndarray:
        """(n, 2) array of (x, y)."""
        return np.array([[p.x, p.y] for p in self.landmarks], dtype=float).reshape(-1, 2)


@dataclass
class OrientedEdgeMap:
    """Winner-take-all oriented edge map: at most one orientation per pixel."""

    orientation: np.ndarray  # int16 (h, w), -1 where inactive
    magnitude: np.ndarray    # float32 (h, w), 0 where inactive

    @property
    def shape(self) -> tuple[int, int]:
        return self.orientation.shape

    @property
    def active(self) -> np.ndarray:
        return self.orientation >= 0

    def match_map(self, orientation: int, tolerance: int = 1) -> np.ndarray:
        """Boolean map of active pixels within +-tolerance bins of orientation."""
        diff = np.abs(self.orientation - orientation) % N_ORIENT
        diff = np.minimum(diff, N_ORIENT - diff)
        return self.active & (diff <= tolerance)


def oriented_kernel_bank(sigma: float = DEFAULT_SIGMA, size: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """(16, size, size) odd derivative-of-Gaussian kernels.

    Kernel k gives its strongest positive response to a step edge whose tangent
    runs along k*22.5 degrees (gradient at k*22.5 - 90). Kernel k+8 is the
    negation of kernel k.
    """
    half = size // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
    g = np.exp(-(xs**2 + ys**2) / (2.0 * sigma**2))
    bank = np.empty((N_ORIENT, size, size))
    for k in range(N_ORIENT):
        grad = np.deg2rad(k * BIN_DEGREES - 90.0)
        u = np.cos(grad) * xs + np.sin(grad) * ys
        kern = u * g
        kern -= kern.mean()
        bank[k] = kern / np.abs(kern).sum()
    return bank


def max_filter_response(bank: np.ndarray) -> float:
    """Largest possible response of any kernel on an ideal 0/255 step."""
    return float(np.clip(bank[0], 0.0, None).sum() * 255.0)


def detect_edges(
    image: np.ndarray,
    threshold: float | None = None,
    sigma: float = DEFAULT_SIGMA,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
) -> OrientedEdgeMap:
    """Winner-take-all over 16 oriented derivative filters.

    threshold defaults to 10% of the maximum possible filter response; pixels
    whose winning magnitude falls below it stay inactive.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.shape[0] < 3 or image.shape[1] < 3:
        raise InvalidInputError(f"degenerate image shape {image.shape}")
    bank = oriented_kernel_bank(sigma, kernel_size)
    if threshold is None:
        threshold = DEFAULT_THRESHOLD_FRAC * max_filter_response(bank)
    # kernels k and k+8 are negations; convolve once per pair
    responses = np.empty((N_ORIENT,) + image.shape)
    for k in range(N_ORIENT // 2):
        r = ndimage.correlate(image, bank[k], mode="reflect")
        responses[k] = r
        responses[k + N_ORIENT // 2] = -r
    winner = np.argmax(responses, axis=0)
    magnitude = np.take_along_axis(responses, winner[None], axis=0)[0]
    active = magnitude >= threshold
    orientation = np.where(active, winner, -1).astype(np.int16)
    magnitude = np.where(active, magnitude, 0.0).astype(np.float32)
    return OrientedEdgeMap(orientation=orientation, magnitude=magnitude)


def sparsify_landmarks(edges: OrientedEdgeMap, radius: float = DEFAULT_SUPPRESSION_RADIUS) -> LandmarkSet:
    """Greedy sparsification: keep the strongest active pixel, drop all active
    pixels strictly within `radius` of it (Euclidean), repeat.

    Ties in magnitude break by row-major (y, x), so the result is deterministic.
    """
    if radius < 1:
        raise InvalidInputError(f"radius must be >= 1, got {radius}")
    ys, xs = np.nonzero(edges.active)
    if len(ys) == 0:
        return LandmarkSet([], radius)
    mags = edges.magnitude[ys, xs]
    order = np.lexsort((xs, ys, -mags))
    ys, xs = ys[order], xs[order]
    kept_xy: list[tuple[int, int]] = []
    kept: list[Landmark] = []
    r2 = radius * radius
    alive = np.ones(len(ys), dtype=bool)
    for i in range(len(ys)):
        if not alive[i]:
            continue
        x, y = int(xs[i]), int(ys[i])
        kept_xy.append((x, y))
        kept.append(Landmark(x=x, y=y, orientation=int(edges.orientation[y, x])))
        d2 = (xs - x) ** 2 + (ys - y) ** 2
        alive &= d2 >= r2
        alive[i] = False
    return LandmarkSet(kept, radius)


def write_edge_map(path, edges: OrientedEdgeMap) -> None:
    """Debug dump: header with dimensions, then `x y orientation magnitude` lines."""
    h, w = edges.shape
    ys, xs = np.nonzero(edges.active)
    with open(path, "w") as fh:
        fh.write(f"EDGEMAP v1 {w} {h}\n")
        for y, x in zip(ys, xs):
            fh.write(f"{x} {y} {edges.orientation[y, x]} {edges.magnitude[y, x]:.4f}\n")


def write_landmarks(path, landmarks: LandmarkSet, shape: tuple[int, int]) -> None:
    h, w = shape
    with open(path, "w") as fh:
        fh.write(f"LANDMARKS v1 {w} {h} {landmarks.suppression_radius}\n")
        for p in landmarks.landmarks:
            fh.write(f"{p.x} {p.y} {p.orientation}\n")
