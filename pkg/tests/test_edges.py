import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapereader.edges import (
    N_ORIENT,
    InvalidInputError,
    OrientedEdgeMap,
    detect_edges,
    max_filter_response,
    oriented_kernel_bank,
    sparsify_landmarks,
)


def _step_image(size=33):
    """Vertical step: dark left half, bright right half."""
    img = np.zeros((size, size), dtype=np.uint8)
    img[:, size // 2 :] = 255
    return img


def test_kernel_bank_negation_pairs():
    bank = oriented_kernel_bank()
    assert bank.shape == (N_ORIENT, 9, 9)
    for k in range(N_ORIENT // 2):
        assert np.allclose(bank[k + N_ORIENT // 2], -bank[k])
    assert np.allclose(bank.sum(axis=(1, 2)), 0.0, atol=1e-12)


def test_winner_matches_direct_correlation_oracle():
    # recompute the winning bin at one pixel straight from the kernel bank
    img = _step_image().astype(float)
    bank = oriented_kernel_bank()
    y = x = img.shape[0] // 2
    patch = img[y - 4 : y + 5, x - 4 : x + 5]
    responses = [float((bank[k] * patch).sum()) for k in range(N_ORIENT)]
    expected = int(np.argmax(responses))
    emap = detect_edges(img)
    assert emap.orientation[y, x] == expected


def test_rotation_by_90_shifts_bin_by_4():
    img = _step_image()
    a = detect_edges(img)
    b = detect_edges(np.rot90(img))
    y = x = img.shape[0] // 2
    ka, kb = int(a.orientation[y, x]), int(b.orientation[y, x])
    assert ka >= 0 and kb >= 0
    assert (ka - kb) % N_ORIENT == 4 or (kb - ka) % N_ORIENT == 4


def test_polarity_inversion_flips_bin_by_8():
    img = _step_image()
    a = detect_edges(img)
    b = detect_edges(255 - img)
    both = a.active & b.active
    ys, xs = np.nonzero(both)
    assert len(ys) > 0
    diff = (a.orientation[ys, xs] - b.orientation[ys, xs]) % N_ORIENT
    assert np.all(diff == N_ORIENT // 2)


def test_flat_image_has_no_edges():
    emap = detect_edges(np.full((20, 20), 128, dtype=np.uint8))
    assert not emap.active.any()


def test_threshold_gates_weak_edges():
    img = np.zeros((21, 21), dtype=np.uint8)
    img[:, 10:] = 20  # weak step, well under 10% of the ideal response
    assert not detect_edges(img).active.any()
    assert detect_edges(img, threshold=1.0).active.any()


def test_degenerate_input_rejected():
    with pytest.raises(InvalidInputError):
        detect_edges(np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        detect_edges(np.zeros(12))


def test_max_filter_response_positive():
    assert max_filter_response(oriented_kernel_bank()) > 0


def _sparsify_oracle(emap, radius):
    """Independent greedy reimplementation: strongest first, (y, x) ties."""
    cells = [
        (-emap.magnitude[y, x], y, x)
        for y, x in zip(*np.nonzero(emap.active))
    ]
    cells.sort()
    kept = []
    for _, y, x in cells:
        if all((x - kx) ** 2 + (y - ky) ** 2 >= radius * radius for kx, ky in kept):
            kept.append((x, y))
    return kept


def _random_edge_map(rng, h=18, w=18, density=0.3):
    active = rng.random((h, w)) < density
    orientation = np.where(active, rng.integers(0, N_ORIENT, (h, w)), -1).astype(np.int16)
    magnitude = np.where(active, rng.random((h, w)).astype(np.float32) * 10, 0.0).astype(np.float32)
    return OrientedEdgeMap(orientation=orientation, magnitude=magnitude)


@pytest.mark.parametrize("seed", range(8))
def test_sparsify_matches_greedy_oracle(seed):
    rng = np.random.default_rng(seed)
    emap = _random_edge_map(rng)
    got = sparsify_landmarks(emap, radius=3.0)
    expected = _sparsify_oracle(emap, 3.0)
    assert [(p.x, p.y) for p in got.landmarks] == expected
    for p in got.landmarks:
        assert p.orientation == emap.orientation[p.y, p.x]


def test_sparsify_radius_below_one_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidInputError):
        sparsify_landmarks(_random_edge_map(rng), radius=0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), radius=st.floats(1.0, 6.0))
def test_sparsify_separation_and_coverage(seed, radius):
    rng = np.random.default_rng(seed)
    emap = _random_edge_map(rng)
    lms = sparsify_landmarks(emap, radius=radius).landmarks
    pos = [(p.x, p.y) for p in lms]
    # pairwise separation
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            dx, dy = pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]
            assert dx * dx + dy * dy >= radius * radius
    # every active pixel is within radius of some kept landmark (maximality)
    for y, x in zip(*np.nonzero(emap.active)):
        assert any((x - px) ** 2 + (y - py) ** 2 < radius * radius for px, py in pos) or (
            (x, y) in pos
        )
    # the globally strongest active pixel always survives
    if emap.active.any():
        ys, xs = np.nonzero(emap.active)
        k = int(np.lexsort((xs, ys, -emap.magnitude[ys, xs]))[0])
        assert (int(xs[k]), int(ys[k])) in pos


def test_match_map_tolerance():
    rng = np.random.default_rng(1)
    emap = _random_edge_map(rng)
    got = emap.match_map(3, tolerance=1)
    ys, xs = np.nonzero(got)
    for y, x in zip(ys, xs):
        d = abs(int(emap.orientation[y, x]) - 3) % N_ORIENT
        assert min(d, N_ORIENT - d) <= 1
    # wrap-around: bin 15 matches bin 0 at tolerance 1
    wrap = OrientedEdgeMap(
        orientation=np.array([[15]], dtype=np.int16),
        magnitude=np.ones((1, 1), dtype=np.float32),
    )
    assert wrap.match_map(0, tolerance=1)[0, 0]
