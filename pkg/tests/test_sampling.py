import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_hac
from renderwait.errors import InvalidArgument
from renderwait.imaging import Frame, SsimParams, ssim_matrix
from renderwait.sampling import Cluster, cluster_similarity, hac_sample, hac_select, medoid

RAW = SsimParams(resolution=None)


def noisy_family(rng, n, base=None, noise=6, shape=(24, 20)):
    base = rng.integers(40, 216, shape) if base is None else base
    return [
        Frame(np.clip(base + rng.integers(-noise, noise + 1, shape), 0, 255).astype(np.uint8)) for _ in range(n)
    ]


def test_single_frame_is_kept():
    f = Frame(np.zeros((16, 16), dtype=np.uint8))
    assert hac_select([f], 0.9, RAW).selected == [0]


def test_identical_frames_collapse_pairwise():
    f = Frame(np.full((16, 16), 9, dtype=np.uint8))
    # each duplicate pair yields one sample; an odd survivor is emitted last
    assert hac_select([f, f, f], 0.9, RAW).selected == [0, 2]
    assert len(hac_select([f] * 6, 0.9, RAW).selected) == 3
    assert len(hac_select([f] * 7, 0.9, RAW).selected) == 4


def test_all_dissimilar_frames_merge_into_one_sample():
    rng = np.random.default_rng(0)
    frames = [Frame(rng.integers(0, 256, (16, 16), dtype=np.uint8)) for _ in range(5)]
    sim = ssim_matrix(frames, RAW)
    assert sim[np.triu_indices(5, 1)].max() < 0.9
    res = hac_select(frames, 0.9, RAW)
    assert len(res.selected) == 1
    assert all(not emitted for *_, emitted in res.rounds)


def test_partition_invariant_over_rounds():
    rng = np.random.default_rng(1)
    frames = noisy_family(rng, 4) + noisy_family(rng, 3)
    res = hac_select(frames, 0.8, RAW)
    remaining = set(range(len(frames)))
    for a, b, _, emitted in res.rounds:
        assert set(a.members) <= remaining and set(b.members) <= remaining
        if emitted:
            remaining -= set(a.members) | set(b.members)
    assert 1 <= len(res.selected) <= len(frames)
    assert len(set(res.selected)) == len(res.selected)


def test_medoid_is_row_mean_argmax():
    rng = np.random.default_rng(2)
    frames = noisy_family(rng, 5, noise=30)
    sim = ssim_matrix(frames, RAW)
    members = (0, 2, 3)
    block = sim[np.ix_(members, members)]
    assert medoid(members, sim) == members[int(np.argmax(block.mean(axis=1)))]


def test_cluster_similarity_uses_medoids():
    rng = np.random.default_rng(3)
    frames = noisy_family(rng, 3)
    sim = ssim_matrix(frames, RAW)
    assert cluster_similarity(Cluster((0,), 0), Cluster((1,), 1), sim) == sim[0, 1]
    same = [frames[0], frames[0], frames[1]]
    s2 = ssim_matrix(same, RAW)
    assert cluster_similarity(Cluster((0, 1), 0), Cluster((1,), 1), s2) == 1.0


def test_cluster_validation():
    with pytest.raises(InvalidArgument):
        Cluster((), 0)
    with pytest.raises(InvalidArgument):
        Cluster((1, 1), 1)
    with pytest.raises(InvalidArgument):
        Cluster((1, 2), 3)


def test_input_validation():
    f = Frame(np.zeros((16, 16), dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        hac_select([], 0.9)
    for eps in (0.0, -0.1, 1.5):
        with pytest.raises(InvalidArgument):
            hac_select([f], eps)
    with pytest.raises(InvalidArgument):
        hac_select([f, Frame(np.zeros((16, 17), dtype=np.uint8))], 0.9)


def test_hac_sample_returns_frames_and_is_deterministic():
    rng = np.random.default_rng(4)
    frames = noisy_family(rng, 5) + noisy_family(rng, 2)
    a = hac_sample(frames, 0.9, RAW)
    b = hac_sample(frames, 0.9, RAW)
    assert [x.digest() for x in a] == [x.digest() for x in b]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.floats(0.3, 1.0))
def test_matches_naive_transcription(seed, n, eps):
    rng = np.random.default_rng(seed)
    groups = rng.integers(1, n + 1)
    bases = [rng.integers(30, 226, (16, 16)) for _ in range(groups)]
    frames = []
    for i in range(n):
        frames += noisy_family(rng, 1, bases[i % groups], noise=int(rng.integers(0, 40)), shape=(16, 16))
    assert hac_select(frames, eps, RAW).selected == naive_hac(frames, eps, RAW)
