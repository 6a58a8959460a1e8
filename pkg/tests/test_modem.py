import numpy as np
import pytest

from sicdd.modem import (build_alphabet, diff_encode, diff_decode, map_bits_to_symbols,
                         map_symbols_to_bits, sp_split, ps_merge, gray, stage_positions)


def test_alphabet_points():
    assert np.array_equal(build_alphabet("ASK", 4).points, [-3, -1, 1, 3])
    assert np.array_equal(build_alphabet("PAM", 2).points, [0, 1])
    sq = build_alphabet("SQAM", 8).points
    assert set(np.round(sq, 12)) == {1, 2, -1, -2, 1j, 2j, -1j, -2j}


@pytest.mark.parametrize("kind,M", [("PAM", 3), ("ASK", 6), ("SQAM", 2), ("SQAM", 6), ("QAM", 4)])
def test_invalid_alphabets(kind, M):
    with pytest.raises(ValueError):
        build_alphabet(kind, M)


@pytest.mark.parametrize("kind,M", [("PAM", 4), ("ASK", 8), ("SQAM", 16), ("ASK", 2)])
def test_labels_bijective(kind, M):
    A = build_alphabet(kind, M)
    assert sorted(A.labels) == list(range(M))
    assert len(set(np.round(A.points, 12))) == M


@pytest.mark.parametrize("kind,M", [("PAM", 8), ("ASK", 8), ("ASK", 4)])
def test_gray_adjacency(kind, M):
    A = build_alphabet(kind, M)
    order = np.argsort(A.points.real)
    lab = A.labels[order]
    assert all(bin(a ^ b).count("1") == 1 for a, b in zip(lab[:-1], lab[1:]))


def test_ask4_gray_map():
    A = build_alphabet("ASK", 4)
    s = map_bits_to_symbols([0, 0, 0, 1, 1, 1, 1, 0], A)
    assert np.array_equal(s, [-3, -1, 1, 3])


def test_bits_roundtrip_every_label():
    for kind, M in [("ASK", 4), ("SQAM", 4), ("PAM", 8)]:
        A = build_alphabet(kind, M)
        for p in A.points:
            assert map_bits_to_symbols(map_symbols_to_bits([p], A), A)[0] == p
    sq = build_alphabet("SQAM", 4)
    assert set(np.round(sq.points, 12)) == {1, 1j, -1, -1j}
    with pytest.raises(ValueError):
        map_bits_to_symbols([0, 1, 1], build_alphabet("ASK", 4))


def test_diff_examples():
    a2 = build_alphabet("ASK", 2)
    assert np.array_equal(diff_encode([1, -1, -1], 1, a2), [1, -1, 1])
    assert np.array_equal(diff_decode([1, -1, 1], 1, a2), [1, -1, -1])
    assert np.array_equal(diff_decode([-1, -1], -1, a2), [1, 1])
    sq = build_alphabet("SQAM", 4)
    x = diff_encode([1j, 1j, 1j], 1, sq)
    assert np.allclose(x, [1j, -1, -1j])
    assert np.allclose(diff_decode(x, 1, sq), [1j, 1j, 1j])
    pam = build_alphabet("PAM", 4)
    assert np.array_equal(diff_encode([3, 0, 2], 1, pam), [3, 0, 2])
    with pytest.raises(ValueError):
        diff_encode([1, -1], 2, a2)


@pytest.mark.parametrize("kind,M", [("ASK", 4), ("SQAM", 8), ("PAM", 4), ("SQAM", 16)])
def test_diff_roundtrip(kind, M, rng):
    A = build_alphabet(kind, M)
    for _ in range(20):
        u = A.points[rng.integers(M, size=12)]
        x0 = A.points[rng.integers(M)]
        x = diff_encode(u, x0, A)
        assert np.allclose(np.abs(x), np.abs(u))
        assert np.allclose(diff_decode(x, x0, A), u)


def test_sp_split():
    u = np.arange(1, 21)
    V = sp_split(u, 4)
    assert np.array_equal(V[2], [3, 7, 11, 15, 19])
    assert np.array_equal(sp_split(u, 1)[0], u)
    r = np.random.default_rng(0).integers(0, 9, 10)
    assert np.array_equal(ps_merge(sp_split(r, 2)), r)
    with pytest.raises(ValueError):
        sp_split(np.arange(10), 3)
    assert np.array_equal(stage_positions(20, 4, 3), np.arange(2, 20, 4))


def test_gray_function():
    assert list(gray(np.arange(4))) == [0, 1, 3, 2]
