"""Symbol alphabets, Gray labels, differential phase coding and SIC stage splits.

Symbols are handled in two forms: complex values (public API) and integer
indices into ``Alphabet.points`` (used by the detectors).
"""
from dataclasses import dataclass

import numpy as np

KINDS = ("PAM", "ASK", "SQAM")
# exact unit phasors for multiples of pi/2, avoids exp() round-off
_UNIT = np.array([1.0, 1.0j, -1.0, -1.0j])


def gray(i):
    """Binary reflected Gray code of integer(s) i."""
    i = np.asarray(i)
    return i ^ (i >> 1)


def _is_pow2(M):
    return isinstance(M, (int, np.integer)) and M >= 2 and (M & (M - 1)) == 0


@dataclass(frozen=True, eq=False)
class Alphabet:
    """M-ary alphabet with a Gray labeling.

    ``labels[i]`` is the integer label (MSB = bit level 1) of ``points[i]``.
    ``qphase[i]`` is the phase of ``points[i]`` in units of the phase quantum
    (pi for ASK, pi/2 for SQAM, unused for PAM).
    """
    kind: str
    M: int
    points: np.ndarray
    labels: np.ndarray
    qphase: np.ndarray

    @property
    def m(self):
        return int(self.M).bit_length() - 1

    @property
    def nphase(self):
        return {"PAM": 1, "ASK": 2, "SQAM": 4}[self.kind]

    @property
    def mags(self):
        return np.abs(self.points)

    @property
    def index_of_label(self):
        inv = np.empty(self.M, dtype=np.int64)
        inv[self.labels] = np.arange(self.M)
        return inv

    @property
    def bits(self):
        """(M, m) bit matrix, row i = label bits of point i, level 1 first."""
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts) & 1).astype(np.int8)

    def mean_energy(self):
        return float(np.mean(np.abs(self.points) ** 2))

    def default_x0(self):
        """Point with phase 0 and smallest positive amplitude."""
        cand = [i for i in range(self.M)
                if self.points[i].real > 0 and self.points[i].imag == 0]
        return self.points[min(cand, key=lambda i: self.points[i].real)]

    def index(self, values, scale=1.0, tol=1e-9):
        """Map complex values (optionally scaled) to point indices."""
        v = np.atleast_1d(np.asarray(values, dtype=complex)) / scale
        d = np.abs(v[:, None] - self.points[None, :])
        idx = np.argmin(d, axis=1)
        if np.any(d[np.arange(v.size), idx] > tol * max(1.0, np.abs(v).max())):
            raise ValueError("value not in alphabet")
        return idx

    def __repr__(self):
        return f"Alphabet({self.kind}, M={self.M})"


def build_alphabet(kind, M):
    kind = kind.upper()
    if kind not in KINDS:
        raise ValueError(f"unknown alphabet kind {kind!r}")
    if not _is_pow2(M):
        raise ValueError(f"M={M} is not a power of two")
    if kind == "SQAM" and M % 4:
        raise ValueError("SQAM needs M divisible by 4")
    M = int(M)
    if kind == "PAM":
        pts = np.arange(M, dtype=complex)
        labels = gray(np.arange(M))
        q = np.zeros(M, dtype=np.int64)
    elif kind == "ASK":
        pts = np.arange(-(M - 1), M, 2).astype(complex)
        labels = gray(np.arange(M))
        q = (pts.real < 0).astype(np.int64)
    else:
        R = M // 4
        rb = R.bit_length() - 1
        p, a = np.meshgrid(np.arange(4), np.arange(R), indexing="ij")
        p, a = p.ravel(), a.ravel()
        pts = (a + 1) * _UNIT[p]
        labels = (gray(p) << rb) | gray(a)
        q = p.astype(np.int64)
    return Alphabet(kind, M, pts, np.asarray(labels, dtype=np.int64), q)


def diff_encode_idx(u_idx, x0_idx, alphabet):
    """Index-domain differential encoder: |x_k| = |u_k|, phase accumulates."""
    u_idx = np.asarray(u_idx, dtype=np.int64)
    if alphabet.kind == "PAM":
        return u_idx.copy()
    Q = alphabet.nphase
    q = (alphabet.qphase[x0_idx] + np.cumsum(alphabet.qphase[u_idx])) % Q
    return _with_phase(alphabet, u_idx, q)


def diff_decode_idx(x_idx, x0_idx, alphabet):
    x_idx = np.asarray(x_idx, dtype=np.int64)
    if alphabet.kind == "PAM":
        return x_idx.copy()
    Q = alphabet.nphase
    qx = alphabet.qphase[x_idx]
    prev = np.concatenate(([alphabet.qphase[x0_idx]], qx[:-1]))
    return _with_phase(alphabet, x_idx, (qx - prev) % Q)


def _with_phase(alphabet, idx, q):
    # point with the magnitude of points[idx] and phase index q
    table = {}
    for i in range(alphabet.M):
        table[(round(abs(alphabet.points[i]), 9), int(alphabet.qphase[i]))] = i
    mags = np.round(np.abs(alphabet.points[idx]), 9)
    return np.array([table[(a, int(b))] for a, b in zip(mags, q)], dtype=np.int64)


def diff_encode(u, x0, alphabet):
    ui = alphabet.index(u)
    x0i = alphabet.index(x0)[0]
    return alphabet.points[diff_encode_idx(ui, x0i, alphabet)]


def diff_decode(x, x0, alphabet):
    xi = alphabet.index(x)
    x0i = alphabet.index(x0)[0]
    return alphabet.points[diff_decode_idx(xi, x0i, alphabet)]


def bits_to_indices(bits, alphabet):
    bits = np.asarray(bits, dtype=np.int64).ravel()
    m = alphabet.m
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by m={m}")
    lab = bits.reshape(-1, m) @ (1 << np.arange(m - 1, -1, -1))
    return alphabet.index_of_label[lab]


def indices_to_bits(idx, alphabet):
    return alphabet.bits[np.asarray(idx, dtype=np.int64)].ravel()


def map_bits_to_symbols(bits, alphabet):
    return alphabet.points[bits_to_indices(bits, alphabet)]


def map_symbols_to_bits(symbols, alphabet):
    return indices_to_bits(alphabet.index(symbols), alphabet)


def sp_split(u, S):
    """Rows are the stage strings: V[s-1, t-1] = u[s-1 + (t-1)S]."""
    u = np.asarray(u)
    if S < 1 or u.shape[0] % S:
        raise ValueError(f"S={S} does not divide n={u.shape[0]}")
    return u.reshape(-1, S, *u.shape[1:]).swapaxes(0, 1)


def ps_merge(V):
    V = np.asarray(V)
    return V.swapaxes(0, 1).reshape(-1, *V.shape[2:])


def stage_positions(n, S, s):
    """0-based symbol positions of stage s (1-based)."""
    if S < 1 or n % S or not 1 <= s <= S:
        raise ValueError(f"bad stage s={s} for S={S}, n={n}")
    return np.arange(s - 1, n, S)
