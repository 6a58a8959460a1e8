"""Binary polar codes with CRC-aided successive-cancellation list decoding.

Natural-order Arikan transform x = [enc(u1) ^ enc(u2), enc(u2)] (no bit
reversal, non-systematic).  LLRs are log P(0)/P(1).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

CRC16_CCITT = 0x1021


# ---------------------------------------------------------------- CRC

@lru_cache(maxsize=256)
def crc_matrix(k, poly=CRC16_CCITT, width=16):
    """(k, width) parity matrix G with crc(bits) = bits @ G mod 2 (zero init,
    MSB first, no reflection)."""
    top = 1 << width
    G = np.zeros((k, width), dtype=np.int8)
    r = poly                      # x^width mod g
    for j in range(k - 1, -1, -1):
        G[j] = (r >> np.arange(width - 1, -1, -1)) & 1
        r <<= 1
        if r & top:
            r ^= top | poly
    G.flags.writeable = False
    return G


def crc_bits(bits, poly=CRC16_CCITT, width=16):
    bits = np.asarray(bits, dtype=np.int64)
    return ((bits @ crc_matrix(bits.shape[-1], poly, width)) & 1).astype(np.int8)


def crc_check(bits, crc, poly=CRC16_CCITT):
    crc = np.asarray(crc)
    return bool(np.array_equal(crc_bits(bits, poly, crc.size), crc))


# ---------------------------------------------------------------- transform

def polar_transform(u):
    """x = u F^{(x)n} over GF(2) along the last axis (an involution)."""
    x = np.array(u, dtype=np.int8, copy=True)
    N = x.shape[-1]
    if N & (N - 1):
        raise ValueError("length must be a power of two")
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(*lead, -1, 2, h)
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


@dataclass(eq=False)
class PolarCode:
    N: int
    frozen: np.ndarray             # bool, True = frozen to 0
    crc_poly: int = CRC16_CCITT
    crc_len: int = 16

    def __post_init__(self):
        self.frozen = np.asarray(self.frozen, dtype=bool)
        if self.N & (self.N - 1) or self.frozen.size != self.N:
            raise ValueError("bad polar code length or frozen mask")
        ni = int((~self.frozen).sum())
        if 0 < ni <= self.crc_len:
            raise ValueError("too few unfrozen positions for the CRC")

    @property
    def info_positions(self):
        return np.flatnonzero(~self.frozen)

    @property
    def n_crc(self):
        return self.crc_len if self.info_positions.size else 0

    @property
    def k(self):
        return self.info_positions.size - self.n_crc

    def encode(self, data):
        data = np.asarray(data, dtype=np.int8)
        if data.size != self.k:
            raise ValueError(f"need {self.k} data bits, got {data.size}")
        u = np.zeros(self.N, dtype=np.int8)
        if self.n_crc:
            u[self.info_positions] = np.concatenate([data, crc_bits(data, self.crc_poly, self.crc_len)])
        return polar_transform(u)

    def split(self, u):
        """(data, crc_ok) from a decided u vector."""
        v = np.asarray(u)[self.info_positions]
        if not self.n_crc:
            return v[:0].astype(np.int8), True
        d, c = v[:self.k], v[self.k:]
        return d.astype(np.int8), crc_check(d, c, self.crc_poly)

    def to_positions(self):
        return self.info_positions.tolist()

    @classmethod
    def from_positions(cls, N, info_positions, **kw):
        fr = np.ones(N, dtype=bool)
        fr[np.asarray(info_positions, dtype=np.int64)] = False
        return cls(N, fr, **kw)


# ---------------------------------------------------------------- SCL kernel

@njit(cache=True)
def _f(a, b):
    s = 1.0 if (a >= 0) == (b >= 0) else -1.0
    return s * min(abs(a), abs(b))


@njit(cache=True)
def _softplus(x):
    if x > 30:
        return x
    return np.log1p(np.exp(x))


@njit(cache=True)
def _scl_kernel(llr, frozen, fval, L, pm0, rec):
    """List SC decoding.  Returns (U, PM) for the surviving paths sorted by
    path metric.  rec receives the leaf LLRs of path slot 0 (useful with
    L = 1 and all positions frozen to the true bits: genie SC)."""
    N = llr.size
    n = 0
    while (1 << n) < N:
        n += 1
    off = np.zeros(n + 2, dtype=np.int64)
    for d in range(n + 1):
        off[d + 1] = off[d] + (N >> d)
    LL = np.zeros((L, off[n + 1]))
    CW = np.zeros((L, off[n + 1]), dtype=np.int8)
    U = np.zeros((L, N), dtype=np.int8)
    PM = np.zeros(L)
    act = np.zeros(L, dtype=np.bool_)
    tmp = np.zeros(N, dtype=np.int8)
    act[0] = True
    PM[0] = pm0
    LL[0, :N] = llr
    lam = np.zeros(L)
    cand_pm = np.zeros(2 * L)
    order = np.zeros(2 * L, dtype=np.int64)
    keep = np.zeros((L, 2), dtype=np.bool_)
    done = np.zeros(L, dtype=np.bool_)
    for i in range(N):
        if i == 0:
            d0 = 1
        else:
            t = 0
            while (i >> t) & 1 == 0:
                t += 1
            d0 = n - t
        for p in range(L):
            if not act[p]:
                continue
            for d in range(d0, n + 1):
                h = N >> d
                po = off[d - 1]
                co = off[d]
                if d == d0 and i > 0:
                    for j in range(h):
                        a = LL[p, po + j]
                        b = LL[p, po + h + j]
                        LL[p, co + j] = b + a if CW[p, co + j] == 0 else b - a
                else:
                    for j in range(h):
                        LL[p, co + j] = _f(LL[p, po + j], LL[p, po + h + j])
            lam[p] = LL[p, off[n]]
        if act[0]:
            rec[i] = lam[0]
        if frozen[i]:
            for p in range(L):
                if act[p]:
                    U[p, i] = fval[i]
                    PM[p] += _softplus(-(1.0 - 2.0 * fval[i]) * lam[p])
        else:
            nc = 0
            for p in range(L):
                if act[p]:
                    for b in range(2):
                        cand_pm[2 * p + b] = PM[p] + _softplus(-(1.0 - 2.0 * b) * lam[p])
                else:
                    cand_pm[2 * p] = np.inf
                    cand_pm[2 * p + 1] = np.inf
            order[:] = np.argsort(cand_pm, kind="mergesort")
            keep[:, :] = False
            for c in range(2 * L):
                if nc == L:
                    break
                idx = order[c]
                if cand_pm[idx] == np.inf:
                    break
                keep[idx // 2, idx % 2] = True
                nc += 1
            # free slots: paths with no surviving child
            for p in range(L):
                if act[p] and not keep[p, 0] and not keep[p, 1]:
                    act[p] = False
            done[:] = False
            for p in range(L):
                if not act[p] or done[p] or not (keep[p, 0] and keep[p, 1]):
                    continue
                q = 0
                while act[q]:
                    q += 1
                LL[q, :] = LL[p, :]
                CW[q, :] = CW[p, :]
                U[q, :] = U[p, :]
                act[q] = True
                done[q] = True
                U[q, i] = 1
                PM[q] = cand_pm[2 * p + 1]
                done[p] = True
                U[p, i] = 0
                PM[p] = cand_pm[2 * p]
            for p in range(L):
                if act[p] and not done[p]:
                    b = 1 if keep[p, 1] else 0
                    U[p, i] = b
                    PM[p] = cand_pm[2 * p + b]
        # propagate the decided bit up the codeword tree
        for p in range(L):
            if not act[p]:
                continue
            tmp[0] = U[p, i]
            d = n
            sz = 1
            while d > 0 and (i >> (n - d)) & 1 == 1:
                co = off[d]
                for j in range(sz):
                    tmp[sz + j] = tmp[j]
                for j in range(sz):
                    tmp[j] = CW[p, co + j] ^ tmp[sz + j]
                sz *= 2
                d -= 1
            if d > 0:
                co = off[d]
                for j in range(sz):
                    CW[p, co + j] = tmp[j]
    cnt = 0
    for p in range(L):
        if act[p]:
            cnt += 1
    outU = np.zeros((cnt, N), dtype=np.int8)
    outP = np.zeros(cnt)
    c = 0
    for p in range(L):
        if act[p]:
            outU[c] = U[p]
            outP[c] = PM[p]
            c += 1
    o = np.argsort(outP, kind="mergesort")
    return outU[o], outP[o]


def scl_decode(code, llr, L=8, pm0=0.0):
    """Candidate u vectors and path metrics (best first)."""
    llr = np.ascontiguousarray(llr, dtype=float)
    rec = np.zeros(code.N)
    return _scl_kernel(llr, code.frozen, np.zeros(code.N, np.int8), int(L), float(pm0), rec)


def sc_decode(code, llr):
    U, _ = scl_decode(code, llr, 1)
    return U[0]


def genie_llrs(llr, u_true):
    """Leaf LLRs of SC decoding with all earlier bits known."""
    llr = np.ascontiguousarray(llr, dtype=float)
    N = llr.size
    rec = np.zeros(N)
    _scl_kernel(llr, np.ones(N, dtype=np.bool_), np.asarray(u_true, np.int8), 1, 0.0, rec)
    return rec


def crc_select(code, U, PM):
    """Index of the best CRC-passing candidate, or (0, False)."""
    for c in range(U.shape[0]):
        if code.split(U[c])[1]:
            return c, True
    return 0, False
