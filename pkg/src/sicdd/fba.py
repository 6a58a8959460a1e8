"""Forward-backward APP detection on the auxiliary channel trellis.

The trellis runs in the u domain.  Since |.|^2 is blind to a common phase,
a window u_{k-K}..u_k fixes the K+1 transmit symbols up to rotation: the
oldest symbol only contributes its magnitude and the others follow from the
phase increments.  Windows that reach back into the known initial symbols
use absolute values instead.  Conditioning (pinned symbols, known bit
prefixes) is expressed by per-position sets of allowed alphabet indices; the
state is the mixed-radix index of the last K positions into their sets.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .auxmodel import LOG2PI
from .linkmodel import ToeplitzOperator, upsample_state

MAX_STATES = 2 ** 24
MAX_STORE = 200_000_000      # doubles kept for the forward messages
LOG2PI_ = float(np.log(2 * np.pi))
EXP_CUT = 650.0              # exp(-650) ~ 1e-282, below the step normalization floor
TINY = 1e-290                # flush values that would turn subnormal


class StateBudgetError(RuntimeError):
    pass


class InconsistentContext(ValueError):
    pass


# ---------------------------------------------------------------- conditioning

class ConditioningMask:
    """Allowed alphabet indices per data position: free, pinned or restricted
    to the symbols whose first bits match a known prefix."""

    def __init__(self, n, M):
        self.allowed = np.ones((n, M), dtype=bool)

    @classmethod
    def free(cls, n, M):
        return cls(n, M)

    def pin(self, pos, idx):
        pos = np.atleast_1d(pos)
        self.allowed[pos] = False
        self.allowed[pos, np.atleast_1d(idx)] = True
        return self

    def restrict_bits(self, pos, known, bits):
        """known: (len(pos), l-1) bit prefixes; bits: alphabet bit matrix."""
        pos = np.atleast_1d(pos)
        known = np.asarray(known).reshape(pos.size, -1)
        L = known.shape[1]
        if L:
            ok = np.all(bits[None, :, :L] == known[:, None, :], axis=2)
            self.allowed[pos] &= ok
        return self

    def check(self):
        if not np.all(self.allowed.any(axis=1)):
            raise InconsistentContext("known bits exclude every symbol")
        return self


def stage_context_mask(n, M, S, s, context, bits=None, level=1, restrict_stage=False):
    """Mask pinning all positions of stages < s to context, and optionally
    restricting stage-s positions to the known first level-1 bits."""
    mk = ConditioningMask(n, M)
    prev = np.arange(n) % S < (s - 1)
    if prev.any():
        mk.pin(np.flatnonzero(prev), np.asarray(context)[prev])
    if restrict_stage and level > 1:
        pos = np.arange(s - 1, n, S)
        mk.restrict_bits(pos, bits[np.asarray(context)[pos], :level - 1], bits)
    return mk.check()


@dataclass
class AppTable:
    pmf: np.ndarray            # (n, M), zero on excluded symbols
    log_evidence: float
    log_evidence_bwd: float = np.nan
    allowed: np.ndarray = None

    def true_prob(self, idx):
        return self.pmf[np.arange(self.pmf.shape[0]), idx]


# ---------------------------------------------------------------- tables

def _tables(rx, allowed):
    """Per-position (magnitude, phase, alphabet index) tables for positions
    j = 1-K .. T, stored at p = j + K - 1."""
    K = rx.s0.size
    n = rx.n
    T = n + K
    npos = K + T
    M = rx.points.size
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != (n, M):
        raise ValueError(f"mask shape {allowed.shape} != {(n, M)}")
    cnt = np.ones(npos, dtype=np.int64)
    mag = np.zeros((npos, M))
    ph = np.ones((npos, M), dtype=np.complex128)
    sym = -np.ones((npos, M), dtype=np.int64)

    def put(p, vals):
        a = np.abs(vals)
        mag[p, :vals.size] = a
        ph[p, :vals.size] = np.where(a > 0, vals / np.where(a > 0, a, 1), 1.0)

    for p in range(K):
        put(p, rx.s0[p:p + 1])
    amag = np.abs(rx.points)
    aph = np.where(amag > 0, rx.points / np.where(amag > 0, amag, 1), 1.0)
    cnt[K:K + n] = allowed.sum(1)
    for i in range(n):
        idx = np.flatnonzero(allowed[i])
        if idx.size == 0:
            raise InconsistentContext(f"position {i} has no admissible symbol")
        mag[K + i, :idx.size] = amag[idx]
        ph[K + i, :idx.size] = aph[idx]
        sym[K + i, :idx.size] = idx
    for i in range(K):
        put(K + n + i, rx.tail[i:i + 1])
    xr = rx.x_ref / abs(rx.x_ref) if abs(rx.x_ref) > 0 else 1.0 + 0j
    return cnt, mag, ph, sym, complex(xr)


def _state_counts(cnt, K, T):
    # states after step k cover positions k-K+1..k, i.e. p = k..k+K-1
    lc = np.log(cnt.astype(float))
    cs = np.concatenate(([0.0], np.cumsum(lc)))
    logs = cs[np.arange(T + 1) + K] - cs[np.arange(T + 1)]
    return logs


# ---------------------------------------------------------------- kernels
#
# Step k (1..T) joins the old state (positions p = k-1..k+K-2) with the new
# symbol at p = k+K-1.  Old state index = d0*P + r, new = r*aK + d, where r
# runs over the K-1 middle positions in mixed radix (oldest most significant).
# Messages are kept in the linear domain, normalized to max 1 per step; a
# step whose result underflows is redone in the log domain.

@njit(cache=True)
def _prefix(k, K, lev, dig, cnt, mag, ph, psi, diff, rel, xr, cpre, sepre, sopre):
    """Recompute the middle prefix sums from level lev on."""
    j0 = k - K
    if lev <= 1:
        cpre[0] = 1.0 + 0j if rel else xr
        sepre[0] = 0j
        sopre[0] = 0j
        lev = 1
    for i in range(lev, K):
        p = k - 1 + i
        d = dig[i]
        j = j0 + i
        c = cpre[i - 1]
        if j <= 0 or not diff:
            xv = mag[p, d] * ph[p, d]
        else:
            c = c * ph[p, d]
            xv = mag[p, d] * c
        cpre[i] = c
        sepre[i] = sepre[i - 1] + psi[2 * (K - i)] * xv
        sopre[i] = sopre[i - 1] + psi[2 * (K - i) - 1] * xv


@njit(cache=True)
def _advance(k, K, dig, cnt):
    """Odometer increment of the middle digits; returns the lowest changed level."""
    i = K - 1
    while i >= 1:
        p = k - 1 + i
        dig[i] += 1
        if dig[i] < cnt[p]:
            return i
        dig[i] = 0
        i -= 1
    return 1


@njit(cache=True)
def _step_setup(k, K, cnt, mag, ph, psi, diff, x0, xn):
    p0 = k - 1
    pK = k - 1 + K
    rel = diff and (k - K) >= 1
    for d0 in range(cnt[p0]):
        if rel:
            x0[d0] = mag[p0, d0] + 0j
        else:
            x0[d0] = mag[p0, d0] * ph[p0, d0]
    for d in range(cnt[pK]):
        xn[d] = mag[pK, d] * ph[pK, d]
    P = 1
    for p in range(k, k + K - 1):
        P *= cnt[p]
    return rel, P


@njit(cache=True)
def _fwd_step(k, K, y, mu, iv0, iv1, cnt, mag, ph, psi, diff, xr, aold, anew, logdom,
              dig, cpre, sepre, sopre, x0, xn, wo, tmp):
    p0 = k - 1
    pK = k - 1 + K
    a0 = cnt[p0]
    aK = cnt[pK]
    rel, P = _step_setup(k, K, cnt, mag, ph, psi, diff, x0, xn)
    ya = y[2 * k - 2] - mu[0]
    yb = y[2 * k - 1] - mu[1]
    co = psi[2 * K - 1]
    ce = psi[2 * K]
    c0 = psi[0]
    for i in range(K):
        dig[i] = 0
    _prefix(k, K, 1, dig, cnt, mag, ph, psi, diff, rel, xr, cpre, sepre, sopre)
    for r in range(P):
        if r > 0:
            lev = _advance(k, K, dig, cnt)
            _prefix(k, K, lev, dig, cnt, mag, ph, psi, diff, rel, xr, cpre, sepre, sopre)
        se = sepre[K - 1]
        so = sopre[K - 1]
        c = cpre[K - 1] if diff else 1.0 + 0j
        for d0 in range(a0):
            eo = so + co * x0[d0]
            zo = eo.real * eo.real + eo.imag * eo.imag
            q = (ya - zo) ** 2 * iv0
            if logdom:
                wo[d0] = aold[d0 * P + r] - q
            elif q < EXP_CUT:
                wo[d0] = aold[d0 * P + r] * math.exp(-q)
            else:
                wo[d0] = 0.0
        for d in range(aK):
            xv = c0 * c * xn[d]
            if logdom:
                mx = -np.inf
                for d0 in range(a0):
                    e = se + ce * x0[d0] + xv
                    ze = e.real * e.real + e.imag * e.imag
                    t = wo[d0] - (yb - ze) ** 2 * iv1
                    tmp[d0] = t
                    if t > mx:
                        mx = t
                acc = 0.0
                if mx > -np.inf:
                    for d0 in range(a0):
                        acc += math.exp(tmp[d0] - mx)
                    anew[r * aK + d] = mx + math.log(acc)
                else:
                    anew[r * aK + d] = -np.inf
            else:
                acc = 0.0
                for d0 in range(a0):
                    e = se + ce * x0[d0] + xv
                    ze = e.real * e.real + e.imag * e.imag
                    t = (yb - ze) ** 2 * iv1
                    if t < EXP_CUT:
                        acc += wo[d0] * math.exp(-t)
                anew[r * aK + d] = acc if acc > TINY else 0.0


@njit(cache=True)
def _bwd_step(k, K, y, mu, iv0, iv1, cnt, mag, ph, psi, diff, xr, bnew, bold, logdom,
              dig, cpre, sepre, sopre, x0, xn, wo, tmp):
    p0 = k - 1
    pK = k - 1 + K
    a0 = cnt[p0]
    aK = cnt[pK]
    rel, P = _step_setup(k, K, cnt, mag, ph, psi, diff, x0, xn)
    ya = y[2 * k - 2] - mu[0]
    yb = y[2 * k - 1] - mu[1]
    co = psi[2 * K - 1]
    ce = psi[2 * K]
    c0 = psi[0]
    for i in range(K):
        dig[i] = 0
    _prefix(k, K, 1, dig, cnt, mag, ph, psi, diff, rel, xr, cpre, sepre, sopre)
    xv = np.empty(aK, dtype=np.complex128)
    for r in range(P):
        if r > 0:
            lev = _advance(k, K, dig, cnt)
            _prefix(k, K, lev, dig, cnt, mag, ph, psi, diff, rel, xr, cpre, sepre, sopre)
        se = sepre[K - 1]
        so = sopre[K - 1]
        c = cpre[K - 1] if diff else 1.0 + 0j
        for d in range(aK):
            xv[d] = c0 * c * xn[d]
            wo[d] = bnew[r * aK + d]
        for d0 in range(a0):
            eo = so + co * x0[d0]
            zo = eo.real * eo.real + eo.imag * eo.imag
            q = (ya - zo) ** 2 * iv0
            eb = se + ce * x0[d0]
            if logdom:
                mx = -np.inf
                for d in range(aK):
                    e = eb + xv[d]
                    ze = e.real * e.real + e.imag * e.imag
                    t = wo[d] - (yb - ze) ** 2 * iv1
                    tmp[d] = t
                    if t > mx:
                        mx = t
                if mx > -np.inf:
                    acc = 0.0
                    for d in range(aK):
                        acc += math.exp(tmp[d] - mx)
                    bold[d0 * P + r] = mx + math.log(acc) - q
                else:
                    bold[d0 * P + r] = -np.inf
            else:
                acc = 0.0
                if q < EXP_CUT:
                    for d in range(aK):
                        e = eb + xv[d]
                        ze = e.real * e.real + e.imag * e.imag
                        t = (yb - ze) ** 2 * iv1
                        if t < EXP_CUT:
                            acc += wo[d] * math.exp(-t)
                    acc *= math.exp(-q)
                bold[d0 * P + r] = acc if acc > TINY else 0.0


@njit(cache=True)
def _normalize(v, lo, hi, logdom):
    """Scale v[lo:hi] to max 1 (linear); returns log of the scale or NaN when
    the linear values underflowed."""
    mx = -np.inf if logdom else 0.0
    for i in range(lo, hi):
        if v[i] > mx:
            mx = v[i]
    if logdom:
        if mx == -np.inf:
            return np.nan
        for i in range(lo, hi):
            v[i] = math.exp(v[i] - mx)
        return mx
    if not (mx > 1e-250) or mx == np.inf:
        return np.nan
    inv = 1.0 / mx
    for i in range(lo, hi):
        v[i] *= inv
    return math.log(mx)


@njit(cache=True)
def _logmax(v, n):
    mx = -np.inf
    for i in range(n):
        if v[i] > mx:
            mx = v[i]
    if mx > -np.inf:
        for i in range(n):
            v[i] -= mx
    return mx


@njit(cache=True)
def _fba_kernel(y, mu, var, psi, cnt, mag, ph, sym, K, n, diff, xr, offs, alpha, app, logmode):
    """Returns (forward log-evidence, backward log-evidence, status); status
    -1 means the linear-domain pass lost its dynamic range."""
    T = y.size // 2
    M = app.shape[1]
    iv0 = 0.5 / var[0]
    iv1 = 0.5 / var[1]
    const = -0.5 * (2 * LOG2PI_ + math.log(var[0]) + math.log(var[1]))
    maxa = 1
    for p in range(cnt.size):
        if cnt[p] > maxa:
            maxa = cnt[p]
    maxs = 1
    for k in range(T + 1):
        if offs[k + 1] - offs[k] > maxs:
            maxs = offs[k + 1] - offs[k]
    dig = np.zeros(K + 1, dtype=np.int64)
    cpre = np.zeros(K + 1, dtype=np.complex128)
    sepre = np.zeros(K + 1, dtype=np.complex128)
    sopre = np.zeros(K + 1, dtype=np.complex128)
    x0 = np.empty(maxa, dtype=np.complex128)
    xn = np.empty(maxa, dtype=np.complex128)
    wo = np.empty(maxa)
    tmp = np.empty(maxa)
    work = np.empty(maxs)

    alpha[offs[0]] = 0.0 if logmode else 1.0
    fscale = 0.0
    for k in range(1, T + 1):
        lo = offs[k - 1]
        no = offs[k] - lo
        nn = offs[k + 1] - offs[k]
        aK = cnt[k - 1 + K]
        lp = -math.log(aK) if k <= n else 0.0
        _fwd_step(k, K, y, mu, iv0, iv1, cnt, mag, ph, psi, diff, xr,
                  alpha[lo:lo + no], work, logmode, dig, cpre, sepre, sopre, x0, xn, wo, tmp)
        if logmode:
            sc = _logmax(work, nn)
            if sc == -np.inf:
                return np.nan, np.nan, -2
        else:
            sc = _normalize(work, 0, nn, False)
            if np.isnan(sc):
                return np.nan, np.nan, -1
        alpha[offs[k]:offs[k] + nn] = work[:nn]
        fscale += sc + lp + const
    s = 0.0
    for i in range(offs[T], offs[T + 1]):
        s += math.exp(alpha[i]) if logmode else alpha[i]
    logev = fscale + math.log(s)

    bnew = np.zeros(maxs)
    bnew[0] = 0.0 if logmode else 1.0
    bscale = 0.0
    acc = np.empty(M)
    for k in range(T, 0, -1):
        pK = k - 1 + K
        aK = cnt[pK]
        lo = offs[k]
        nsk = offs[k + 1] - lo
        if k <= n:
            for d in range(M):
                acc[d] = 0.0
            if logmode:
                mx = -np.inf
                for i in range(nsk):
                    v = alpha[lo + i] + bnew[i]
                    if v > mx:
                        mx = v
                for i in range(nsk):
                    acc[i % aK] += math.exp(alpha[lo + i] + bnew[i] - mx)
            else:
                for i in range(nsk):
                    acc[i % aK] += alpha[lo + i] * bnew[i]
            tot = 0.0
            for d in range(aK):
                tot += acc[d]
            if not tot > 1e-280:
                return logev, np.nan, -1
            for d in range(aK):
                app[k - 1, sym[pK, d]] = acc[d] / tot
        lp = -math.log(aK) if k <= n else 0.0
        nso = offs[k] - offs[k - 1]
        _bwd_step(k, K, y, mu, iv0, iv1, cnt, mag, ph, psi, diff, xr,
                  bnew, work, logmode, dig, cpre, sepre, sopre, x0, xn, wo, tmp)
        if logmode:
            sc = _logmax(work, nso)
            if sc == -np.inf:
                return logev, np.nan, -2
        else:
            sc = _normalize(work, 0, nso, False)
            if np.isnan(sc):
                return logev, np.nan, -1
        bnew[:nso] = work[:nso]
        bscale += sc + lp + const
    a0v = alpha[offs[0]]
    if logmode:
        logev_b = bscale + bnew[0] + a0v
    else:
        logev_b = bscale + math.log(bnew[0] * a0v)
    return logev, logev_b, 0


def _memoryless(rx, allowed, aux):
    """Kt' = 0: the second sample of each pair sees |psi_0 x_k|^2 only."""
    n = rx.n
    M = rx.points.size
    z2 = np.abs(aux.psi[0] * rx.points) ** 2
    v0, v1 = aux.var
    lq1 = -0.5 * (LOG2PI + np.log(v1)) - (rx.y[1::2][:, None] - z2[None, :] - aux.mu[1]) ** 2 / (2 * v1)
    lq0 = -0.5 * (LOG2PI + np.log(v0)) - (rx.y[0::2] - aux.mu[0]) ** 2 / (2 * v0)
    lw = np.where(allowed, lq1, -np.inf) - np.log(allowed.sum(1))[:, None]
    mx = lw.max(1, keepdims=True)
    w = np.exp(lw - mx)
    ev = float(np.sum(mx[:, 0] + np.log(w.sum(1))) + lq0.sum())
    return AppTable(w / w.sum(1, keepdims=True), ev, ev, allowed)


def run_fba(rx, mask, aux, max_states=MAX_STATES, max_store=MAX_STORE, logdomain=False):
    """Symbol APPs P_q(u_k | y, conditioning) for all data positions and the
    log-evidence log q(y | conditioning)."""
    allowed = mask.allowed if isinstance(mask, ConditioningMask) else np.asarray(mask, bool)
    K = aux.Kt
    if rx.s0.size != K:
        raise ValueError("receiver frame does not match the auxiliary memory")
    if K == 0:
        return _memoryless(rx, allowed, aux)
    cnt, mag, ph, sym, xr = _tables(rx, allowed)
    T = rx.n + K
    logs = _state_counts(cnt, K, T)
    if logs.max() > np.log(max_states) + 1e-9:
        raise StateBudgetError(
            f"trellis needs {np.exp(logs.max()):.3g} states (> {max_states}); "
            "reduce the auxiliary memory or use the Gibbs detector")
    sizes = np.rint(np.exp(logs)).astype(np.int64)
    if sizes.sum() > max_store:
        raise StateBudgetError(
            f"forward messages need {sizes.sum():.3g} values; split the frame")
    offs = np.concatenate(([0], np.cumsum(sizes)))
    alpha = np.empty(offs[-1])
    app = np.zeros((rx.n, rx.points.size))
    psi = np.ascontiguousarray(aux.psi, dtype=np.complex128)
    args = (np.ascontiguousarray(rx.y, dtype=float), aux.mu.astype(float),
            aux.var.astype(float), psi, cnt, mag, ph, sym, K, rx.n,
            bool(rx.differential), xr, offs, alpha, app)
    ev, evb, st = (np.nan, np.nan, -1) if logdomain else _fba_kernel(*args, False)
    if st != 0 or not abs(ev - evb) < 1e-6 * max(1.0, abs(ev)):
        app[:] = 0.0
        ev, evb, st = _fba_kernel(*args, True)
        if st != 0:
            raise FloatingPointError("trellis has no admissible path with finite likelihood")
    return AppTable(app, float(ev), float(evb), allowed)


# ---------------------------------------------------------------- brute force

def enumerate_posterior(rx, mask, aux, limit=2 ** 20, chunk=4096):
    """All admissible data sequences and their log q(y|u) values, evaluated
    by direct convolution over the whole frame (independent of the trellis)."""
    allowed = mask.allowed if isinstance(mask, ConditioningMask) else np.asarray(mask, bool)
    sets = [np.flatnonzero(a) for a in allowed]
    total = int(np.prod([len(s) for s in sets], dtype=float))
    if total > limit:
        raise ValueError(f"{total} sequences exceed the enumeration limit {limit}")
    seqs = np.array(list(itertools.product(*sets)), dtype=np.int64).reshape(total, rx.n)
    K = aux.Kt
    T = rx.n + K
    A = ToeplitzOperator(aux.psi, T).dense()
    par = np.arange(2 * T) % 2
    mu = aux.mu[par]
    v = aux.var[par]
    out = np.empty(total)
    for a in range(0, total, chunk):
        u = rx.points[seqs[a:a + chunk]]
        u = np.concatenate([u, np.broadcast_to(rx.tail, (u.shape[0], K))], axis=1)
        if rx.differential:
            mg = np.abs(u)
            ph = np.where(mg > 0, u / np.where(mg > 0, mg, 1), 1.0)
            xr = rx.x_ref / abs(rx.x_ref) if abs(rx.x_ref) > 0 else 1.0
            x = mg * np.cumprod(ph, axis=1) * xr
        else:
            x = u
        xt = np.stack([upsample_state(rx.s0, xi) for xi in x])
        z = np.abs(xt @ A.T) ** 2
        out[a:a + chunk] = np.sum(-0.5 * (LOG2PI + np.log(v)) - (rx.y - z - mu) ** 2 / (2 * v), axis=1)
    logprior = -np.sum(np.log([len(s) for s in sets]))
    return seqs, out + logprior


def brute_force_app(rx, mask, aux, limit=2 ** 20):
    allowed = mask.allowed if isinstance(mask, ConditioningMask) else np.asarray(mask, bool)
    seqs, lw = enumerate_posterior(rx, allowed, aux, limit)
    mx = lw.max()
    w = np.exp(lw - mx)
    ev = float(mx + np.log(w.sum()))
    w /= w.sum()
    M = rx.points.size
    pmf = np.zeros((rx.n, M))
    for i in range(rx.n):
        pmf[i] = np.bincount(seqs[:, i], weights=w, minlength=M)
    return AppTable(pmf, ev, ev, allowed)


# ---------------------------------------------------------------- bit levels

def bit_marginals(pmf, bits, level, known=None):
    """P(b_level = 0/1) from symbol PMFs, optionally restricted to symbols
    whose first level-1 bits equal ``known`` (per row)."""
    pmf = np.asarray(pmf)
    if known is not None and level > 1:
        ok = np.all(bits[None, :, :level - 1] == np.asarray(known)[:, None, :level - 1], axis=2)
        pmf = pmf * ok
    b = bits[:, level - 1]
    p1 = pmf[:, b == 1].sum(1)
    p0 = pmf[:, b == 0].sum(1)
    tot = p0 + p1
    if np.any(tot <= 0):
        raise InconsistentContext("known bits exclude all symbols")
    return np.column_stack([p0 / tot, p1 / tot])


def bitlevel_apps(rx, aux, S, s, level, mode, context, bits, detector=None):
    """Bit APPs of level ``level`` for the stage-s positions.

    MSD: symbol APPs given the previous stages, restricted per position by
    that position's own known lower bits.  bSIC: the lower bits of all stage-s
    positions enter the trellis mask.
    """
    detector = detector or run_fba
    n = rx.n
    M = rx.points.size
    pos = np.arange(s - 1, n, S)
    context = np.asarray(context)
    if mode.upper() == "MSD":
        mk = stage_context_mask(n, M, S, s, context)
        tab = detector(rx, mk, aux)
        known = bits[context[pos]] if level > 1 else None
        return bit_marginals(tab.pmf[pos], bits, level, known)
    if mode.upper() == "BSIC":
        mk = stage_context_mask(n, M, S, s, context, bits, level, restrict_stage=True)
        tab = detector(rx, mk, aux)
        return bit_marginals(tab.pmf[pos], bits, level)
    raise ValueError(f"unknown mode {mode!r}")


def memo_detector(detector=run_fba):
    """Detector that reuses results for repeated (frame, mask) pairs, e.g. the
    free trellis shared by JDD, SDD and the first SIC stage."""
    cache = {}

    def run(rx, mask, aux):
        allowed = mask.allowed if isinstance(mask, ConditioningMask) else np.asarray(mask, bool)
        key = (id(rx), id(aux), allowed.tobytes())
        if key not in cache:
            cache[key] = (rx, detector(rx, mask, aux))
        return cache[key][1]

    run.cache = cache
    return run
