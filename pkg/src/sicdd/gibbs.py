"""Gibbs-sampling estimates of bit APPs for the bit-plane SIC metric.

The undecided bits of a frame are visited in transmission order (symbol
position, then bit level).  Each visit evaluates the flipped candidate on
the output samples it touches, draws the bit from the tempered conditional
(likelihood ** 1/eta) and, after burn-in, accumulates an importance-weighted
average of the untempered conditional.  The weight of a visit is the exact
ratio of the target and tempered marginals of the other bits, which only
needs the two candidate likelihoods.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .auxmodel import LOG2PI, ReceiverFrame
from .fba import InconsistentContext

ETA_GRID = (1.0, 1.5, 2.0, 3.0, 5.0, 8.0)
P_FLOOR = 1e-300


@dataclass(frozen=True)
class GibbsConfig:
    n_iter: int = 50          # sweeps kept after burn-in
    burn_in: int = 10
    n_par: int = 20
    eta: float = 1.0
    pool: str = "global"      # or "sampler": normalize weights per sampler first

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.n_par < 1:
            raise ValueError("need n_iter >= 1, burn_in >= 0, n_par >= 1")
        if not self.eta >= 1:
            raise ValueError("eta must be >= 1")
        if self.pool not in ("global", "sampler"):
            raise ValueError("pool must be 'global' or 'sampler'")

    @property
    def sweeps(self):
        return self.burn_in + self.n_iter


@dataclass
class AppEstimate:
    p1: np.ndarray                 # P(bit = 1) per sampled bit
    ess: np.ndarray                # effective sample size per bit
    eta: float
    pos: np.ndarray = None         # symbol position of each bit
    level: np.ndarray = None       # 1-based bit level of each bit
    rhat: float = np.nan           # Gelman-Rubin statistic of the LL traces
    flip_rate: float = np.nan
    macs: int = 0
    fallback: bool = False
    n_samples: int = 1
    ll_trace: np.ndarray = field(default=None, repr=False)

    @property
    def pmf(self):
        return np.column_stack([1 - self.p1, self.p1])

    @property
    def stalled(self):
        """Samplers disagree (poor mixing) or weights collapsed."""
        ess_frac = np.median(self.ess) / self.n_samples if self.ess.size else 1.0
        return bool(self.rhat > 1.2 or ess_frac < 0.01 or self.fallback)


# ---------------------------------------------------------------- kernel

@njit(cache=True)
def _span_x(j, K, T, u, s0, xr, diff, xs):
    """Symbols x_{j-K}..x_{j+K} (clipped at T) in a frame valid up to a
    common rotation; returns the number of filled entries."""
    lo = j - K
    hi = min(j + K, T)
    cnt = hi - lo + 1
    if diff and lo >= 1:
        a = abs(u[lo - 1])
        xs[0] = a + 0j
        c = 1.0 + 0j
        for i in range(1, cnt):
            v = u[lo + i - 1]
            a = abs(v)
            if a > 0:
                c = c * (v / a)
            xs[i] = a * c
    elif diff:
        c = xr
        for i in range(cnt):
            jj = lo + i
            if jj <= 0:
                xs[i] = s0[K + jj - 1]
            else:
                v = u[jj - 1]
                a = abs(v)
                if a > 0:
                    c = c * (v / a)
                xs[i] = a * c
    else:
        for i in range(cnt):
            jj = lo + i
            xs[i] = s0[K + jj - 1] if jj <= 0 else u[jj - 1]
    return cnt


@njit(cache=True)
def _local_z(j, K, T, psi, xs, zl, rows):
    """Output samples touched by symbol j; returns (count, macs)."""
    lo = j - K
    m = 0
    macs = 0
    for jp in range(j, min(j + K, T) + 1):
        if jp > j:
            e = 0j
            for i in range(K):
                e += psi[2 * i + 1] * xs[jp - 1 - i - lo]
            macs += K
            zl[m] = e.real * e.real + e.imag * e.imag
            rows[m] = 2 * jp - 2
            m += 1
        e = 0j
        for i in range(K + 1):
            e += psi[2 * i] * xs[jp - i - lo]
        macs += K + 1
        zl[m] = e.real * e.real + e.imag * e.imag
        rows[m] = 2 * jp - 1
        m += 1
    return m, macs


@njit(cache=True)
def _full_z(K, T, psi, u, s0, xr, diff, z):
    x = np.empty(T, dtype=np.complex128)
    c = xr
    for j in range(1, T + 1):
        v = u[j - 1]
        if diff:
            a = abs(v)
            if a > 0:
                c = c * (v / a)
            x[j - 1] = a * c
        else:
            x[j - 1] = v
    for jp in range(1, T + 1):
        e = 0j
        for i in range(K):
            jj = jp - 1 - i
            xv = s0[K + jj - 1] if jj <= 0 else x[jj - 1]
            e += psi[2 * i + 1] * xv
        z[2 * jp - 2] = e.real * e.real + e.imag * e.imag
        e = 0j
        for i in range(K + 1):
            jj = jp - i
            xv = s0[K + jj - 1] if jj <= 0 else x[jj - 1]
            e += psi[2 * i] * xv
        z[2 * jp - 1] = e.real * e.real + e.imag * e.imag


@njit(cache=True)
def _lq(y, z, mu, var, row):
    p = row % 2
    r = y[row] - z - mu[p]
    return -0.5 * (LOG2PI_ + math.log(var[p])) - r * r / (2 * var[p])


@njit(cache=True)
def _softplus(x):
    if x > 30:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _lae(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _sampler(y, mu, var, psi, K, s0, tail, xr, diff, pts, lab2idx, m, bits,
             wpos, wlev, eta, sweeps, burn, unif, den, num, sq, plain,
             lltrace, z, record):
    """One sampler.  bits (n, m) holds the fixed and initial bits and is
    updated in place; z receives the final cached outputs."""
    n = bits.shape[0]
    T = n + K
    W = wpos.size
    u = np.empty(T, dtype=np.complex128)
    for j in range(n):
        lab = 0
        for l in range(m):
            lab = (lab << 1) | bits[j, l]
        u[j] = pts[lab2idx[lab]]
    for j in range(K):
        u[n + j] = tail[j]
    _full_z(K, T, psi, u, s0, xr, diff, z)
    ll = 0.0
    for r in range(2 * T):
        ll += _lq(y, z[r], mu, var, r)
    xs = np.empty(2 * K + 1, dtype=np.complex128)
    zl = np.empty(2 * K + 2)
    rows = np.empty(2 * K + 2, dtype=np.int64)
    macs = 0
    flips = 0
    inv_eta = 1.0 / eta
    states = np.zeros((sweeps if record else 1, W), dtype=np.int8)
    for it in range(sweeps):
        for w in range(W):
            jj = wpos[w]
            l = wlev[w]
            cur = bits[jj, l]
            lab = 0
            for ll_ in range(m):
                b = bits[jj, ll_]
                if ll_ == l:
                    b = 1 - b
                lab = (lab << 1) | b
            uold = u[jj]
            u[jj] = pts[lab2idx[lab]]
            _span_x(jj + 1, K, T, u, s0, xr, diff, xs)
            cntz, mc = _local_z(jj + 1, K, T, psi, xs, zl, rows)
            macs += mc
            delta = 0.0
            for i in range(cntz):
                r = rows[i]
                delta += _lq(y, zl[i], mu, var, r) - _lq(y, z[r], mu, var, r)
            # untempered conditional of bit = 1
            if cur == 0:
                p1 = 1.0 / (1.0 + math.exp(-delta)) if delta > -700 else 0.0
            else:
                p1 = 1.0 / (1.0 + math.exp(delta)) if delta < 700 else 0.0
            if it >= burn:
                lw = (1.0 - inv_eta) * ll + _softplus(delta) - _softplus(delta * inv_eta)
                den[w] = _lae(den[w], lw)
                num[w] = _lae(num[w], lw + math.log(max(p1, P_FLOOR_)))
                sq[w] = _lae(sq[w], 2 * lw)
                plain[w] += p1
            dt = delta * inv_eta
            palt = 1.0 / (1.0 + math.exp(-dt)) if dt > -700 else 0.0
            if unif[it, w] < palt:
                bits[jj, l] = 1 - cur
                for i in range(cntz):
                    z[rows[i]] = zl[i]
                ll += delta
                if it >= burn:
                    flips += 1
            else:
                u[jj] = uold
            if record:
                states[it, w] = bits[jj, l]
        lltrace[it] = ll
    return flips, macs, states


LOG2PI_ = float(np.log(2 * np.pi))
P_FLOOR_ = P_FLOOR


# ---------------------------------------------------------------- driver

def sampled_bits(n, m, S, s, level):
    """Positions and levels (0-based) of the undecided bits for stage s and
    level ``level``, in transmission order."""
    st = np.arange(n) % S          # stage index - 1
    pos, lev = [], []
    for j in range(n):
        if st[j] == s - 1:
            ls = range(level - 1, m)
        elif st[j] > s - 1:
            ls = range(m)
        else:
            continue
        for l in ls:
            pos.append(j)
            lev.append(l)
    return np.array(pos, dtype=np.int64), np.array(lev, dtype=np.int64)


def _gelman_rubin(tr):
    # tr: (chains, samples)
    c, k = tr.shape
    if c < 2 or k < 2:
        return np.nan
    means = tr.mean(1)
    Wv = tr.var(1, ddof=1).mean()
    B = k * means.var(ddof=1)
    if Wv <= 0:
        return np.inf if B > 0 else 1.0
    return float(np.sqrt(((k - 1) / k * Wv + B / k) / Wv))


def estimate_apps(rx, aux, S, s, level, context, config, rng, record=False):
    """b-SIC bit APPs P(b_level(v_{s,t}) | y, v^{s-1}, lower bit-planes of
    stage s) for every stage-s position, from ``config.n_par`` samplers.

    ``context`` is an index vector whose entries for previous stages and the
    lower levels of stage s are taken as known (genie or decided values).
    """
    n = rx.n
    m = rx.m
    M = rx.points.size
    labels = rx.labels
    lab2idx = np.empty(M, dtype=np.int64)
    lab2idx[labels] = np.arange(M)
    shifts = np.arange(m - 1, -1, -1)
    ctx_bits = ((labels[np.asarray(context)][:, None] >> shifts) & 1).astype(np.int8)
    wpos, wlev = sampled_bits(n, m, S, s, level)
    W = wpos.size
    K = aux.Kt
    T = n + K
    sweeps = config.sweeps
    den = np.full(W, -np.inf)
    num = np.full(W, -np.inf)
    sq = np.full(W, -np.inf)
    plain = np.zeros(W)
    traces = np.zeros((config.n_par, sweeps))
    pd, pn, ps = [], [], []
    flips = 0
    macs = 0
    states = []
    xr = rx.x_ref / abs(rx.x_ref) if abs(rx.x_ref) > 0 else 1.0 + 0j
    s0 = np.ascontiguousarray(rx.s0, dtype=np.complex128)
    z = np.empty(2 * T)
    for p in range(config.n_par):
        bits = ctx_bits.copy()
        bits[wpos, wlev] = rng.integers(0, 2, size=W)
        unif = rng.random((sweeps, W))
        if config.pool == "sampler":
            den_p, num_p, sq_p = np.full(W, -np.inf), np.full(W, -np.inf), np.full(W, -np.inf)
        else:
            den_p, num_p, sq_p = den, num, sq
        f, mc, st = _sampler(np.ascontiguousarray(rx.y, float), aux.mu.astype(float),
                             aux.var.astype(float), np.ascontiguousarray(aux.psi, np.complex128),
                             K, s0, np.ascontiguousarray(rx.tail, np.complex128), complex(xr),
                             bool(rx.differential), np.ascontiguousarray(rx.points, np.complex128),
                             lab2idx, m, bits, wpos, wlev, float(config.eta), sweeps,
                             config.burn_in, unif, den_p, num_p, sq_p, plain, traces[p], z, record)
        flips += f
        macs += mc
        if record:
            states.append(st)
        if config.pool == "sampler":
            pd.append(den_p)
            pn.append(num_p)
            ps.append(sq_p)
    if config.pool == "sampler":
        # equal weight per sampler
        est = np.mean([np.exp(a - b) for a, b in zip(pn, pd)], axis=0)
        ess = np.sum([np.exp(2 * a - b) for a, b in zip(pd, ps)], axis=0)
        p1 = est
        fallback = False
    else:
        with np.errstate(invalid="ignore", over="ignore"):
            p1 = np.exp(num - den)
            ess = np.exp(2 * den - sq)
        bad = ~np.isfinite(p1)
        fallback = bool(bad.any())
        if fallback:
            p1 = np.where(bad, plain / (config.n_par * config.n_iter), p1)
            ess = np.where(bad, 0.0, ess)
    p1 = np.clip(p1, 0.0, 1.0)
    post = traces[:, config.burn_in:]
    est = AppEstimate(p1=p1, ess=ess, eta=config.eta, pos=wpos, level=wlev + 1,
                      rhat=_gelman_rubin(post),
                      flip_rate=flips / max(1, W * config.n_iter * config.n_par),
                      macs=macs, fallback=fallback,
                      n_samples=config.n_par * config.n_iter, ll_trace=traces)
    if record:
        est.states = np.stack(states)
    return est


def stage_bit_apps(est, n, S, s, level):
    """Select the (N, 2) bit PMFs of the level-``level`` bits of stage s."""
    sel = (est.level == level) & (est.pos % S == s - 1)
    return est.pmf[sel]


def audit_cache(rx, aux, bits, z):
    """Max relative deviation between cached outputs and a fresh evaluation."""
    from .auxmodel import aux_noise_free
    M = rx.points.size
    lab2idx = np.empty(M, dtype=np.int64)
    lab2idx[rx.labels] = np.arange(M)
    lab = bits @ (1 << np.arange(rx.m - 1, -1, -1))
    zf = aux_noise_free(aux, rx, rx.points[lab2idx[lab]])
    return float(np.max(np.abs(zf - z) / np.maximum(1.0, np.abs(zf))))


def gibbs_sweep(rx, aux, bits, wpos, wlev, eta, rng):
    """One in-place sweep over the listed bits; returns the cached outputs."""
    K = aux.Kt
    T = rx.n + K
    M = rx.points.size
    lab2idx = np.empty(M, dtype=np.int64)
    lab2idx[rx.labels] = np.arange(M)
    W = wpos.size
    z = np.empty(2 * T)
    xr = rx.x_ref / abs(rx.x_ref) if abs(rx.x_ref) > 0 else 1.0 + 0j
    dummy = np.full(W, -np.inf)
    _sampler(np.ascontiguousarray(rx.y, float), aux.mu.astype(float), aux.var.astype(float),
             np.ascontiguousarray(aux.psi, np.complex128), K,
             np.ascontiguousarray(rx.s0, np.complex128),
             np.ascontiguousarray(rx.tail, np.complex128), complex(xr),
             bool(rx.differential), np.ascontiguousarray(rx.points, np.complex128), lab2idx,
             rx.m, bits, np.asarray(wpos, np.int64), np.asarray(wlev, np.int64), float(eta),
             1, 1, rng.random((1, W)), dummy, dummy.copy(), dummy.copy(), np.zeros(W),
             np.zeros(1), z, False)
    return z


class GibbsDetector:
    """b-SIC bit APPs by Gibbs sampling with a fixed configuration."""

    def __init__(self, config=GibbsConfig()):
        self.config = config

    def bit_apps(self, rx, aux, S, s, level, context, rng):
        est = estimate_apps(rx, aux, S, s, level, context, self.config, rng)
        return stage_bit_apps(est, rx.n, S, s, level), est


def tune_eta(train, aux, S, config, eta_grid=ETA_GRID, rng=None, rate_fn=None):
    """Line search over eta: maximize the training-set b-SIC rate; ties go to
    the smaller eta.  Returns (eta*, {eta: rate})."""
    if len(eta_grid) == 0:
        raise ValueError("empty eta grid")
    from .rates import estimate_bsic_gibbs
    rng = rng or np.random.default_rng(0)
    seed = int(rng.integers(2 ** 32))
    scores = {}
    for eta in sorted(eta_grid):
        cfg = GibbsConfig(config.n_iter, config.burn_in, config.n_par, float(eta), config.pool)
        r = estimate_bsic_gibbs(train, aux, S, cfg, np.random.default_rng(seed))
        scores[float(eta)] = r.rate
    best = max(scores.values())
    eta_star = min(e for e, v in scores.items() if v >= best - 1e-12)
    return eta_star, scores
