"""Monte Carlo estimates of the mismatched rates JDD, SDD, SIC, MSD and b-SIC.

All estimators condition on the true symbols of earlier stages (genie) and
treat each frame as one sample of the per-symbol average, so the standard
error accounts for the dependence between symbols of a frame.  Exact
posterior-entropy versions for tiny instances are in ``exact_rates``.
"""
from dataclasses import dataclass, field

import numpy as np

from .auxmodel import ReceiverFrame, frame_logq, aux_noise_free
from .fba import (ConditioningMask, run_fba, stage_context_mask, bit_marginals,
                  enumerate_posterior)
from .modem import stage_positions

APP_FLOOR = 1e-12
LN2 = np.log(2.0)


@dataclass
class RateEstimate:
    kind: str                      # JDD, SDD, SIC, MSD, bSIC
    rate: float
    stderr: float
    n_symbols: int
    m: int = 1
    S: int = 1
    snr_db: float = np.nan
    stage_rates: np.ndarray = None     # (S,)
    stage_stderr: np.ndarray = None
    level_rates: np.ndarray = None     # (S, m) for bit-level kinds
    level_stderr: np.ndarray = None
    clamped: bool = False              # estimate left [0, m] and was clipped
    floored: int = 0                   # APPs raised to APP_FLOOR
    eta: float = np.nan
    stalled: bool = False
    extra: dict = field(default_factory=dict)
    samples: np.ndarray = field(default=None, repr=False)        # per frame
    stage_samples: np.ndarray = field(default=None, repr=False)  # (F, S)
    level_samples: np.ndarray = field(default=None, repr=False)  # (F, S, m)

    @property
    def label(self):
        return self.kind if self.kind in ("JDD", "SDD") else f"{self.kind}({self.S})"

    def __repr__(self):
        return (f"RateEstimate({self.label}, {self.rate:.4f} +- {self.stderr:.4f}, "
                f"n={self.n_symbols})")


def _mean_se(samples):
    s = np.asarray(samples, float)
    if s.ndim == 1:
        s = s[:, None]
    mean = s.mean(0)
    se = s.std(0, ddof=1) / np.sqrt(s.shape[0]) if s.shape[0] > 1 else np.full(s.shape[1], np.nan)
    return mean, se


def _finish(kind, samples, n_sym, m, S=1, snr_db=np.nan, stage_samples=None,
            level_samples=None, **kw):
    samples = np.asarray(samples, float)
    mean, se = _mean_se(samples)
    r = float(mean[0])
    clamped = not 0.0 <= r <= m
    est = RateEstimate(kind, float(np.clip(r, 0.0, m)), float(se[0]), n_sym, m, S, snr_db,
                       clamped=clamped, samples=samples, **kw)
    if stage_samples is not None:
        est.stage_samples = np.asarray(stage_samples, float)
        est.stage_rates, est.stage_stderr = _mean_se(est.stage_samples)
    if level_samples is not None:
        F = level_samples.shape[0]
        est.level_samples = np.asarray(level_samples, float)
        lv, lse = _mean_se(est.level_samples.reshape(F, -1))
        est.level_rates, est.level_stderr = lv.reshape(S, m), lse.reshape(S, m)
    return est


def combine(estimates):
    """Merge estimates of the same kind computed on disjoint frame sets."""
    e0 = estimates[0]
    if any((e.kind, e.S, e.m) != (e0.kind, e0.S, e0.m) for e in estimates):
        raise ValueError("cannot combine different rate kinds")
    cat = lambda name: (None if getattr(e0, name) is None
                        else np.concatenate([getattr(e, name) for e in estimates]))
    out = _finish(e0.kind, cat("samples"), sum(e.n_symbols for e in estimates), e0.m, e0.S,
                  e0.snr_db, cat("stage_samples"), cat("level_samples"),
                  floored=sum(e.floored for e in estimates), eta=e0.eta,
                  stalled=bool(np.mean([e.stalled for e in estimates]) > 0.5))
    keys = set().union(*[e.extra.keys() for e in estimates])
    out.extra = {k: float(np.nanmean([e.extra.get(k, np.nan) for e in estimates])) for k in keys}
    return out


def _views(frames, aux):
    return [f if isinstance(f, ReceiverFrame) else ReceiverFrame.from_frame(f, aux)
            for f in frames]


def _log2p(p):
    p = np.asarray(p, float)
    low = p < APP_FLOOR
    return np.log2(np.where(low, APP_FLOOR, p)), int(low.sum())


def _snr(frames):
    return getattr(frames[0], "snr_db", np.nan) if frames else np.nan


# ---------------------------------------------------------------- symbol rates

def estimate_sic(frames, aux, S, detector=run_fba):
    """I_SIC(S) with genie conditioning on earlier stages; S = 1 is SDD."""
    rxs = _views(frames, aux)
    n = rxs[0].n
    m = rxs[0].m
    M = rxs[0].points.size
    per = np.empty((len(rxs), S))
    floored = 0
    for f, rx in enumerate(rxs):
        u = np.asarray(rx.u_idx)
        for s in range(1, S + 1):
            pos = stage_positions(n, S, s)
            tab = detector(rx, stage_context_mask(n, M, S, s, u), aux)
            lp, nf = _log2p(tab.pmf[pos, u[pos]])
            floored += nf
            per[f, s - 1] = m + lp.mean()
    kind = "SDD" if S == 1 else "SIC"
    return _finish(kind, per.mean(1), len(rxs) * n, m, S, _snr(frames), per, floored=floored)


def estimate_sdd(frames, aux, detector=run_fba):
    return estimate_sic(frames, aux, 1, detector)


# ---------------------------------------------------------------- bit levels

def _bit_rates(frames, aux, S, mode, detector):
    rxs = _views(frames, aux)
    n = rxs[0].n
    m = rxs[0].m
    M = rxs[0].points.size
    bits = ((rxs[0].labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)
    per = np.empty((len(rxs), S, m))
    floored = 0
    for f, rx in enumerate(rxs):
        u = np.asarray(rx.u_idx)
        for s in range(1, S + 1):
            pos = stage_positions(n, S, s)
            tab = None
            for l in range(1, m + 1):
                if mode == "MSD":
                    # the stage mask does not depend on the level
                    if tab is None:
                        tab = detector(rx, stage_context_mask(n, M, S, s, u), aux)
                    known = bits[u[pos]] if l > 1 else None
                    pb = bit_marginals(tab.pmf[pos], bits, l, known)
                else:
                    mk = stage_context_mask(n, M, S, s, u, bits, l, restrict_stage=True)
                    pb = bit_marginals(detector(rx, mk, aux).pmf[pos], bits, l)
                b = bits[u[pos], l - 1]
                lp, nf = _log2p(pb[np.arange(pos.size), b])
                floored += nf
                per[f, s - 1, l - 1] = 1 + lp.mean()
    return _finish(mode, per.sum(2).mean(1), len(rxs) * n, m, S, _snr(frames),
                   per.sum(2), per, floored=floored)


def estimate_msd(frames, aux, S, detector=run_fba):
    """Bit-level rates, each level conditioned on the own lower bits only."""
    return _bit_rates(frames, aux, S, "MSD", detector)


def estimate_bsic(frames, aux, S, detector=run_fba):
    """Bit-level rates, each level conditioned on the lower bit-planes of the
    whole stage."""
    return _bit_rates(frames, aux, S, "bSIC", detector)


def estimate_bsic_gibbs(frames, aux, S, config, rng):
    """b-SIC rate from Gibbs APP estimates."""
    from .gibbs import estimate_apps, stage_bit_apps
    rxs = _views(frames, aux)
    n = rxs[0].n
    m = rxs[0].m
    bits = ((rxs[0].labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)
    per = np.empty((len(rxs), S, m))
    floored = 0
    stalls = []
    rhat = []
    flips = []
    for f, rx in enumerate(rxs):
        u = np.asarray(rx.u_idx)
        for s in range(1, S + 1):
            pos = stage_positions(n, S, s)
            for l in range(1, m + 1):
                est = estimate_apps(rx, aux, S, s, l, u, config, rng)
                pb = stage_bit_apps(est, n, S, s, l)
                b = bits[u[pos], l - 1]
                lp, nf = _log2p(pb[np.arange(pos.size), b])
                floored += nf
                per[f, s - 1, l - 1] = 1 + lp.mean()
                stalls.append(est.stalled)
                rhat.append(est.rhat)
                flips.append(est.flip_rate)
    rhat = np.asarray(rhat, float)
    return _finish("bSIC", per.sum(2).mean(1), len(rxs) * n, m, S, _snr(frames),
                   per.sum(2), per, floored=floored, eta=config.eta,
                   stalled=bool(np.mean(stalls) > 0.5),
                   extra={"stall_fraction": float(np.mean(stalls)),
                          "rhat_median": float(np.nanmedian(rhat)) if np.isfinite(rhat).any() else np.nan,
                          "flip_rate": float(np.mean(flips))})


# ---------------------------------------------------------------- JDD

def estimate_jdd(frames, aux, detector=run_fba):
    """(1/n)(log2 q(y|u) - log2 q(y)); q(y) from the free trellis."""
    rxs = _views(frames, aux)
    n = rxs[0].n
    m = rxs[0].m
    M = rxs[0].points.size
    per = np.empty(len(rxs))
    for f, rx in enumerate(rxs):
        lyu = frame_logq(aux, rx, rx.points[rx.u_idx])
        ly = detector(rx, ConditioningMask.free(n, M), aux).log_evidence
        per[f] = (lyu - ly) / (n * LN2)
    return _finish("JDD", per, len(rxs) * n, m, 1, _snr(frames))


def estimate(kind, frames, aux, S=1, detector=run_fba):
    kind = kind.upper()
    if kind == "JDD":
        return estimate_jdd(frames, aux, detector)
    if kind == "SDD":
        return estimate_sdd(frames, aux, detector)
    if kind == "SIC":
        return estimate_sic(frames, aux, S, detector)
    if kind == "MSD":
        return estimate_msd(frames, aux, S, detector)
    if kind == "BSIC":
        return estimate_bsic(frames, aux, S, detector)
    raise ValueError(f"unknown rate kind {kind!r}")


# ---------------------------------------------------------------- exact rates

def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _cond_entropy(P, key, target):
    """H(target | key) in bits under the sequence PMF P; key is (N, c) ints."""
    if key.shape[1] == 0:
        return _entropy(np.bincount(target, weights=P))
    _, ki = np.unique(key, axis=0, return_inverse=True)
    ki = ki.ravel()
    nt = int(target.max()) + 1
    joint = np.bincount(ki * nt + target, weights=P)
    return _entropy(joint) - _entropy(np.bincount(ki, weights=P))


def exact_rates(rx, aux, S_list=(1, 2, 4), limit=2 ** 20):
    """Posterior-entropy rates for one observation, by full enumeration.

    Every rate is m - H/n with H a conditional entropy of the posterior
    q(u | y).  For y drawn from q itself these are unbiased per-frame
    estimates, and the chain inequalities hold for every single y.
    Returns a dict with keys JDD, SDD, SIC(S), MSD(S), bSIC(S).
    """
    n = rx.n
    M = rx.points.size
    m = rx.m
    seqs, lw = enumerate_posterior(rx, ConditioningMask.free(n, M), aux, limit)
    P = np.exp(lw - lw.max())
    P /= P.sum()
    labels = np.asarray(rx.labels) if rx.labels is not None else np.arange(M)
    B = ((labels[seqs][..., None] >> np.arange(m - 1, -1, -1)) & 1)   # (N, n, m)
    out = {"JDD": m - _entropy(P) / n}
    for S in S_list:
        if n % S:
            continue
        Hs = Hm = Hb = 0.0
        for s in range(1, S + 1):
            prev = np.flatnonzero(np.arange(n) % S < s - 1)
            pos = stage_positions(n, S, s)
            for k in pos:
                Hs += _cond_entropy(P, seqs[:, prev], seqs[:, k])
                for l in range(m):
                    own = np.concatenate([seqs[:, prev], B[:, k, :l]], axis=1)
                    Hm += _cond_entropy(P, own, B[:, k, l])
                    plane = np.concatenate([seqs[:, prev], B[:, pos, :l].reshape(len(P), -1)], axis=1)
                    Hb += _cond_entropy(P, plane, B[:, k, l])
        name = "SDD" if S == 1 else f"SIC({S})"
        out[name] = m - Hs / n
        out[f"MSD({S})"] = m - Hm / n
        out[f"bSIC({S})"] = m - Hb / n
    return out


def sample_aux_observation(rx, aux, rng, u_idx=None):
    """Replace y (and u) of a receiver frame by a draw from the auxiliary
    model itself, for matched exact-rate checks."""
    M = rx.points.size
    u = rng.integers(0, M, size=rx.n) if u_idx is None else np.asarray(u_idx)
    z = aux_noise_free(aux, rx, rx.points[u])
    par = np.arange(z.size) % 2
    y = z + aux.mu[par] + np.sqrt(aux.var[par]) * rng.standard_normal(z.size)
    rx2 = ReceiverFrame(y=y, s0=rx.s0, tail=rx.tail, n=rx.n, points=rx.points,
                        x_ref=rx.x_ref, differential=rx.differential, nphase=rx.nphase,
                        u_idx=u, labels=rx.labels, m=rx.m)
    return rx2


# ---------------------------------------------------------------- utilities

def snr_at_rate(snr_db, rates, target):
    """SNR where a rate curve first reaches ``target`` (linear interpolation
    on the increasing part); nan if never reached."""
    snr_db = np.asarray(snr_db, float)
    r = np.maximum.accumulate(np.asarray(rates, float))
    if r[-1] < target or r[0] > target:
        return np.nan if r[-1] < target else float(snr_db[0])
    i = int(np.argmax(r >= target))
    if i == 0:
        return float(snr_db[0])
    r0, r1 = r[i - 1], r[i]
    if r1 == r0:
        return float(snr_db[i])
    return float(snr_db[i - 1] + (target - r0) / (r1 - r0) * (snr_db[i] - snr_db[i - 1]))
