"""Reduced-memory Gaussian auxiliary channel q(y|u).

The receiver keeps 2Kt'+1 rate-2 taps and models the residual (true output
minus the truncated noise-free output) as independent Gaussians whose mean
and variance depend only on the sample parity within a symbol pair.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .linkmodel import TapSet, noise_free_output

LOG2PI = np.log(2 * np.pi)
VAR_FLOOR = 1e-12


def _window_offset(psi, K2):
    """Start of the length-K2 window of maximal energy; ties go to the window
    whose center is closest to the energy centroid."""
    e = np.abs(psi) ** 2
    cs = np.concatenate(([0.0], np.cumsum(e)))
    wins = cs[K2:] - cs[:-K2]
    cen = np.sum(np.arange(e.size) * e) / e.sum()
    best = wins.max()
    cand = np.flatnonzero(wins >= best * (1 - 1e-12))
    mid = cand + (K2 - 1) / 2
    return int(cand[np.argmin(np.abs(mid - cen))])


def truncate_taps(tapset, Kt_prime):
    """Keep the 2Kt'+1 consecutive rate-2 taps of maximal energy.  No
    renormalization: the lost energy is part of the mismatch."""
    Kt = tapset.Ktilde
    if Kt_prime < 0 or Kt_prime > Kt:
        raise ValueError(f"need 0 <= Kt' <= {Kt}, got {Kt_prime}")
    K2 = 2 * Kt_prime + 1
    e = np.abs(tapset.psi) ** 2
    o = _window_offset(tapset.psi, K2)
    frac = float(np.sum(e[o:o + K2]) / np.sum(e)) * tapset.energy_fraction
    return TapSet(psi=tapset.psi[o:o + K2].copy(), nos_sim=tapset.nos_sim,
                  energy_fraction=frac, offset=o)


@dataclass(frozen=True, eq=False)
class AuxChannel:
    """Truncated taps plus per-parity Gaussian moments.

    Parity 0 is the first sample of each symbol pair (odd taps), parity 1 the
    second (even taps, includes the newest symbol).
    """
    taps: TapSet
    mu: np.ndarray = field(default_factory=lambda: np.zeros(2))
    var: np.ndarray = field(default_factory=lambda: np.ones(2))
    clamped: bool = False

    @property
    def psi(self):
        return self.taps.psi

    @property
    def Kt(self):
        return self.taps.Ktilde

    @property
    def offset(self):
        return self.taps.offset

    def view(self, frame):
        """Receiver-side view of a transmitted frame for this auxiliary memory."""
        return ReceiverFrame.from_frame(frame, self)

    def with_moments(self, mu, var):
        return replace(self, mu=np.asarray(mu, float), var=np.asarray(var, float))


@dataclass(eq=False)
class ReceiverFrame:
    """What a Kt'-memory receiver sees: T = n + Kt' symbol pairs of samples,
    the Kt' known symbols before x_1 (absolute values), the differential
    reference and the known tail (u domain).  All values are scaled."""
    y: np.ndarray
    s0: np.ndarray
    tail: np.ndarray
    n: int
    points: np.ndarray
    x_ref: complex = 1.0
    differential: bool = True
    nphase: int = 2
    u_idx: np.ndarray = None
    labels: np.ndarray = None     # bit labels of the alphabet points
    m: int = 1

    @property
    def T(self):
        return self.n + self.s0.size

    @classmethod
    def from_frame(cls, frame, aux):
        Kp = aux.Kt
        Kt = frame.s0.size
        # receiver row r lines up with row r + offset of the full model
        lo = aux.offset
        T = frame.n + Kp
        y = frame.y[lo:lo + 2 * T] if lo >= 0 else None
        if lo < 0 or y.size != 2 * T:
            raise ValueError("auxiliary window does not fit the frame")
        s0 = frame.s0[Kt - Kp:] if Kp else frame.s0[:0]
        # the tail of the receiver frame: first Kp known tail symbols
        tail = frame.tail_u[:Kp]
        al = frame.alphabet
        return cls(y=y, s0=s0.astype(complex), tail=tail.astype(complex), n=frame.n,
                   points=frame.scale * al.points, x_ref=frame.x_ref,
                   differential=frame.differential and al.kind != "PAM",
                   nphase=al.nphase, u_idx=frame.u_idx, labels=al.labels, m=al.m)

    def x_of_u(self, u_vals):
        """Absolute transmit symbols for u values at positions 1..T."""
        u = np.asarray(u_vals, dtype=complex)
        if not self.differential:
            return u
        mag = np.abs(u)
        ph = np.where(mag > 0, u / np.where(mag > 0, mag, 1), 1.0)
        c = np.cumprod(ph) * _unit(self.x_ref)
        return mag * c

    def u_full(self, u_data):
        return np.concatenate([np.asarray(u_data, dtype=complex), self.tail])


def _unit(v):
    return v / abs(v) if abs(v) > 0 else 1.0


def aux_noise_free(aux, rx, u_data):
    """Noise-free output of the truncated model for data u (length 2T)."""
    x = rx.x_of_u(rx.u_full(u_data))
    return noise_free_output(rx.s0, x, aux.psi)


def fit_moments(aux, frames):
    """Moment-match per-parity residual mean and variance on training frames."""
    res = [[], []]
    for fr in frames:
        rx = ReceiverFrame.from_frame(fr, aux)
        z = aux_noise_free(aux, rx, rx.points[rx.u_idx])
        r = rx.y - z
        res[0].append(r[0::2])
        res[1].append(r[1::2])
    mu = np.empty(2)
    var = np.empty(2)
    for p in range(2):
        r = np.concatenate(res[p])
        if r.size < 2:
            raise ValueError("not enough training samples")
        mu[p] = r.mean()
        var[p] = r.var()
    clamped = bool(np.any(var < VAR_FLOOR))
    var = np.maximum(var, VAR_FLOOR)
    return replace(aux, mu=mu, var=var, clamped=clamped)


def logq_samples(aux, y, z, parity):
    """Per-sample Gaussian log-density of y given noise-free z."""
    parity = np.asarray(parity)
    mu = aux.mu[parity]
    v = aux.var[parity]
    r = np.asarray(y) - np.asarray(z) - mu
    return -0.5 * (LOG2PI + np.log(v)) - r ** 2 / (2 * v)


def eval_logq(aux, y_pair, window):
    """log q of one symbol pair given its Kt'+1 symbol window (absolute x,
    oldest first): the odd-tap sample then the even-tap sample."""
    K = aux.Kt
    w = np.asarray(window, dtype=complex)
    if w.size != K + 1:
        raise ValueError(f"window must hold {K + 1} symbols")
    psi = aux.psi
    # x_{k-i} pairs with psi_{2i} (second sample) and psi_{2i+1} (first sample)
    rev = w[::-1]
    e2 = np.sum(psi[0::2] * rev)
    e1 = np.sum(psi[1::2] * rev[1:]) if K else 0.0
    z = np.array([abs(e1) ** 2, abs(e2) ** 2])
    return float(np.sum(logq_samples(aux, y_pair, z, [0, 1])))


def frame_logq(aux, rx, u_data):
    """log q(y | u) for a whole receiver frame, direct evaluation."""
    z = aux_noise_free(aux, rx, u_data)
    par = np.arange(z.size) % 2
    return float(np.sum(logq_samples(aux, rx.y, z, par)))
