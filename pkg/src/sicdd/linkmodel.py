"""Bandlimited direct-detection link: FD-RC pulse, fiber dispersion, square-law
detection, brickwall receive filter and 2x sampling.

Time is normalized to the symbol period (T_s = 1, B = 1); the physical symbol
rate only enters through the dispersion phase.  Rate-2 taps psi_k sit at
t = (k - Kt)/2 for k = 0..2Kt.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .modem import build_alphabet

BETA2_SSMF = -2.168e-23   # s^2/km


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinkConfig:
    B: float = 35e9
    alpha: float = 0.2
    L: float = 30.0
    beta2: float = BETA2_SSMF
    N0B: float = 1.0
    Nos_sim: int = 4
    Nos_rx: int = 2
    taps_half: int = 101
    fast_path: bool = True
    n_fft: int = 2 ** 16

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.L < 0:
            raise ValueError("fiber length must be >= 0")
        if self.Nos_rx != 2:
            raise ValueError("receiver oversampling is fixed to 2")
        if self.Nos_sim < self.Nos_rx or self.Nos_sim % 2:
            raise ValueError("Nos_sim must be an even integer >= Nos_rx")
        if self.taps_half < 1:
            raise ValueError("taps_half must be >= 1")
        if self.N0B <= 0:
            raise ValueError("N0B must be positive")

    @property
    def synthesis(self):
        """True when the oversampled waveform path is needed."""
        return self.alpha > 0 or not self.fast_path


def rc_spectrum(alpha, f, B=1.0):
    """Unit-energy FD-RC spectrum G(f)."""
    f = np.abs(np.asarray(f, dtype=float)) / B
    amp = 1.0 / np.sqrt(B * (1 - alpha / 4))
    lo, hi = (1 - alpha) / 2, (1 + alpha) / 2
    G = np.where(f <= lo, 1.0, 0.0)
    if alpha > 0:
        roll = (f > lo) & (f <= hi)
        G = np.where(roll, 0.5 * (1 + np.cos(np.pi / alpha * (f - lo))), G)
    return amp * G


def rc_pulse(alpha, B, t):
    """Unit-energy FD-RC pulse g(t); alpha = 0 is the sinc pulse."""
    t = np.asarray(t, dtype=float) * B
    g0 = np.sqrt(B / (1 - alpha / 4))
    den = 1 - (2 * alpha * t) ** 2
    sing = np.isclose(den, 0.0, atol=1e-12)
    safe = np.where(sing, 1.0, den)
    g = np.sinc(t) * np.cos(np.pi * alpha * t) / safe
    if alpha > 0:
        g = np.where(sing, np.pi / 4 * np.sinc(1 / (2 * alpha)), g)
    return g0 * g


def cd_transfer(f, beta2, L):
    """All-pass chromatic dispersion response, f in Hz, beta2 in s^2/km."""
    w = 2 * np.pi * np.asarray(f, dtype=float)
    return np.exp(1j * beta2 / 2 * w ** 2 * L)


@dataclass(frozen=True, eq=False)
class TapSet:
    """Rate-2 taps (psi) plus the matching taps on the synthesis grid."""
    psi: np.ndarray
    psi_sim: np.ndarray = None
    nos_sim: int = 4
    energy_fraction: float = 1.0
    offset: int = 0          # first kept rate-2 tap of the parent tap set

    @property
    def K(self):
        return self.psi.size

    @property
    def Ktilde(self):
        return (self.psi.size - 1) // 2

    def to_csv(self, path):
        k = np.arange(self.K)
        np.savetxt(path, np.column_stack([k, self.psi.real, self.psi.imag]),
                   delimiter=",", header="index,re,im", comments="",
                   fmt=["%d", "%.17g", "%.17g"])

    @classmethod
    def from_csv(cls, path):
        a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if a.shape[0] % 2 == 0:
            raise ValueError("tap count must be odd")
        return cls(psi=a[:, 1] + 1j * a[:, 2])


def derive_taps(config):
    """Sample psi(t) = g * h_L on the Nos_sim grid by FFT and keep K = 2Kt+1
    rate-2 taps around the pulse center."""
    fs = config.Nos_sim
    N = config.n_fft
    f = np.fft.fftfreq(N, d=1.0 / fs)
    spec = rc_spectrum(config.alpha, f) * cd_transfer(f * config.B, config.beta2, config.L)
    full = np.fft.fftshift(fs * np.fft.ifft(spec))      # center at index N//2
    c = N // 2
    Kt = config.taps_half
    d = fs // 2
    lags = np.arange(-fs * Kt // 2, fs * Kt // 2 + 1)   # t = l/fs in [-Kt/2, Kt/2]
    psi_sim = full[c + lags]
    psi = psi_sim[::d]
    total = np.sum(np.abs(full[c % d::d]) ** 2)
    frac = float(np.sum(np.abs(psi) ** 2) / total)
    if frac < 0.999:
        warnings.warn(f"tap truncation keeps only {frac:.5f} of the pulse energy",
                      TruncationWarning, stacklevel=2)
    return TapSet(psi=psi, psi_sim=psi_sim, nos_sim=fs, energy_fraction=frac)


def upsample_state(s0, x):
    """Zero-interleaved vector [0, s0_1, 0, s0_2, ..., 0, x_1, 0, x_2, ...]."""
    sym = np.concatenate([np.asarray(s0, dtype=complex), np.asarray(x, dtype=complex)])
    xt = np.zeros(2 * sym.size, dtype=complex)
    xt[1::2] = sym
    return xt


class ToeplitzOperator:
    """Banded 2n x (2n+K-1) convolution operator, applied matrix-free."""

    def __init__(self, psi, n):
        self.psi = np.asarray(psi, dtype=complex)
        self.n = int(n)

    @property
    def shape(self):
        return (2 * self.n, 2 * self.n + self.psi.size - 1)

    def apply(self, xt):
        xt = np.asarray(xt)
        if xt.shape[-1] != self.shape[1]:
            raise ValueError(f"expected length {self.shape[1]}, got {xt.shape[-1]}")
        return np.convolve(xt, self.psi, mode="valid")

    def dense(self):
        rows, cols = self.shape
        K = self.psi.size
        A = np.zeros((rows, cols), dtype=complex)
        for r in range(rows):
            A[r, r:r + K] = self.psi[::-1]
        return A


def noise_free_output(s0, x, psi):
    """|Psi xt|^2 for the direct (rate-2) model, length 2*len(x)."""
    xt = upsample_state(s0, x)
    return np.abs(ToeplitzOperator(psi, len(x)).apply(xt)) ** 2


def synthesize_output(s0, x, tapset):
    """Noise-free samples through the oversampled waveform path.

    The frame [s0, x] is treated as one period of a cyclic signal, so the
    known guard symbols provide the periodic extension.  The square-law output
    is brickwall filtered to |f| <= B and picked at the receiver sample times.
    """
    Kt = tapset.Ktilde
    fs = tapset.nos_sim
    sym = np.concatenate([np.asarray(s0, dtype=complex), np.asarray(x, dtype=complex)])
    Nsym = sym.size
    Ns = fs * Nsym
    a = np.zeros(Ns, dtype=complex)
    a[::fs] = sym
    ker = np.zeros(Ns, dtype=complex)
    lags = np.arange(-fs * Kt // 2, fs * Kt // 2 + 1)
    np.add.at(ker, lags % Ns, tapset.psi_sim)
    wave = np.fft.ifft(np.fft.fft(a) * np.fft.fft(ker))
    p = np.abs(wave) ** 2
    f = np.fft.fftfreq(Ns, d=1.0 / fs)
    z = np.fft.ifft(np.fft.fft(p) * (np.abs(f) <= 1.0)).real
    # 1-based row r sits at symbol-time (r - Kt)/2 on the x_j grid, i.e. at
    # (r + Kt - 2)/2 counted from the first guard symbol
    r = np.arange(1, 2 * len(x) + 1)
    m = (fs // 2) * (r + Kt - 2)
    return z[m % Ns]


@dataclass(eq=False)
class ObservationFrame:
    """One transmitted frame.  ``x`` holds the data symbols followed by the
    known tail, all scaled to the operating SNR; ``y`` has 2*len(x) samples."""
    x: np.ndarray
    s0: np.ndarray
    y: np.ndarray
    snr_db: float
    n: int = None
    u_idx: np.ndarray = None      # data symbols as alphabet indices (u domain)
    tail_u: np.ndarray = None     # known tail in the u domain (scaled)
    x_ref: complex = 1.0          # phase reference of the differential coder
    scale: float = 1.0
    alphabet: object = None
    differential: bool = True
    z: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n is None:
            self.n = len(self.x)
        if self.y.size != 2 * len(self.x):
            raise ValueError("y must hold 2 samples per transmitted symbol")


def simulate_link(x, s0, tapset, config, rng, snr_db=None):
    """Pass symbols through the link.  x may include known tail symbols."""
    x = np.asarray(x, dtype=complex)
    s0 = np.asarray(s0, dtype=complex)
    if s0.size != tapset.Ktilde:
        raise ValueError(f"s0 must hold {tapset.Ktilde} symbols, got {s0.size}")
    if config.synthesis and tapset.psi_sim is not None:
        z = synthesize_output(s0, x, tapset)
    else:
        z = noise_free_output(s0, x, tapset.psi)
    y = z + np.sqrt(config.N0B) * rng.standard_normal(z.size)
    if snr_db is None:
        snr_db = tx_power([x], config)[1]
    return ObservationFrame(x=x, s0=s0, y=y, snr_db=snr_db, z=z)


def pulse_autocorr(alpha, J, nf=2 ** 14):
    """R_g(j) = int |G(f)|^2 e^{j2 pi f j} df for j = 0..J (real, even)."""
    f = (np.arange(nf) + 0.5) / nf * (1 + alpha) / 2     # midpoint rule on [0, (1+a)/2]
    G2 = rc_spectrum(alpha, f) ** 2
    df = (1 + alpha) / 2 / nf
    j = np.arange(J + 1)
    return 2 * df * (G2[None, :] * np.cos(2 * np.pi * f[None, :] * j[:, None])).sum(1)


def tx_power(x_frames, config, J=64):
    """Average transmit power ||X(t)||^2 / n over frames and the SNR in dB."""
    R = pulse_autocorr(config.alpha, J) if config.alpha > 0 else np.r_[1.0, np.zeros(J)]
    tot, cnt = 0.0, 0
    for x in x_frames:
        x = np.asarray(x, dtype=complex)
        n = x.size
        acc = R[0] * np.sum(np.abs(x) ** 2)
        for j in range(1, min(J, n - 1) + 1):
            acc += 2 * R[j] * np.real(np.sum(x[:-j] * np.conj(x[j:])))
        tot += acc
        cnt += n
    P = float(tot / cnt)
    snr = 10 * np.log10(P / config.N0B) if P > 0 else -np.inf
    return P, snr


def unit_power(alphabet, alpha):
    """Transmit power of i.i.d. uniform symbols at unit scale.  The mean
    component sees |G(0)|^2 = 1/(1 - alpha/4) for the unit-energy FD-RC."""
    pts = alphabet.points
    mu = pts.mean()
    var = np.mean(np.abs(pts - mu) ** 2)
    return float(var + np.abs(mu) ** 2 / (1 - alpha / 4))


def snr_scale(alphabet, snr_db, config):
    return float(np.sqrt(10 ** (snr_db / 10) * config.N0B / unit_power(alphabet, config.alpha)))


def spectral_efficiency(rate_bpcu, alpha):
    if rate_bpcu < 0:
        raise ValueError("rate must be >= 0")
    return rate_bpcu / (1 + alpha)


def make_frame(alphabet, n, snr_db, tapset, config, rng, differential=True,
               guard="random", u_idx=None):
    """Draw (or take) data symbols, add guard symbols, diff-encode, scale and
    transmit.  Guards: 'random' known symbols, 'const' the default point, or
    'zero' (outside the alphabet, used for the phase-ambiguity example)."""
    from .modem import diff_encode_idx
    Kt = tapset.Ktilde
    a = snr_scale(alphabet, snr_db, config)
    if u_idx is None:
        u_idx = rng.integers(alphabet.M, size=n)
    u_idx = np.asarray(u_idx, dtype=np.int64)
    n = u_idx.size
    pts = alphabet.points
    x0 = alphabet.default_x0()
    if guard == "random":
        s0_idx = rng.integers(alphabet.M, size=Kt)
        tail_idx = rng.integers(alphabet.M, size=Kt)
    elif guard in ("const", "zero"):
        s0_idx = np.full(Kt, alphabet.index(x0)[0])
        tail_idx = s0_idx.copy()
    else:
        raise ValueError(f"unknown guard {guard!r}")
    s0 = pts[s0_idx]
    if guard == "zero":
        s0 = np.zeros(Kt, dtype=complex)
        x_ref_idx = alphabet.index(x0)[0]
    else:
        x_ref_idx = s0_idx[-1]
    if differential:
        x_idx = diff_encode_idx(np.concatenate([u_idx, tail_idx]), x_ref_idx, alphabet)
    else:
        x_idx = np.concatenate([u_idx, tail_idx])
    x = pts[x_idx].astype(complex)
    tail_u = pts[tail_idx].astype(complex)
    if guard == "zero":
        x[n:] = 0
        tail_u[:] = 0
    fr = simulate_link(a * x, a * s0, tapset, config, rng, snr_db=snr_db)
    fr.n = n
    fr.u_idx = u_idx
    fr.tail_u = a * tail_u
    fr.x_ref = a * pts[x_ref_idx]
    fr.scale = a
    fr.alphabet = alphabet
    fr.differential = differential
    return fr


def default_alphabet(spec):
    """'4-ASK' style string to an Alphabet."""
    M, kind = spec.split("-")
    return build_alphabet(kind, int(M))
