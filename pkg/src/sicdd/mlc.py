"""Polar-coded multilevel coding with SIC stages and list passing.

Every stage s and bit level l has its own polar code of length n/S.  The
decoder runs stages and levels in order; each surviving list candidate
carries its decided bits and path metric, gets its own detector APPs and
spawns up to L children.  CRC-passing children are preferred.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta

from .fba import ConditioningMask, run_fba, bit_marginals
from .linkmodel import make_frame
from .auxmodel import fit_moments
from .modem import stage_positions
from .polar import PolarCode, polar_transform, scl_decode, genie_llrs

LLR_CLIP = 40.0


@dataclass(eq=False)
class SicSchedule:
    S: int
    m: int
    codes: list                    # codes[s][l], s and l 0-based
    list_size: int = 8
    mode: str = "MSD"              # bit APP conditioning: MSD or bSIC
    design_id: str = ""

    def __post_init__(self):
        if len(self.codes) != self.S or any(len(c) != self.m for c in self.codes):
            raise ValueError("need S x m component codes")
        Ns = {c.N for row in self.codes for c in row}
        if len(Ns) != 1:
            raise ValueError("component codes must share one length")
        if self.mode not in ("MSD", "bSIC"):
            raise ValueError("mode must be MSD or bSIC")

    @property
    def N(self):
        return self.codes[0][0].N

    @property
    def n(self):
        """Symbols per frame."""
        return self.S * self.N

    @property
    def k_total(self):
        return sum(c.k for row in self.codes for c in row)

    @property
    def rate(self):
        """Information bits per channel use."""
        return self.k_total / self.n

    def stage_rates(self):
        return np.array([sum(c.k for c in row) / self.N for row in self.codes])

    def to_json(self):
        return json.dumps({"S": self.S, "m": self.m, "N": self.N, "list_size": self.list_size,
                           "mode": self.mode, "design_id": self.design_id,
                           "crc_len": self.codes[0][0].crc_len,
                           "crc_poly": self.codes[0][0].crc_poly,
                           "info_positions": [[c.to_positions() for c in row] for row in self.codes]})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        codes = [[PolarCode.from_positions(d["N"], p, crc_poly=d["crc_poly"], crc_len=d["crc_len"])
                  for p in row] for row in d["info_positions"]]
        return cls(d["S"], d["m"], codes, d["list_size"], d["mode"], d["design_id"])


@dataclass
class EncodedFrame:
    u_idx: np.ndarray              # symbol indices before differential coding
    codewords: list                # codewords[s][l]
    data: np.ndarray


def _bit_matrix(alphabet):
    return alphabet.bits


def encode_frame(data, schedule, alphabet):
    """Split data over the component codes, encode, map bits to symbols and
    interleave the stages.  Differential coding happens at transmission."""
    data = np.asarray(data, dtype=np.int8)
    if data.size != schedule.k_total:
        raise ValueError(f"need {schedule.k_total} data bits, got {data.size}")
    if alphabet.m != schedule.m:
        raise ValueError("alphabet does not match the number of bit levels")
    n, S, m = schedule.n, schedule.S, schedule.m
    labels = np.zeros(n, dtype=np.int64)
    cws = []
    a = 0
    for s in range(S):
        pos = stage_positions(n, S, s + 1)
        row = []
        for l in range(m):
            c = schedule.codes[s][l]
            x = c.encode(data[a:a + c.k])
            a += c.k
            labels[pos] |= x.astype(np.int64) << (m - 1 - l)
            row.append(x)
        cws.append(row)
    return EncodedFrame(alphabet.index_of_label[labels], cws, data)


# ---------------------------------------------------------------- decoding

def _llr(pb):
    with np.errstate(divide="ignore"):
        l = np.log(pb[:, 0]) - np.log(pb[:, 1])
    return np.clip(np.nan_to_num(l, nan=0.0, posinf=LLR_CLIP, neginf=-LLR_CLIP), -LLR_CLIP, LLR_CLIP)


class _AppCache:
    """Detector runs keyed by the conditioning they depend on."""

    def __init__(self, rx, aux, alphabet, S, mode, detector):
        self.rx, self.aux, self.S, self.mode, self.det = rx, aux, S, mode, detector
        self.bits = alphabet.bits
        self.lab2idx = alphabet.index_of_label
        self.n = rx.n
        self.M = alphabet.M
        self.tabs = {}
        self.runs = 0

    def bit_apps(self, B, s, l):
        """Bit PMFs (N, 2) of level l at stage s given decided bits B (n, m)."""
        n, S = self.n, self.S
        pos = stage_positions(n, S, s)
        prev = np.flatnonzero(np.arange(n) % S < s - 1)
        m = B.shape[1]
        wts = 1 << np.arange(m - 1, -1, -1)
        if self.mode == "MSD":
            key = (s, B[prev].tobytes())
        else:
            key = (s, l, B[prev].tobytes(), B[pos, :l - 1].tobytes())
        tab = self.tabs.get(key)
        if tab is None:
            mk = ConditioningMask(n, self.M)
            if prev.size:
                mk.pin(prev, self.lab2idx[B[prev].astype(np.int64) @ wts])
            if self.mode == "bSIC" and l > 1:
                mk.restrict_bits(pos, B[pos, :l - 1], self.bits)
            tab = self.det(self.rx, mk.check(), self.aux)
            self.tabs[key] = tab
            self.runs += 1
        known = B[pos] if (self.mode == "MSD" and l > 1) else None
        return bit_marginals(tab.pmf[pos], self.bits, l, known)


@dataclass
class DecodeResult:
    data: np.ndarray
    crc_ok: np.ndarray             # (S, m) component CRC flags of the output
    stage_ok: np.ndarray           # (S,) all levels of the stage passed
    metric: float
    detector_runs: int = 0


def msd_scl_decode(rx, aux, schedule, alphabet, L=None, detector=run_fba):
    """Decode one frame; L=1 is hard-decision multistage decoding."""
    L = schedule.list_size if L is None else int(L)
    n, S, m = schedule.n, schedule.S, schedule.m
    if rx.n != n:
        raise ValueError("frame length does not match the schedule")
    cache = _AppCache(rx, aux, alphabet, S, schedule.mode, detector)
    # candidate: (metric, decided bits, data parts, crc flags)
    cands = [(0.0, np.full((n, m), -1, dtype=np.int8), [], [])]
    for s in range(1, S + 1):
        pos = stage_positions(n, S, s)
        for l in range(1, m + 1):
            code = schedule.codes[s - 1][l - 1]
            kids = []
            for pm, B, parts, oks in cands:
                llr = _llr(cache.bit_apps(B, s, l))
                U, P = scl_decode(code, llr, L, pm)
                for u, p in zip(U, P):
                    d, ok = code.split(u)
                    B2 = B.copy()
                    B2[pos, l - 1] = polar_transform(u)
                    kids.append((float(p), B2, parts + [d], oks + [ok]))
            order = sorted(range(len(kids)), key=lambda i: (kids[i][0], i))
            good = [i for i in order if kids[i][3][-1]]
            pick = (good or order)[:L]
            cands = [kids[i] for i in pick]
    pm, B, parts, oks = cands[0]
    ok = np.array(oks, dtype=bool).reshape(S, m)
    return DecodeResult(np.concatenate(parts).astype(np.int8) if parts else np.zeros(0, np.int8),
                        ok, ok.all(1), pm, cache.runs)


# ---------------------------------------------------------------- design

def genie_reliability(frames, aux, S, alphabet, N, mode="MSD", detector=run_fba):
    """Mean soft error probability of every (stage, level, position) under
    genie-aided SC decoding; frames carry uniformly random symbols."""
    m = alphabet.m
    bits = alphabet.bits
    pe = np.zeros((S, m, N))
    for fr in frames:
        rx = aux.view(fr)
        u = np.asarray(fr.u_idx)
        B = bits[u]
        cache = _AppCache(rx, aux, alphabet, S, mode, detector)
        for s in range(1, S + 1):
            pos = stage_positions(rx.n, S, s)
            for l in range(1, m + 1):
                llr = _llr(cache.bit_apps(B, s, l))
                ut = polar_transform(B[pos, l - 1])
                lam = genie_llrs(llr, ut)
                # probability that the leaf decision disagrees with the truth
                pe[s - 1, l - 1] += 1.0 / (1.0 + np.exp(np.clip((1 - 2 * ut) * lam, -700, 700)))
    return pe / max(len(frames), 1)


def select_frozen(pe, k_total, crc_len=16):
    """Unfreeze the most reliable positions across all component codes until
    k_total data bits plus one CRC per non-empty code fit."""
    S, m, N = pe.shape
    flat = pe.reshape(-1)
    order = np.argsort(flat, kind="mergesort")
    active = np.ones(S * m, dtype=bool)
    if k_total == 0:
        active[:] = False
    while True:
        need = k_total + crc_len * int(active.sum())
        cand = [i for i in order if active[i // N]]
        if need > len(cand):
            if active.sum() <= 1:
                raise ValueError(f"rate target needs {need} positions, only {len(cand)} available")
            # not even room for the CRCs: drop the least reliable code
            score = np.where(active, np.median(pe.reshape(S * m, N), axis=1), -np.inf)
            active[int(np.argmax(score))] = False
            continue
        chosen = np.array(cand[:need], dtype=np.int64)
        cnt = np.bincount(chosen // N, minlength=S * m)
        weak = active & (cnt <= crc_len)
        if not weak.any():
            break
        # drop the weakest under-filled code and retry
        active[np.flatnonzero(weak)[np.argmin(cnt[weak])]] = False
    info = np.zeros(S * m * N, dtype=bool)
    if k_total:
        info[chosen] = True
    return info.reshape(S, m, N)


def design_codes(frames, aux, S, alphabet, k_total, list_size=8, mode="MSD",
                 crc_len=16, detector=run_fba, design_id=""):
    """Monte Carlo polar design over all S x m component codes at once."""
    n = frames[0].n
    if n % S:
        raise ValueError("S must divide the frame length")
    N = n // S
    if N & (N - 1):
        raise ValueError("component code length n/S must be a power of two")
    pe = genie_reliability(frames, aux, S, alphabet, N, mode, detector)
    info = select_frozen(pe, k_total, crc_len)
    codes = [[PolarCode(N, ~info[s, l], crc_len=crc_len) for l in range(alphabet.m)]
             for s in range(S)]
    sch = SicSchedule(S, alphabet.m, codes, list_size, mode, design_id)
    sch.reliability = pe
    return sch


# ---------------------------------------------------------------- FER

def clopper_pearson(k, n, conf=0.95):
    a = 1 - conf
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class FerPoint:
    snr_db: float
    fer: float
    ci_lo: float
    ci_hi: float
    n_frames: int
    n_errors: int
    S: int = 1
    list_size: int = 8
    design_id: str = ""
    detector_runs: int = 0


def frame_rng(seed, snr_idx, frame_idx):
    """Per-frame generator, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, snr_idx, frame_idx])))


def _one_frame(args):
    schedule, alphabet, tapset, config, aux, snr, seed, si, f, detector = args
    rng = frame_rng(seed, si, f)
    data = rng.integers(0, 2, schedule.k_total).astype(np.int8)
    enc = encode_frame(data, schedule, alphabet)
    fr = make_frame(alphabet, schedule.n, snr, tapset, config, rng, u_idx=enc.u_idx)
    res = msd_scl_decode(aux.view(fr), aux, schedule, alphabet, detector=detector)
    return (not np.array_equal(res.data, data)), res.detector_runs


def fit_aux(aux, alphabet, n, snr_db, tapset, config, seed, snr_idx, n_train=20):
    """Auxiliary moments fitted on training frames drawn from their own seeds."""
    rng = frame_rng(seed, snr_idx, 2 ** 31)
    train = [make_frame(alphabet, n, snr_db, tapset, config, rng) for _ in range(n_train)]
    return fit_moments(aux, train)


def fer_sim(schedule, alphabet, tapset, config, aux, snr_list, n_frames, seed=0,
            max_errors=100, min_frames=0, batch=32, workers=1, detector=run_fba, n_train=20,
            stop_fer=0.0):
    """FER per SNR with Clopper-Pearson intervals.  Frames run in fixed
    batches and stop once max_errors errors and min_frames frames are in;
    the result does not depend on the number of workers.  With stop_fer > 0
    the sweep ends after the first point whose upper CI bound is below it."""
    out = []
    pool = None
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        pool = ProcessPoolExecutor(workers)
    try:
        for si, snr in enumerate(snr_list):
            a = fit_aux(aux, alphabet, schedule.n, snr, tapset, config, seed, si, n_train)
            errs = done = runs = 0
            while done < n_frames:
                todo = range(done, min(done + batch, n_frames))
                args = [(schedule, alphabet, tapset, config, a, snr, seed, si, f, detector) for f in todo]
                res = list(pool.map(_one_frame, args)) if pool else [_one_frame(x) for x in args]
                errs += sum(e for e, _ in res)
                runs += sum(r for _, r in res)
                done += len(todo)
                if errs >= max_errors and done >= min_frames:
                    break
            lo, hi = clopper_pearson(errs, done)
            out.append(FerPoint(float(snr), errs / done, lo, hi, done, errs, schedule.S,
                                schedule.list_size, schedule.design_id, runs))
            if hi < stop_fer:
                break
    finally:
        if pool:
            pool.shutdown()
    return out


def snr_at_fer(snr_db, fer, target):
    """SNR where the FER curve crosses ``target`` (log-linear interpolation)."""
    snr_db = np.asarray(snr_db, float)
    f = np.asarray(fer, float)
    for i in range(1, len(f)):
        if f[i - 1] >= target > f[i] or f[i - 1] > target >= f[i]:
            if f[i] <= 0:
                return float(snr_db[i])
            a, b = np.log10(f[i - 1]), np.log10(f[i])
            return float(snr_db[i - 1] + (np.log10(target) - a) / (b - a) * (snr_db[i] - snr_db[i - 1]))
    return np.nan
