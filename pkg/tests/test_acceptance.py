"""Acceptance criteria 1-9.

Criteria 3-7 read results produced by tests/acceptance_jobs.py; a missing
or stale cache entry is recomputed here (hours on one core, see README).
Every test prints one PASS/FAIL line, collected in the terminal summary.
"""
import time
import warnings

import numpy as np
import pytest

import acceptance_jobs as jobs
from sicdd.auxmodel import AuxChannel, fit_moments, truncate_taps
from sicdd.fba import (ConditioningMask, bitlevel_apps, bit_marginals, brute_force_app, run_fba)
from sicdd.gibbs import GibbsConfig, estimate_apps
from sicdd.linkmodel import LinkConfig, derive_taps, make_frame, noise_free_output, rc_pulse
from sicdd.mlc import snr_at_fer
from sicdd.modem import build_alphabet
from sicdd.rates import estimate_sdd, exact_rates, sample_aux_observation, snr_at_rate

from conftest import random_instance

pytestmark = pytest.mark.acceptance


def verdict(report, ac, ok, detail):
    report(f"AC{ac} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- AC1

def test_ac1_fba_matches_enumeration(report):
    rng = np.random.default_rng(2024)
    t0 = time.time()
    worst = 0.0
    count = 0
    for M in (2, 4):
        A = build_alphabet("ASK", M)
        for K in (0, 1, 2, 3):
            for _ in range(8):
                n = int(rng.integers(2, 9)) if M == 2 else int(rng.integers(2, 7))
                rx, aux = random_instance(rng, A, n, K)
                free = ConditioningMask.free(n, M)
                fb, bf = run_fba(rx, free, aux), brute_force_app(rx, free, aux)
                worst = max(worst, 0.5 * np.abs(fb.pmf - bf.pmf).sum(1).max())
                # bit APPs of every stage/level of a two-stage schedule
                if n % 2 == 0:
                    for s in (1, 2):
                        for lev in range(1, A.m + 1):
                            for mode in ("MSD", "bSIC"):
                                got = bitlevel_apps(rx, aux, 2, s, lev, mode, rx.u_idx, A.bits)
                                ref = bitlevel_apps(rx, aux, 2, s, lev, mode, rx.u_idx, A.bits,
                                                    detector=brute_force_app)
                                worst = max(worst, 0.5 * np.abs(got - ref).sum(1).max())
                else:
                    got = bit_marginals(fb.pmf, A.bits, 1)
                    ref = bit_marginals(bf.pmf, A.bits, 1)
                    worst = max(worst, 0.5 * np.abs(got - ref).sum(1).max())
                count += 1
    dt = time.time() - t0
    verdict(report, 1, count >= 50 and worst < 1e-9 and dt < 60,
            f"{count} instances, max TV {worst:.2e} (< 1e-9), {dt:.1f} s (< 60 s)")


# ---------------------------------------------------------------- AC2

def _stage_monotone(curves):
    """Worst standardized violation of non-decreasing stage rates."""
    worst = -np.inf
    for est in curves:
        r = np.asarray(est["stage_rates"])
        se = np.asarray(est["stage_stderr"])
        for s in range(r.size - 1):
            z = (r[s] - r[s + 1]) / np.hypot(se[s], se[s + 1])
            worst = max(worst, z)
    return worst


def test_ac2_rate_chain(report):
    rng = np.random.default_rng(77)
    A = build_alphabet("ASK", 2)
    bad = 0
    N = 20
    for _ in range(N):
        rx, aux = random_instance(rng, A, 8, 2, differential=True)
        rx = sample_aux_observation(rx, aux, rng)
        r = exact_rates(rx, aux, S_list=(1, 2, 4))
        tol = 1e-12
        ok = (r["SDD"] <= r["SIC(2)"] + tol and r["SIC(2)"] <= r["SIC(4)"] + tol
              and r["SIC(4)"] <= r["JDD"] + tol
              and all(r[f"bSIC({S})"] >= r["SDD" if S == 1 else f"SIC({S})"] - tol for S in (1, 2, 4)))
        bad += not ok
    mc = jobs.run("fig7rates")
    curves = [mc[a][snr][k] for a in mc for snr in mc[a] for k in ("SIC2", "SIC4")]
    z = _stage_monotone(curves)
    verdict(report, 2, bad == 0 and z <= 2.0,
            f"exact chain violated on {bad}/{N} enumerated instances; "
            f"worst per-stage decrease {z:.2f} combined stderr over {len(curves)} MC curves (<= 2)")


# ---------------------------------------------------------------- AC3

def test_ac3_fig4(report):
    res = jobs.run("fig4")
    jdd10 = {a: res[a]["10"]["JDD"]["rate"] for a in res}
    gaps = {a: max(abs(res[a][s]["JDD"]["rate"] - res[a][s]["SIC4"]["rate"])
                   for s in ("-2", "0", "2", "4")) for a in res}
    ok = all(v >= 1.9 for v in jdd10.values()) and all(g <= 0.05 for g in gaps.values())
    verdict(report, 3, ok,
            "JDD at 10 dB " + ", ".join(f"{a} {v:.3f}" for a, v in jdd10.items())
            + " (>= 1.9); max |JDD - SIC(4)| at <= 4 dB "
            + ", ".join(f"{a} {g:.3f}" for a, g in gaps.items()) + " (<= 0.05)")


# ---------------------------------------------------------------- AC4

def _snr_at(res, a, kind, target=1.0):
    snr = sorted(res[a], key=float)
    return snr_at_rate([float(s) for s in snr], [res[a][s][kind]["rate"] for s in snr], target)


def test_ac4_fig7_rate_gains(report):
    res = jobs.run("fig7rates")
    g_ask4 = _snr_at(res, "4-PAM", "SIC4") - _snr_at(res, "4-ASK", "SIC4")
    g_ask2 = _snr_at(res, "4-PAM", "SIC2") - _snr_at(res, "4-ASK", "SIC2")
    g_pam = _snr_at(res, "4-PAM", "SDD") - _snr_at(res, "4-PAM", "SIC4")
    g_ask = _snr_at(res, "4-ASK", "SDD") - _snr_at(res, "4-ASK", "SIC4")
    ok = abs(g_ask4 - 0.75) <= 0.3 and abs(g_pam - 1.14) <= 0.3 and abs(g_ask - 1.86) <= 0.3
    verdict(report, 4, ok,
            f"ASK over PAM (SIC S=4) {g_ask4:.2f} dB (0.75 +- 0.3; S=2: {g_ask2:.2f}, ref 0.59); "
            f"SIC(4) over SDD: PAM {g_pam:.2f} dB (1.14 +- 0.3), ASK {g_ask:.2f} dB (1.86 +- 0.3)")


# ---------------------------------------------------------------- AC5

def test_ac5_gibbs_fidelity(report):
    res = jobs.run("gibbs")
    low = {s: res[s]["GIBBS50"]["rate"] - res[s]["SIC"]["rate"] for s in ("-2", "0", "2")}
    parts = [f"{s} dB gap {g:+.3f} stall fraction {res[s]['GIBBS50']['stall_fraction']:.2f}"
             for s, g in low.items()]
    ok = all(abs(g) <= 0.05 for g in low.values())
    for s in ("8", "10"):
        g, f = res[s]["GIBBS50"], res[s]["SIC"]
        below = g["rate"] < f["rate"] - 0.05
        flagged = g["stalled"]
        parts.append(f"{s} dB gap {g['rate'] - f['rate']:+.3f} stall fraction "
                     f"{g['stall_fraction']:.2f} flagged={flagged}")
        # saturation must never go unflagged
        ok &= (not below) or flagged
    verdict(report, 5, ok, "; ".join(parts) + " (|gap| <= 0.05 at <= 2 dB, shortfalls flagged)")


# ---------------------------------------------------------------- AC6

def test_ac6_iteration_sensitivity(report):
    res = jobs.run("niter")
    its = [1, 2, 5, 10, 20, 50]
    worst = -np.inf
    where = ""
    for s, row in res.items():
        for a, b in zip(its[:-1], its[1:]):
            ra, rb = row[f"GIBBS{a}"], row[f"GIBBS{b}"]
            se = np.hypot(ra["stderr"], rb["stderr"])
            z = (ra["rate"] - rb["rate"]) / se if se > 0 else (np.inf if ra["rate"] > rb["rate"] else -np.inf)
            if z > worst:
                worst, where = z, f"{s} dB, N_iter {a}->{b}"
    curves = "; ".join(f"{s} dB: " + " ".join(f"{row[f'GIBBS{i}']['rate']:.3f}" for i in its)
                       for s, row in sorted(res.items(), key=lambda kv: float(kv[0])))
    verdict(report, 6, worst <= 2.0,
            f"worst decrease {worst:.2f} combined stderr at {where} (<= 2); rates by N_iter {its}: {curves}")


# ---------------------------------------------------------------- AC7

def test_ac7_polar_fer(report):
    res = jobs.run("fer")
    pts = {int(S): {p["snr_db"]: p for p in v["points"]} for S, v in res.items()}
    common = sorted(set(pts[1]) & set(pts[2]) & set(pts[4]))
    sep = [s for s in common
           if pts[4][s]["ci_hi"] < pts[2][s]["ci_lo"] and pts[2][s]["ci_hi"] < pts[1][s]["ci_lo"]]
    cross = {}
    for S in (1, 2, 4):
        snr = sorted(pts[S])
        cross[S] = snr_at_fer(snr, [pts[S][s]["fer"] for s in snr], 1e-2)
    gain = cross[1] - cross[4]
    ok = bool(sep) and np.isfinite(gain) and abs(gain - 1.86) <= 0.4
    desc = "; ".join(f"S={S}: " + " ".join(f"{s:g}:{p['fer']:.2g}({p['n_frames']})"
                                         for s, p in sorted(pts[S].items())) for S in (1, 2, 4))
    verdict(report, 7, ok,
            f"CI-separated ordering S=4 < S=2 < S=1 at {sep or 'no'} dB; FER 1e-2 at "
            + ", ".join(f"S={S} {v:.2f} dB" for S, v in cross.items())
            + f"; gain S=4 over S=1 {gain:.2f} dB (1.86 +- 0.4). Curves [snr:FER(frames)] {desc}")


# ---------------------------------------------------------------- AC8

def test_ac8_appendix_identities(report):
    rng = np.random.default_rng(8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        full = derive_taps(LinkConfig(alpha=0.0, L=0.0, taps_half=61))
    g0, gh = rc_pulse(0.0, 1.0, 0.0), rc_pulse(0.0, 1.0, 0.5)
    dom = truncate_taps(full, 1)             # taps at t = -1/2, 0, 1/2
    o = dom.offset                           # full-model row of the first dominant-tap row

    def frame(M):
        pts = build_alphabet("ASK", M).points
        x = pts[rng.integers(M, size=400)].astype(complex)
        s0 = pts[rng.integers(M, size=61)].astype(complex)
        zf = noise_free_output(s0, x, full.psi)[o:]
        T = zf.size // 2
        xx = np.concatenate([s0[-1:], x])[:T + 1]     # x_0 = last guard symbol
        return xx, zf[:2 * T], noise_free_output(s0[-1:], x, dom.psi)[:2 * T]

    # integer-time samples carry |x|^2 g(0)^2 exactly (4-ASK has several amplitudes)
    err_even = 0.0
    for M in (2, 4):
        xx, zf, _ = frame(M)
        err_even = max(err_even, np.max(np.abs(zf[0::2] - np.abs(xx[:-1]) ** 2 * g0 ** 2))
                       / np.max(np.abs(xx) ** 2 * g0 ** 2))
    # half-integer samples with the two dominant taps g(+-1/2): 2(1 + x0 x1) g(1/2)^2
    xx, zf, zd = frame(2)
    pred = 2 * (1 + (xx[:-1] * xx[1:]).real) * gh ** 2
    err_odd = np.max(np.abs(zd[1::2] - pred)) / (4 * gh ** 2)
    # for reference only: the same prediction against the full sinc response
    err_full = np.mean(np.abs(zf[1::2] - pred)) / (4 * gh ** 2)
    A = build_alphabet("ASK", 2)
    # phase ambiguity: zero guards make uncoded SDD useless, differential coding fixes it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = LinkConfig(alpha=0.0, L=30.0, taps_half=2)
        ts = derive_taps(cfg)
    rates = {}
    for diff in (False, True):
        aux = AuxChannel(truncate_taps(ts, 2))
        train = [make_frame(A, 200, 10.0, ts, cfg, rng, differential=diff, guard="zero")]
        aux = fit_moments(aux, train)
        frs = [make_frame(A, 12, 10.0, ts, cfg, rng, differential=diff, guard="zero") for _ in range(6)]
        rates[diff] = estimate_sdd(frs, aux).rate
    ok = err_even < 0.01 and err_odd < 0.01 and rates[False] < 1e-9 and rates[True] > 0
    verdict(report, 8, ok,
            f"even-sample rel. error {err_even:.1e}, dominant-tap odd-sample rel. error {err_odd:.1e} "
            f"(< 1%; full sinc tail mean deviation {err_full:.1%}, not asserted); zero-guard BPSK SDD rate uncoded {rates[False]:.2e} (= 0), "
            f"differential {rates[True]:.3f} (> 0)")


# ---------------------------------------------------------------- AC9

def test_ac9_gibbs_cost_quadratic(report):
    rng = np.random.default_rng(9)
    A = build_alphabet("ASK", 4)
    macs = {}
    for K in (2, 4, 8):
        rx, aux = random_instance(rng, A, 400, K)
        est = estimate_apps(rx, aux, 1, 1, 1, rx.u_idx, GibbsConfig(n_iter=1, burn_in=0, n_par=1), rng)
        macs[K] = est.macs
    r1, r2 = macs[4] / macs[2], macs[8] / macs[4]
    ok = abs(r1 - 4) <= 1 and abs(r2 - 4) <= 1
    verdict(report, 9, ok, f"MACs per sweep {macs}; ratios K'=4/2 {r1:.2f}, 8/4 {r2:.2f} (4 +- 25%)")
