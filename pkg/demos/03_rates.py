"""SDD, SIC and JDD rates: the exact chain on a tiny instance and a short
Monte Carlo sweep.

Run: python demos/03_rates.py
"""
import warnings

import numpy as np

from sicdd import (AuxChannel, LinkConfig, build_alphabet, derive_taps, estimate_jdd,
                   estimate_sdd, estimate_sic, exact_rates, fit_moments, make_frame, truncate_taps)
from sicdd.fba import memo_detector
from sicdd.linkmodel import TruncationWarning
from sicdd.rates import sample_aux_observation

warnings.simplefilter("ignore", TruncationWarning)
rng = np.random.default_rng(2)

# Exact posterior entropies: 2^8 sequences, so everything is enumerated.
A = build_alphabet("ASK", 2)
cfg = LinkConfig(alpha=0.0, L=30.0, taps_half=2)
ts = derive_taps(cfg)
aux = fit_moments(AuxChannel(truncate_taps(ts, 2)), [make_frame(A, 400, 4.0, ts, cfg, rng)])
rx = sample_aux_observation(aux.view(make_frame(A, 8, 4.0, ts, cfg, rng)), aux, rng)
for k, v in exact_rates(rx, aux).items():
    print(f"{k:8s} {v:.4f}")

# Monte Carlo: 4-ASK, memory 4, a few SNR points.  SIC closes most of the
# gap between separate and joint detection.
A = build_alphabet("ASK", 4)
cfg = LinkConfig(alpha=0.0, L=30.0, taps_half=30)
ts = derive_taps(cfg)
print("snr   SDD    SIC2   SIC4   JDD")
for snr in (0.0, 4.0, 8.0):
    aux = fit_moments(AuxChannel(truncate_taps(ts, 4)), [make_frame(A, 500, snr, ts, cfg, rng)])
    frs = [aux.view(make_frame(A, 200, snr, ts, cfg, rng)) for _ in range(3)]
    det = memo_detector()
    r = [estimate_sdd(frs, aux, det), estimate_sic(frs, aux, 2, det),
         estimate_sic(frs, aux, 4, det), estimate_jdd(frs, aux, det)]
    print(f"{snr:4.1f} " + " ".join(f"{e.rate:.3f}" for e in r))
