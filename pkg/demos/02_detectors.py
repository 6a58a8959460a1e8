"""Exact trellis APPs against brute force, and the Gibbs sampler against both.

Run: python demos/02_detectors.py
"""
import warnings

import numpy as np

from sicdd import (AuxChannel, ConditioningMask, GibbsConfig, LinkConfig, build_alphabet,
                   derive_taps, estimate_apps, fit_moments, make_frame, run_fba, truncate_taps)
from sicdd.fba import bit_marginals, brute_force_app
from sicdd.linkmodel import TruncationWarning

warnings.simplefilter("ignore", TruncationWarning)
rng = np.random.default_rng(1)
cfg = LinkConfig(alpha=0.0, L=30.0, taps_half=9)
ts = derive_taps(cfg)
A = build_alphabet("ASK", 4)

# Receiver with memory K' = 2, moments fitted on a training frame.
aux = fit_moments(AuxChannel(truncate_taps(ts, 2)), [make_frame(A, 500, 2.0, ts, cfg, rng)])
print("residual mean", np.round(aux.mu, 3), "variance", np.round(aux.var, 3))

fr = make_frame(A, 7, 2.0, ts, cfg, rng)
rx = aux.view(fr)
free = ConditioningMask.free(rx.n, A.M)
fb = run_fba(rx, free, aux)
bf = brute_force_app(rx, free, aux)
print("max |FBA - enumeration|", np.abs(fb.pmf - bf.pmf).max())
print("P(true symbol)", np.round(fb.true_prob(fr.u_idx), 3))

# Gibbs sampling over all 14 bits; the importance weights undo tempering.
for eta in (1.0, 3.0):
    est = estimate_apps(rx, aux, 1, 1, 1, fr.u_idx, GibbsConfig(n_iter=400, eta=eta), rng)
    ref = np.concatenate([bit_marginals(fb.pmf, A.bits, l)[:, 1:] for l in (1, 2)], axis=1)
    got = np.column_stack([est.p1[est.level == l] for l in (1, 2)])
    print(f"eta {eta}: max |Gibbs - FBA| bit APP {np.abs(got - ref).max():.3f}, "
          f"R-hat {est.rhat:.2f}, stalled {est.stalled}")
