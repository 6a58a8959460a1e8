"""The direct-detection link: taps, truncation and the square-law output.

Run: python demos/01_channel.py
"""
import warnings

import numpy as np

from sicdd import LinkConfig, derive_taps, truncate_taps, make_frame, build_alphabet
from sicdd.linkmodel import TruncationWarning, noise_free_output, rc_pulse, snr_scale

warnings.simplefilter("ignore", TruncationWarning)

# 30 km of standard fiber at 35 GBd, FD-RC roll-off 0.2, 101 symbols of taps
# each side.  Taps are the combined pulse + dispersion response sampled at
# two samples per symbol.
cfg = LinkConfig(alpha=0.2, L=30.0)
ts = derive_taps(cfg)
print(f"{ts.K} rate-2 taps, energy kept {ts.energy_fraction:.6f}")

# Most of the energy sits in a handful of taps around the center; the
# receiver only models 2K'+1 of them.
e = np.abs(ts.psi) ** 2
for K in (1, 2, 5, 9):
    t = truncate_taps(ts, K)
    print(f"K' = {K}: {t.K:3d} taps keep {np.sum(np.abs(t.psi) ** 2) / e.sum():.4f} of the energy")

# Without fiber the square-law output at integer times is |x_k|^2 g(0)^2.
# The half-integer sample is dominated by the two neighbours through
# g(1/2): about 2(1 + x0 x1) g(1/2)^2 for BPSK, i.e. a differential detector.
# The remaining sinc tail adds a spread around those two levels.
b2b = derive_taps(LinkConfig(alpha=0.0, L=0.0, taps_half=41))
rng = np.random.default_rng(0)
x = rng.choice([-1.0, 1.0], size=2000).astype(complex)
s0 = rng.choice([-1.0, 1.0], size=41).astype(complex)
# Output rows are delayed by the tap span; realign them to the center tap.
o = truncate_taps(b2b, 1).offset
z = noise_free_output(s0, x, b2b.psi)[o:]
xx = np.concatenate([s0[-1:], x])[:z.size // 2 + 1]
print("integer samples", np.round(z[0::2][:6], 3), "vs |x|^2 g(0)^2 =",
      np.round(np.abs(xx[:6]) ** 2 * rc_pulse(0, 1, 0) ** 2, 3))
half = z[1::2]
same = (xx[:-1] * xx[1:]).real > 0
gh2 = rc_pulse(0, 1, 0.5) ** 2
print(f"half-integer samples: equal neighbours {half[same].mean():.3f} +- {half[same].std():.3f} "
      f"(4 g(1/2)^2 = {4 * gh2:.3f}), opposite {half[~same].mean():.3f} +- {half[~same].std():.3f} (0)")

# A transmitted frame: differential 4-ASK at 6 dB.
A = build_alphabet("ASK", 4)
fr = make_frame(A, 20, 6.0, ts, cfg, rng)
print(f"scale {snr_scale(A, 6.0, cfg):.3f}, first samples {np.round(fr.y[:6], 2)}")
