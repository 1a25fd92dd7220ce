"""How the smoothed violation estimate behaves for a fixed beamformer.

Shows the estimate shrinking towards the empirical violation fraction as the
smoothing width goes to zero, and its spread across sample sets of growing
size.
"""
import numpy as np

from scbeam import dcmath
from scbeam.algorithms import perfect_csi_socp
from scbeam.presets import load_paper_preset, preset_tables
from scbeam.uncertainty import draw_batch, rng_stream


def main():
    cfg, model = load_paper_preset()
    H_hat, _ = preset_tables()
    v0, _ = perfect_csi_socp(H_hat.T.reshape(-1), cfg)
    v = 1.5 * v0  # the design for the estimated channel, with some power margin

    S = draw_batch(model, 5000, rng_stream(0, "demo"))
    print(f"empirical violation fraction: {dcmath.violation_fraction(v, S, cfg):.4f}")
    for nu in (10.0, 1.0, 0.1, 0.01, 0.001):
        print(f"  width {nu:7.3f}: smoothed estimate {dcmath.fhat_saa(v, nu, S, cfg):.4f}")

    print("\nspread over 30 sample sets (width 1.0):")
    for M in (100, 1000, 10_000):
        vals = [dcmath.fhat_saa(v, 1.0, draw_batch(model, M, rng_stream(s, "demo", M)), cfg) for s in range(30)]
        print(f"  M = {M:6d}: mean {np.mean(vals):.4f}, std {np.std(vals, ddof=1):.4f}")


if __name__ == "__main__":
    main()
