"""Walkthrough of the sequence-mixing kernels.

Shows that the O(L) causal scan and the O(L) non-causal summary agree with
their dense structured-mask counterparts, and contrasts the contribution
profiles: a causal state-space mixer forgets distant inputs geometrically,
while the non-causal variant lets every position reach every output with
constant weight.

Run:  python3 demos/01_kernels_and_profiles.py
"""

import numpy as np

from mmhnet import kernels as K
from mmhnet.kernels import MixerMode, SsmParams


def main() -> None:
    rng = np.random.default_rng(0)

    print("== oracle equivalence ==")
    p = SsmParams.random(rng, L=48, N=6)
    X = rng.normal(size=(48, 5))
    causal = K.scan_causal(p, X)
    print(f"causal scan vs dense mask : {np.abs(causal - K.ssd_matrix_form(p, X, MixerMode.CAUSAL)).max():.2e}")
    nc = K.noncausal_fast(p, X)
    print(f"noncausal fast vs dense   : {np.abs(nc - K.ssd_matrix_form(p, X, MixerMode.NONCAUSAL)).max():.2e}")

    print("\n== contribution of the first token to the last output ==")
    print(f"{'L':>6}  {'causal':>12}  {'noncausal':>10}")
    for L in (16, 64, 256, 1024):
        uni = SsmParams(A=np.full(L, np.log(0.9)), delta=np.ones(L),
                        B=np.ones((L, 1)), C=np.ones((L, 1)))
        c = K.contribution_profile(uni, MixerMode.CAUSAL)[0]
        n = K.contribution_profile(uni, MixerMode.NONCAUSAL)[0]
        print(f"{L:>6}  {c:>12.3e}  {n:>10.3f}")
    print("\nThe causal profile is alpha^(L-1): anything beyond a few dozen")
    print("tokens is numerically invisible. The non-causal profile is flat,")
    print("which is what makes train-short/test-long behave.")


if __name__ == "__main__":
    main()
