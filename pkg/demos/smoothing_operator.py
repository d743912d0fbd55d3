"""Compare a coarse solenoidal space with a much finer one through the
discrete Stokes spectrum.

The fine level plays the continuum.  Fractional powers of the Stokes
operator are taken in the eigenbasis, which is exact for these sizes.
"""
import numpy as np

from mini_sns.lab import build_smoothing_operator, identity_minus_norm, stokes_eigendecomposition, surrogate_pair

for level in (1, 2, 3):
    dec = stokes_eigendecomposition(level)
    print(f"level {level}: {len(dec.eigenvalues)} Stokes eigenvalues, first three {np.round(dec.eigenvalues[:3], 2)}")

alpha = 0.25
for beta in (0.5, 1.0):
    norms = []
    for level in (1, 2, 3):
        pair = surrogate_pair(level, gap=2)
        J = build_smoothing_operator(pair, alpha)
        norms.append(identity_minus_norm(pair, J.eig, beta))
    rates = np.log2(np.array(norms[:-1]) / norms[1:])
    print(f"beta={beta}: |I - J| from H^beta to L2 = {np.round(norms, 4)}, halving rates {np.round(rates, 2)}")
