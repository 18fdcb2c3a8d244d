"""
The bottleneck at the most recent common ancestor
=================================================

For the quadratic mechanism psi(l) = beta l^2 + 2 beta theta l everything is
explicit: the population is Gamma(2, 2 theta), the TMRCA is a scaled maximum
of two exponentials, and the size just before the MRCA is smaller than the
current size with probability 11/16.
"""

import numpy as np

from mrca_lab import MechanismSpec, RngStream, StationaryLaw
from mrca_lab import sampler

law = StationaryLaw.from_spec(MechanismSpec.quadratic(beta=1.0, theta=1.0))

# Analytic side: the TMRCA distribution function and the conditional mean of Z_A.
for t in (0.25, 0.5, 1.0, 2.0):
    print(f"t={t:4}  P(A<=t)={law.cdf_A(t):.5f}  E[Z_A|A=t]={law.mean_ZA_given_A(t):.5f}")

# Monte Carlo side: one million exact draws of (A, Z, Z_A, Z_I, Z_O).
rng = RngStream(seed=0xC0FFEE).generator()
s = sampler.sample_mrca_quadratic(law, rng, size=10**6)
print("P(Z_A < Z)     ", np.mean(s.Z_A < s.Z), " exact", 11 / 16)
print("E[Z_A] / E[Z]  ", s.Z_A.mean() / s.Z.mean(), " exact", 2 / 3)

# The bottleneck probability does not depend on A: bin by A and look again.
edges = np.arange(0.25, 2.01, 0.25)
idx = np.digitize(s.A, edges)
for k in range(1, len(edges)):
    sel = idx == k
    print(f"A in [{edges[k-1]:.2f},{edges[k]:.2f})  n={sel.sum():6d}  P={np.mean(s.Z_A[sel] < s.Z[sel]):.4f}")
