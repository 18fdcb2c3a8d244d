"""
Counting ancestors
==================

M_s, the number of ancestors of today's population at time -s, is Poisson
with mean c(s) Z_{-s}. Rescaled by c(s) it converges to the current size,
and the error, suitably normalized, looks like the difference of two
independent copies of Z.
"""

import math

import numpy as np

from mrca_lab import MechanismSpec, RngStream, StationaryLaw
from mrca_lab import sampler

law = StationaryLaw.from_spec(MechanismSpec.quadratic(beta=1.0, theta=1.0))
n = 2 * 10**5

print(" s        c(s)         E|M/c - Z|   var of normalized error")
for k, s in enumerate((1.0, 0.5, 0.1, 0.01, 0.001)):
    draw = sampler.sample_ancestors_quadratic(law, s, RngStream(11, k).generator(), size=n)
    c = law.ev.c_of(s)
    err = draw.M / c - draw.Z_now
    stat = math.sqrt(c * law.mean_Z()) * err
    print(f"{s:6}  {c:12.4f}  {np.abs(err).mean():10.5f}   {stat.var():.4f}")

# In the quadratic case the normalized variance is 1/theta^2 at every lag, not
# only in the limit, which the last column shows.
