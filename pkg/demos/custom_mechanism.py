"""
A mechanism with jumps
======================

A Gaussian part plus two atoms of the Levy measure. Nothing here is explicit,
so every quantity goes through the primitive G(x) = int_x^inf dv / psi(v),
its inverse c, and quadrature.
"""

from mrca_lab import MechanismSpec, StationaryLaw

spec = MechanismSpec.custom(alpha=1.0, beta=1.0, atoms=[(1.0, 1.0), (0.5, 3.0)])
print(spec.validate())
law = StationaryLaw.from_spec(spec)

print("kappa_* =", law.ev.kappa())
print("E[Z]    =", law.mean_Z())

# Oldest families: more than one is possible because of the jumps, and the
# mean number decreases to 1 as the MRCA recedes.
for t in (0.1, 0.5, 2.0, 10.0):
    pmf = [law.pmf_NA_given_A(n, t) for n in (1, 2, 3)]
    print(f"t={t:5}  E[N_A|A=t]={law.mean_NA_given_A(t):.6f}  pmf[1..3]={[round(p, 6) for p in pmf]}")

# Moments of Z restricted to a sampled TMRCA below T.
for T in (0.5, 2.0, 8.0):
    print(f"T={T}: E[Z 1(A^1<=T)]={law.moment_An(1, 0.0, T):.6f}  E[Z^2 1(A^2<=T)]={law.moment_An(2, 0.0, T):.6f}")

# Clans older than d that are still alive today: their count is Poisson.
for d in (0.5, 1.0, 2.0):
    print(f"d={d}: Lambda(d)={law.ev.lambda_window(d):.6f}")
