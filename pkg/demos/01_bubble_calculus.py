"""
The bubble and its radial calculus
==================================

The unit bubble w(r) = c_nm (1/(1+r^2))^((n-2m)/2) solves (-Delta)^m w = w^p
with p = (n+2m)/(n-2m). Everything below is exact rational arithmetic on
Laurent-type expansions in 1/(1+r^2), so the identity is checked to zero.
"""

from fractions import Fraction

import numpy as np

from bubbletower.kelvin import Dimensions, bubble_identity_check, build_bubble, polyharmonic_apply
from bubbletower.riesz import RadialDensity, riesz_potential_radial

# the flagship dimension pair
dim = Dimensions(8, 2)
print("p =", dim.p, " beta =", dim.beta, " c_nm^2 =", round(dim.c_nm ** 2, 10))

# (-Delta)^m w - w^p: the residual is an exact Fraction
ok, residual = bubble_identity_check(dim)
print("identity holds:", ok, " residual:", residual)

# each intermediate power of the Laplacian keeps every coefficient positive
w = build_bubble(dim)
for s in range(1, dim.m + 1):
    terms = polyharmonic_apply(w, s, dim).terms
    print(f"(-Delta)^{s} w: {len(terms)} terms, min coefficient {min(terms.values())}")

# low dimensions are outside the construction
try:
    Dimensions(7, 2)
except ValueError as exc:
    print("rejected:", exc)

# Riesz potentials of radial densities, composed from exact order-2 solves.
# The ball indicator has the classical center value R^2/(2(n-2)).
R = Fraction(1)
prof = riesz_potential_radial(RadialDensity.ball_indicator(R), 2, Dimensions(8, 1))
print("center value", float(prof.value(0.0)), "expected", 1 / 12)

# the order-4 potential of a tent decays like r^(4-n) = r^-4 far away
tent = riesz_potential_radial(RadialDensity.tent(R), 4, dim)
r = np.array([10.0, 100.0, 1000.0])
print("r^4 I_4[tent]:", tent.value(r) * r ** 4)
