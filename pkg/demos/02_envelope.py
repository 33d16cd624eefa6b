"""
The truncated nonlinearity
==========================

f(z1, z2, z3) = z2 (z1 + z3)^p - z1^p is capped at its maximum M once z1
passes the maximiser Z. The cap is what lets K stay between kappa and k.
"""

import numpy as np

from bubbletower.envelope import Curv, eval_F, eval_f, eval_M, eval_Z, log_H, log_Z
from bubbletower.kelvin import Dimensions

dim = Dimensions(8, 2)                      # p = 3

# worked instance: z2 = 1/4, z3 = 2 gives Z = 2 and M = 8
print("Z =", eval_Z(0.25, 2.0, dim), " M =", eval_M(0.25, 2.0, dim))

# f rises to M at Z and F holds it there
z1 = np.linspace(0.0, 6.0, 13)
print(np.column_stack([z1, eval_f(z1, 0.25, 2.0, dim), eval_F(z1, 0.25, 2.0, dim)]))

# near the bubbles z2 = kappa is within 1e-1000 of one. The log form keeps
# log(1 - kappa) as the primary number, so Z ~ P/(e (1 - kappa)) and the cap
# are still resolved. With U = 1, P just below (1 - kappa) caps; P above does not.
for l1 in (-1e3, -2e3, -2.5e3):
    kap = Curv(np.array(0.0), np.array(l1))
    for lp in (l1 - 10, l1 + 10):
        lz = float(log_Z(kap, lp, dim))
        print(f"log(1-kappa) {l1:8.0f}  log P {lp:8.0f}  log Z {lz:9.2f}  "
              f"capped {0.0 > lz}  log H {float(log_H(0.0, kap, lp, dim)):9.2f}")
