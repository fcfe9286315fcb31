"""How the optimal design moves with the carryover proportion lambda0.

Run: python3 demos/02_lambda_sweep.py
"""

import numpy as np

from propcross import ApproxDesign, DesignSpace, certify, compute_lambda_star, sweep

for p, t in [(3, 3), (3, 4), (4, 4)]:
    space = DesignSpace(p, t)
    print(f"\n(p, t) = ({p}, {t}); closed-form lower bound for the switch: "
          f"{compute_lambda_star(p, t):.5f}")
    grid = np.round(np.arange(-1.0, 1.0001, 0.1), 10)
    for row in sweep(space, "A", grid):
        mark = "  <- support changes" if row["breakpoint"] else ""
        w = ", ".join(f"{k}:{v:.4f}" for k, v in row["weights"].items())
        print(f"  lambda0 = {row['lambda0']:+.1f}  A = {row['value']:.5f}  {{{w}}}{mark}")

# Locate the switch for (3,3) by bisection on the certificate of the
# distinct-treatment design.
d = ApproxDesign(DesignSpace(3, 3), {"123": 1})
lo, hi = 0.0, 1.0
for _ in range(40):
    mid = 0.5 * (lo + hi)
    lo, hi = (mid, hi) if certify(d, "A", mid).passed else (lo, mid)
print(f"\n<123> stops being A-optimal at lambda0 = {lo:.4f}")
