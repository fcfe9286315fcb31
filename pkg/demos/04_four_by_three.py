"""Four periods, three treatments, negative carryover proportion.

Each criterion prefers its own mix of <1232> and <1233>.

Run: python3 demos/04_four_by_three.py
"""

from propcross import ApproxDesign, DesignSpace, criterion_value, optimize

space = DesignSpace(4, 3)
lam = -0.5
best = {c: optimize(space, c, lam) for c in "ADET"}
for c, r in best.items():
    print(f"{c}-optimal: {r.design.labelled()}  (certificate max score {r.certificate.max_score:.9f})")

print("\np<1232>     A       D       E       T")
for c in "ADET":
    p = best[c].design.labelled().get("1232", 0.0)
    d = ApproxDesign(space, {"1232": p, "1233": 1 - p})
    eff = [criterion_value(d, k, lam) / best[k].value for k in "ADET"]
    print(f"{p:7.4f}  " + " ".join(f"{e:7.4f}" for e in eff))
