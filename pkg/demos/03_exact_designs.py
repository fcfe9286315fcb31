"""From weights to subjects, and what a point prior does to the ranking.

Run: python3 demos/03_exact_designs.py
"""

from propcross import DesignSpace, ExactDesign, optimize, point_prior_value, round_exact

space = DesignSpace(3, 3)
d = optimize(space, "E").design

for n in (36, 10):
    r = round_exact(d, n)
    print(f"n = {n}: weight error {r.weight_error:.4f}, "
          f"treatment-by-period imbalance {r.symmetry_diagnostic:.3f}")
    print("  columns:", " ".join(c for c in r.to_json()["columns"]))

exact = round_exact(d, 36).exact
tau = [0, 1, -1]
base = point_prior_value(exact, tau, 0.0, "E")
print(f"\nE-value under the single prior tau0 = {tau}: {base:.5f} per subject")

# Swap one 123 column for another sequence and compare under the same prior.
# A symmetric design is best on average over relabelings of tau0, but not
# necessarily for one fixed tau0.
for new in [(3, 2, 3), (2, 2, 3), (1, 3, 3)]:
    cols = exact.columns
    cols[cols.index((1, 2, 3))] = new
    val = point_prior_value(ExactDesign.from_sequences(space, cols), tau, 0.0, "E")
    print(f"  replace 123 by {''.join(map(str, new))}: ratio {val / base:.5f}")
