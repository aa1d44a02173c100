"""f = x1 + x2 at x = (2, 2) with independent binary features on {1, 2}.

The model is symmetric and so is the input, yet the two attributions differ
whenever P(X1 = 2) != P(X2 = 2): the set function seen by the Shapley
formula is not symmetric, because it carries the feature means along.
"""

import numpy as np

from featrel import ValueFunctionSpec, build_value_table, parse_expression, shapley_exact
from featrel.data import independent_binary_distribution
from featrel.valuefn import Coalition

f = parse_expression("x1 + x2", 2)
x = [2.0, 2.0]
rng = np.random.default_rng(0)

print(f"{'p':>6} {'q':>6} | {'phi1':>8} {'1-p':>8} | {'phi2':>8} {'1-q':>8} | {'f_1(x)':>8} {'f_2(x)':>8}")
for p, q in rng.uniform(0.05, 0.95, (5, 2)):
    table = build_value_table(f, x, ValueFunctionSpec("exact-discrete-marginal", discrete=independent_binary_distribution(p, q)))
    phi = shapley_exact(table).phi
    f1 = table.g(Coalition.of([0], 2)) + table.baseline  # x1 + E[X2]
    f2 = table.g(Coalition.of([1], 2)) + table.baseline  # x2 + E[X1]
    print(f"{p:6.3f} {q:6.3f} | {phi[0]:8.5f} {1 - p:8.5f} | {phi[1]:8.5f} {1 - q:8.5f} | {f1:8.5f} {f2:8.5f}")
