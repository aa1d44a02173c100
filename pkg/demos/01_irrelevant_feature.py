"""Two perfectly correlated binary features, a model that reads only the first.

Under the conditional value function the unused feature still receives
credit; under the marginal one it receives none.
"""

from featrel import ValueFunctionSpec, build_value_table, parse_expression, shapley_exact
from featrel.data import irrelevant_feature_distribution
from featrel.valuefn import Coalition

f = parse_expression("x1", 2)
dist = irrelevant_feature_distribution()  # P(0,0) = P(1,1) = 1/2
print("support:", dist.points.tolist(), "probabilities:", dist.probs.tolist())

for x1 in (0.0, 1.0):
    x = [x1, x1]
    print(f"\nx = {x}")
    for kind in ("exact-discrete-conditional", "exact-discrete-marginal"):
        table = build_value_table(f, x, ValueFunctionSpec(kind, discrete=dist))
        g = [table.g(Coalition(b, 2)) for b in range(4)]
        phi = shapley_exact(table).phi
        # g is listed for {}, {1}, {2}, {1,2}
        print(f"  {kind:28s} g = {g}  phi = {phi.tolist()}")

# the conditional phi_2 follows x1/2 - 1/4, nonzero although f ignores x2
