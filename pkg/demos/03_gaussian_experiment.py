"""Linear model on rank-one Gaussian features with one zero coefficient.

Compares Shapley values under the marginal (shared background) and the
conditional Gaussian value function against the exact contributions
a_j (x_j - E[X_j]).
"""

from featrel.experiments import ExperimentConfig, run_gaussian_experiment, text_histogram

cfg = ExperimentConfig(dims=3, zero_coefficient_indices=(1,), runs=200, sample_count=1000, seed=0)
res = run_gaussian_experiment(cfg)

for method in cfg.value_kinds:
    s = res.summary["methods"][method]
    print(f"{method:10s} MAE {s['mae']:.4g}   zero-coefficient MAE {s['mae_zero_coef']:.4g}")

print()
print(text_histogram(res.errors("marginal", [1]), bins=10, label="marginal, feature 1"))
print(text_histogram(res.errors("cond-gauss", [1]), bins=10, label="cond-gauss, feature 1"))

# n = 10 with three zero coefficients and a sampled coalition budget
cfg10 = ExperimentConfig(dims=10, zero_coefficient_indices=(1, 2, 3), runs=20, coalition_budget=512, seed=1)
res10 = run_gaussian_experiment(cfg10)
for method in cfg10.value_kinds:
    print(f"n=10 {method:10s} zero-coefficient MAE {res10.summary['methods'][method]['mae_zero_coef']:.4g}")
