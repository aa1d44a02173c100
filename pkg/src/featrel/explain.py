"""One-call attribution of a single instance."""

from __future__ import annotations

from .data import spawn_rng
from .errors import UsageError
from .model import ModelFunction
from .shapley import AttributionResult, WlsSystem, sample_coalitions, shapley_exact, shapley_wls
from .valuefn import ValueFunctionSpec, build_value_table

__all__ = ["explain_instance"]

_STREAM_COALITIONS = 7


def explain_instance(
    model: ModelFunction,
    x,
    spec: ValueFunctionSpec,
    mode: str = "exact",
    budget: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> AttributionResult:
    """Shapley attribution of ``f(x) - f_empty(x)`` under the value function ``spec``.

    ``mode="exact"`` enumerates all coalitions; ``mode="wls"`` samples
    ``budget`` coalitions and solves the kernel least-squares problem.
    """
    if mode == "exact":
        table = build_value_table(model, x, spec, workers=workers)
        res = shapley_exact(table)
    elif mode == "wls":
        if budget is None:
            raise UsageError("wls mode needs a coalition budget", module="shapley")
        coalition_seed = int(spawn_rng(seed, _STREAM_COALITIONS).integers(2**63))
        weighted = sample_coalitions(model.arity, budget, coalition_seed)
        table = build_value_table(model, x, spec, [T for T, _ in weighted], workers=workers)
        system = WlsSystem.from_table(table, weighted)
        res = shapley_wls(system, table.g_full, table.baseline)
        res.coalitions_evaluated = len(table)
    else:
        raise UsageError(f"unknown coalition mode {mode!r}; use 'exact' or 'wls'", module="shapley")
    res.method = f"{mode}:{spec.kind}"
    res.diagnostics.update({"f_x": table.meta.get("f_x"), "g_full": table.g_full})
    return res
