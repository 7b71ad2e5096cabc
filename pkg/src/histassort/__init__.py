"""Multi-period assortment planning under history-dependent MNL demand.

Exact mixed-integer formulations over an internal model representation, an
LP-based branch-and-bound with lazy separation, sequential revenue-ordered
policies, and cyclic-policy machinery, all verified at desk scale against a
brute-force oracle.
"""

from .core import (
    ChoiceOutcome,
    ConstraintSpec,
    GenConfig,
    Instance,
    InstanceError,
    Plan,
    RhoBounds,
    attraction,
    choice_outcome,
    generate_instance,
    is_feasible,
    load_instance,
    plan_revenue,
    rho_bounds,
    save_instance,
)

__version__ = "0.1.0"

__all__ = [
    "ChoiceOutcome",
    "ConstraintSpec",
    "GenConfig",
    "Instance",
    "InstanceError",
    "Plan",
    "RhoBounds",
    "attraction",
    "choice_outcome",
    "generate_instance",
    "is_feasible",
    "load_instance",
    "plan_revenue",
    "rho_bounds",
    "save_instance",
    "__version__",
]
