from .experiment import history_name, read_results, run_experiment
from .plan import DEFAULT_PLAN, ExperimentPlan, PlanError, load_plan
from .runner import ResultRecord, Runner
from .tables import best_ri, compute_ri_table, data_reduction_check

__all__ = [
    "DEFAULT_PLAN", "ExperimentPlan", "PlanError", "ResultRecord", "Runner", "best_ri",
    "compute_ri_table", "data_reduction_check", "history_name", "load_plan", "read_results",
    "run_experiment",
]
