"""Binary code complexity metrics and complexity-driven test case prioritization."""

__version__ = "0.1.0"

from .banned import BannedFunctionTable
from .cfg import BasicBlock, Cfg, build_cfg, dominators, predicate_nesting, sphere_complexity
from .estimators import ComplexityMetrics, MetricEvaluator, TestCasePrioritizer
from .evaluator import EvaluationReport, aggregate, pr_score
from .listing import Instruction, Operand, ProgramListing, Routine, classify, load_listing
from .metrics import METRIC_NAMES, MetricVector, compute_all
from .prioritizer import CampaignState, TestCaseRecord, order_queue, weigh
from .trace import Coverage, Trace, map_coverage, parse_trace

__all__ = [
    "BannedFunctionTable", "BasicBlock", "CampaignState", "Cfg", "ComplexityMetrics", "Coverage",
    "EvaluationReport", "Instruction", "METRIC_NAMES", "MetricEvaluator", "MetricVector", "Operand",
    "ProgramListing", "Routine", "TestCasePrioritizer", "TestCaseRecord", "Trace", "aggregate",
    "build_cfg", "classify", "compute_all", "dominators", "load_listing", "map_coverage",
    "order_queue", "parse_trace", "pr_score", "predicate_nesting", "sphere_complexity", "weigh",
]
