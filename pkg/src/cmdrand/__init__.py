"""Randomization-based prevention of command, SQL and XML entity injection.

Programs written in a small imperative language are analyzed to find the
constants that build commands, instrumented with ``rand()`` at those
points, and run against simulated shell, SQL and XML subsystems that only
accept randomized terms.
"""
from .dataflow import AnalysisConfig, AnalysisResult, analyze, backward_analysis, build_call_graph, forward_analysis
from .instrument import instrument, plan_placement
from .randomization import (
    RandomizationRecord, RandomizationScheme, RandomizationTable, RecordStore,
    consume, derandomize, new_table, randomize, reverse_apply,
)
from .runtime import Scenario, run, run_with_taint_oracle
from .tcspec import TrustedCommandSpec, load_spec, parse_spec

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "AnalysisResult", "RandomizationRecord", "RandomizationScheme",
    "RandomizationTable", "RecordStore", "Scenario", "TrustedCommandSpec", "analyze",
    "backward_analysis", "build_call_graph", "consume", "derandomize", "forward_analysis",
    "instrument", "load_spec", "new_table", "parse_spec", "plan_placement", "randomize",
    "reverse_apply", "run", "run_with_taint_oracle",
]
