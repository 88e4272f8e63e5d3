"""Desk-scale energy-management toolkit: contingency screening, corrective switching, SCED and settlement."""

from .netmodel import Case, Config, parse_case, read_case, serialize_case
from .orchestrator import run_procedure_a, run_procedure_b

__all__ = ["Case", "Config", "parse_case", "read_case", "serialize_case",
           "run_procedure_a", "run_procedure_b"]
__version__ = "0.1.0"
