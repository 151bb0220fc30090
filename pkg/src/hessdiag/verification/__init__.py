"""Identity and bound checks over instances, aggregated into reports."""

from hessdiag.verification.bounds import BOUNDS, check_bound
from hessdiag.verification.identities import IDENTITIES, check_identity
from hessdiag.verification.report import FAIL, PASS, SKIPPED, CheckResult, Report
from hessdiag.verification.suite import SuiteConfig, admission, diagram_results, run_suite, sample_points

__all__ = [
    "BOUNDS", "IDENTITIES", "FAIL", "PASS", "SKIPPED", "CheckResult", "Report", "SuiteConfig",
    "admission", "check_bound", "check_identity", "diagram_results", "run_suite", "sample_points",
]
