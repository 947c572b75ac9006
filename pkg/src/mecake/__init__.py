"""Executable model of a three-party hash-and-XOR AKE scheme for mobile edge
computing, with a harness that reproduces its known attacks."""

from .crypto import check_freshness, fresh_nonce, gen, h, rep, xor_mask
from .harness import RunReport, ScenarioConfig, World, run_honest_session, run_scenario

__all__ = [
    "check_freshness", "fresh_nonce", "gen", "h", "rep", "xor_mask",
    "RunReport", "ScenarioConfig", "World", "run_honest_session", "run_scenario",
]
__version__ = "0.1.0"
