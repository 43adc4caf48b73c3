"""barma runtime — sampler, adaptation, chains, diagnostics, data files and the engine.

The engine lives in ``runtime.engine``; it pulls in the pipelines, which
themselves build on ``runtime.chains``, so it is not re-exported here.
"""

from runtime.chains import ChainDraws, run_chains
from runtime.sampler import PhaseState, nuts_transition

__all__ = ["ChainDraws", "PhaseState", "nuts_transition", "run_chains"]
