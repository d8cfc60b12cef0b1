"""Self-switching Markov chains: simulation, exact switching times,
occupation measures, dominance predictions and metastability checks."""

from .core import (
    ChainSpec,
    ParamSpace,
    SpecError,
    SwitchBatch,
    SwitchRecord,
    Trajectory,
    ValidationReport,
    beta,
    dirac,
    discrete,
    from_density,
    simulate_steps,
    simulate_switches,
    uniform,
    validate,
)
from .sserw import Kind, SserwModel, asymptotic_profile, chain_spec, m_closed

__version__ = "0.1.0"
