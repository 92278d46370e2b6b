from .config import (
    ConditionSpec,
    ConstantsSpec,
    DelaySpec,
    GainSpec,
    NoiseSpec,
    OutputSpec,
    ProcessSpec,
    ScenarioSpec,
    SimConfig,
    StateSpec,
)
from .reports import (
    A3cBound,
    B2Report,
    ConditionReport,
    ConditionSummary,
    Corollary1Report,
    GainAssumptionReport,
    InverseCertificate,
    WindowEstimate,
)

__all__ = [
    "ConditionSpec", "ConstantsSpec", "DelaySpec", "GainSpec", "NoiseSpec", "OutputSpec",
    "ProcessSpec", "ScenarioSpec", "SimConfig", "StateSpec",
    "A3cBound", "B2Report", "ConditionReport", "ConditionSummary", "Corollary1Report",
    "GainAssumptionReport", "InverseCertificate", "WindowEstimate",
]
