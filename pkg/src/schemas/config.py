from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

Matrix = List[List[float]]


class StateSpec(BaseModel):
    """One joint state <H_l, A_l>: per-node observation blocks and the weighted adjacency"""
    H: List[Matrix] = Field(description="H_{i,l} per node, each n_i x n")
    adjacency: Matrix = Field(description="a_ij: node i receives from node j")

    @field_validator('adjacency')
    def validate_adjacency(cls, v):
        if not v or any(len(row) != len(v) for row in v):
            raise ValueError("adjacency must be a non-empty square matrix")
        return v


class ProcessSpec(BaseModel):
    """Switching law of the joint states"""
    kind: Literal["markov", "iid", "deterministic"] = "markov"
    P: Optional[Matrix] = Field(default=None, description="Row-stochastic transition matrix (markov)")
    initial_state: int = Field(default=0, ge=0, description="State at k = -1 (markov)")
    weights: Optional[List[float]] = Field(default=None, description="State probabilities (iid)")
    schedule: Optional[List[int]] = Field(default=None, description="State indices (deterministic)")
    cyclic: bool = True

    @model_validator(mode='after')
    def validate_kind_fields(self):
        if self.kind == "markov" and self.P is None:
            raise ValueError("markov process needs P")
        if self.kind == "iid" and self.weights is None:
            raise ValueError("iid process needs weights")
        if self.kind == "deterministic" and not self.schedule:
            raise ValueError("deterministic process needs a non-empty schedule")
        return self


class DelaySpec(BaseModel):
    d: int = Field(default=0, ge=0, description="Maximum delay")
    kind: Literal["none", "uniform", "explicit"] = "none"
    probabilities: Optional[List[List[List[float]]]] = Field(
        default=None, description="p[j][i][q] = P{lambda_ji = q} (explicit)"
    )

    @model_validator(mode='after')
    def validate_probabilities(self):
        if self.kind == "explicit" and self.probabilities is None:
            raise ValueError("explicit delays need probabilities")
        return self


class NoiseSpec(BaseModel):
    distribution: Literal["gaussian", "uniform", "zero"] = "zero"
    scale: Union[float, List[float]] = Field(default=0.0, description="sigma or half-width, scalar or per node")


class GainSpec(BaseModel):
    kind: Literal["power_law"] = "power_law"
    tau1: float = 1.0
    tau2: float = 1.0
    a_scale: float = Field(default=1.0, gt=0)
    b_scale: float = Field(default=1.0, gt=0)
    shift: float = Field(default=0.0, ge=0, description="Index offset k0 in (k+1+k0)^tau")

    @model_validator(mode='after')
    def validate_exponents(self):
        if not 0.5 < self.tau2 <= self.tau1 <= 1.0:
            raise ValueError("power_law gains need 0.5 < tau2 <= tau1 <= 1")
        return self


class ConstantsSpec(BaseModel):
    """Overrides for the bounds otherwise derived from the state space"""
    beta_a: Optional[float] = None
    beta_H: Optional[float] = None
    beta_v: Optional[float] = None
    C_a: Optional[float] = None
    kappa: Optional[float] = Field(default=None, gt=0, lt=1)


class ScenarioSpec(BaseModel):
    name: str = "inline"
    description: str = ""
    artifact_choice: bool = Field(
        default=False, description="Parameters beyond the published matrices were chosen for this simulator"
    )
    x0: List[float]
    initial_estimates: Optional[List[List[float]]] = Field(default=None, description="x_i(0) per node; zeros if absent")
    states: List[StateSpec] = Field(min_length=1)
    process: ProcessSpec = Field(default_factory=lambda: ProcessSpec(kind="deterministic", schedule=[0]))
    delays: DelaySpec = Field(default_factory=DelaySpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    gains: GainSpec = Field(default_factory=GainSpec)
    constants: ConstantsSpec = Field(default_factory=ConstantsSpec)
    sensing_failure: Optional[List[float]] = Field(
        default=None, description="Per-node probability that H_i(k) = 0 at a step"
    )

    @field_validator('sensing_failure')
    def validate_failure(cls, v):
        if v is not None and any(not 0.0 <= p < 1.0 for p in v):
            raise ValueError("sensing-failure probabilities must lie in [0, 1)")
        return v


class OutputSpec(BaseModel):
    mse_curve: bool = True
    path_traces: bool = False
    condition_reports: bool = False
    draw_log: bool = Field(default=False, description="Keep state, delay and noise draws per replicate")
    cross_check: bool = Field(default=False, description="Verify per-node vs stacked updates every step")


class ConditionSpec(BaseModel):
    h: int = Field(default=1, ge=1)
    m_max: int = Field(default=50, ge=1)
    samples: int = Field(default=1000, ge=100)
    method: Literal["auto", "analytic_markov", "monte_carlo", "exhaustive"] = "auto"
    theta: float = 0.0
    quantities: List[Literal["lambda", "lambda_prime", "delta", "lambda_minus_delta"]] = Field(
        default_factory=lambda: ["lambda"]
    )
    prefix_replicate: int = Field(default=0, ge=0, description="Replicate whose history is frozen for MC windows")


class SimConfig(BaseModel):
    """Top-level run configuration"""
    scenario: Union[str, ScenarioSpec]
    horizon: int = Field(default=1000, ge=1, description="K")
    replicates: int = Field(default=1, ge=1, description="R")
    master_seed: int = Field(default=0, ge=0, lt=2 ** 64)
    delays_enabled: bool = True
    outputs: OutputSpec = Field(default_factory=OutputSpec)
    conditions: ConditionSpec = Field(default_factory=ConditionSpec)
    sink: Optional[str] = Field(default=None, description="Output directory")
