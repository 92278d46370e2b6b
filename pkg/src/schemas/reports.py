from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class A3cBound(BaseModel):
    """Supremum of the gain-size envelope and the kappa attaining it"""
    bound: float
    kappa_star: float


class GainAssumptionReport(BaseModel):
    """Per-clause verdicts for the decreasing-gain assumptions"""
    horizon: int
    kind: str
    monotone: bool
    vanishing: bool
    ratio_decreasing: bool = Field(description="b^2(k)/a(k) decreasing on the horizon")
    partial_sums_growing: bool
    a3a_proxy: bool
    a3b_proxy: bool
    a3a_analytic: Optional[bool] = None
    a3b_analytic: Optional[bool] = None
    C_a: float
    C_a_holds: bool
    b_sup: float
    a3c_bound: float
    kappa_star: float
    kappa: float = Field(description="kappa used for the inverse-norm certificate")
    a3c: bool


class InverseCertificate(BaseModel):
    """||F^-1(k)|| against (1 - kappa)^-1"""
    k: int
    invertible: bool
    inv_norm: float
    bound: float
    holds: bool


class B2Report(BaseModel):
    rho0: float
    per_state: List[float]


class Corollary1Report(BaseModel):
    stationary_nonneg: bool
    balanced: bool
    spanning_tree: bool
    joint_obs_lambda: float
    verdict: bool
    pi: List[float]


class WindowEstimate(BaseModel):
    """One window value with its Monte Carlo standard error (0 for exact methods)"""
    m: int
    value: float
    stderr: float = 0.0
    rejected: int = 0


class ConditionReport(BaseModel):
    """Profile of an excitation quantity over the windows m = 0..m_max"""
    quantity: Literal["lambda", "lambda_prime", "delta", "lambda_minus_delta"]
    method: Literal["analytic_markov", "monte_carlo", "exhaustive"]
    h: int
    m_range: List[int] = Field(description="[first m, last m] of the finite scan")
    values: List[float]
    stderr: List[float]
    theta_hat: float
    theta: float = 0.0
    guard: float = Field(default=0.0, description="3 standard errors at the minimizing window")
    samples: Optional[int] = None
    verdict: Optional[bool] = Field(
        description="min > theta with the guard band; None for delta, which is a penalty certified "
                    "through lambda_minus_delta"
    )

    @classmethod
    def from_profile(cls, quantity: str, method: str, h: int, estimates: List[WindowEstimate],
                     theta: float = 0.0, samples: Optional[int] = None) -> "ConditionReport":
        values = [e.value for e in estimates]
        stderr = [e.stderr for e in estimates]
        guarded = [v - 3.0 * s for v, s in zip(values, stderr)]
        worst = min(range(len(values)), key=lambda idx: guarded[idx])
        verdict: Optional[bool] = guarded[worst] > theta
        if quantity == "delta":
            # the penalty is judged at its largest window
            worst = max(range(len(values)), key=lambda idx: values[idx] + 3.0 * stderr[idx])
            verdict = None
        return cls(
            quantity=quantity,
            method=method,
            h=h,
            m_range=[estimates[0].m, estimates[-1].m],
            values=values,
            stderr=stderr,
            theta_hat=min(values),
            theta=theta,
            guard=3.0 * stderr[worst],
            samples=samples,
            verdict=verdict,
        )


class ConditionSummary(BaseModel):
    """Everything the `check` command reports for one scenario"""
    scenario: str
    gains: GainAssumptionReport
    b2: B2Report
    corollary1: Optional[Corollary1Report] = None
    reports: Dict[str, ConditionReport] = Field(default_factory=dict)
    ergodicity: Optional[Dict[str, Optional[float]]] = Field(
        default=None, description="converged, R, r, steps_used; r is null when the chain mixes in one step"
    )
    notes: List[str] = Field(default_factory=list)
