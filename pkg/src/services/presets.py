"""
Built-in scenarios
"""
from typing import Callable, Dict, List

from ..exceptions import ConfigError
from ..schemas.config import (
    DelaySpec,
    GainSpec,
    NoiseSpec,
    ProcessSpec,
    ScenarioSpec,
    StateSpec,
)

# Observation blocks of the four-node, 13-parameter example before zero padding
H1_CORE = [
    [-1, 0, 0, 0],
    [0, 0, 0, -1],
    [1, 0, 0, -1],
    [-1, 0, 0, -1],
    [-1, 0, -1, 3],
]
H2_CORE = [
    [0, 0, 0, 0, 0, -1, 1, 0],
    [0, 0, -1, 0, 0, 1, 0, 0],
    [0, 1, -1, 0, 0, 0, 0, 0],
    [0, 1, -1, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0, 0, -1],
    [0, 0, 1, 0, 0, 1, 0, -1],
    [0, 0, 1, -1, 0, 0, 0, 0],
]
H3_CORE = [
    [1, 0, 0, 0, 0, 0, -1, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, -1, 0],
    [0, 0, 0, 0, 0, 0, 1, -1, 0],
    [-1, 0, 0, 0, 0, 0, 2, 1, 0],
    [-1, 0, 0, 0, 0, 0, -1, 3, -1],
    [0, 0, 0, 0, 0, 0, 0, 1, -1],
]
H4_CORE = [
    [1, -1, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, -1],
    [-1, 0, 0, 0, -1, 2],
    [0, 1, -1, 0, 0, 0],
]

APPENDIX_D_N = 13


def _pad(core: List[List[float]], left: int, n: int = APPENDIX_D_N) -> List[List[float]]:
    right = n - left - len(core[0])
    return [[0.0] * left + [float(v) for v in row] + [0.0] * right for row in core]


def appendix_d_blocks() -> List[List[List[float]]]:
    """H_1 = [H1, 0], H_2 = [H2, 0], H_3 = [0, H3], H_4 = [0, H4], each with 13 columns"""
    return [
        _pad(H1_CORE, 0),
        _pad(H2_CORE, 0),
        _pad(H3_CORE, 4),
        _pad(H4_CORE, 7),
    ]


def directed_cycle(N: int, reverse: bool = False) -> List[List[float]]:
    """Unit-weight cycle 1 -> 2 -> ... -> N -> 1 (or its reverse); a_ij = 1 for the edge j -> i"""
    A = [[0.0] * N for _ in range(N)]
    for j in range(N):
        i = (j - 1) % N if reverse else (j + 1) % N
        A[i][j] = 1.0
    return A


def remark5() -> ScenarioSpec:
    return ScenarioSpec(
        name="remark5",
        description="Two nodes, unbalanced weights a12=1, a21=0.3, only node 2 observes",
        x0=[1.0],
        states=[StateSpec(H=[[[0.0]], [[1.0]]], adjacency=[[0.0, 1.0], [0.3, 0.0]])],
        process=ProcessSpec(kind="deterministic", schedule=[0]),
        noise=NoiseSpec(distribution="gaussian", scale=0.1),
        gains=GainSpec(tau1=1.0, tau2=1.0),
    )


def _appendix_d(delayed: bool) -> ScenarioSpec:
    H = appendix_d_blocks()
    name = "appendixD-delayed" if delayed else "appendixD"
    return ScenarioSpec(
        name=name,
        description=(
            "Four nodes, 13 parameters, no node locally observable; uniform switching between "
            "the two orientations of a directed 4-cycle"
            + ("; uniform delays on {0..3}" if delayed else "")
        ),
        artifact_choice=True,
        x0=[1.0] * APPENDIX_D_N,
        states=[
            StateSpec(H=H, adjacency=directed_cycle(4)),
            StateSpec(H=H, adjacency=directed_cycle(4, reverse=True)),
        ],
        process=ProcessSpec(kind="markov", P=[[0.5, 0.5], [0.5, 0.5]], initial_state=0),
        delays=DelaySpec(d=3, kind="uniform") if delayed else DelaySpec(),
        noise=NoiseSpec(distribution="gaussian", scale=0.03),
        # shift keeps a(0) = b(0) ~ 0.067, so a(0) ||H_i^T H_i|| + 2 b(0) < 2 from the first step
        gains=GainSpec(tau1=0.51, tau2=0.51, a_scale=1.0, b_scale=1.0, shift=199.0),
    )


def appendix_d() -> ScenarioSpec:
    return _appendix_d(delayed=False)


def appendix_d_delayed() -> ScenarioSpec:
    return _appendix_d(delayed=True)


PRESETS: Dict[str, Callable[[], ScenarioSpec]] = {
    "remark5": remark5,
    "appendixD": appendix_d,
    "appendixD-delayed": appendix_d_delayed,
}


def get_preset(name: str) -> ScenarioSpec:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Available: {sorted(PRESETS)}")
    return PRESETS[name]()


def list_presets() -> Dict[str, str]:
    return {name: factory().description for name, factory in PRESETS.items()}
