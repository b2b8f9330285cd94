from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src import __version__


class OutputFormat(str, Enum):
    JSON = 'json'
    CSV = 'csv'


class Command(str, Enum):
    MOMENTS = 'moments'
    VERIFY = 'verify'
    SOUP = 'soup'
    NORMS = 'norms'
    LEVY_REPORT = 'levy-report'
    CAF_DEMO = 'caf-demo'


STOCHASTIC_COMMANDS = {Command.VERIFY, Command.SOUP, Command.CAF_DEMO}


class NormKind(str, Enum):
    GAMMA2 = 'gamma2'
    SQ_BRACKET2 = 'sq_bracket2'
    W_NORM = 'w_norm'
    PHI_NORM = 'phi_norm'
    U2_INF = 'u2_inf'
    ZERO = 'zero'
    TWO_PD = 'two_pd'
    PI_UBAR = 'pi_ubar'


class ExponentKind(str, Enum):
    RW = 'rw'
    STABLE_SURROGATE = 'stable_surrogate'
    TABLE = 'table'


# Model and measure documents
class ModelSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    states: list[str] = Field(min_length=1)
    rates: list[list[float]]
    kill: list[float]
    m: list[float]


MeasureMap = dict[str, float]


class ExponentSpec(BaseModel):
    kind: ExponentKind
    params: dict[str, Any] = Field(default_factory=dict)


class KernelSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    d: int = Field(ge=1, le=3)
    N: int = Field(ge=2, le=512)  # noqa: N815
    beta: float = Field(gt=0)
    exponent: ExponentSpec


# Soup serialization (JSON lines)
class SoupHeader(BaseModel):
    alpha: float = Field(gt=0)
    delta: float = Field(gt=0)
    seed: int | None = None
    states: list[str]


class LoopRecord(BaseModel):
    root: str
    lifetime: float = Field(gt=0)
    skeleton: list[str]
    holding: list[float]


# Reports
class MomentCheck(BaseModel):
    label: str
    delta: float | None = None
    exact: float
    limit: float | None = None
    estimate: float
    standard_error: float
    z_score: float

    @property
    def bias(self) -> float | None:
        if self.limit is None:
            return None
        return self.exact - self.limit


class VerificationReport(BaseModel):
    name: str
    checks: list[MomentCheck]
    samples: int
    seed: int
    chunk_size: int
    delta_schedule: list[float] = Field(default_factory=list)
    bias_monotone: bool | None = None
    passed: bool
    details: dict[str, Any] = Field(default_factory=dict)
    engine_version: str = __version__


class RevuzReport(BaseModel):
    name: str
    state: str
    exact: float
    estimate: float
    standard_error: float
    z_score: float
    samples: int
    seed: int
    chunk_size: int
    passed: bool
    engine_version: str = __version__


class IsomorphismReport(BaseModel):
    lhs: float
    rhs: float
    abs_diff: float
    rel_diff: float
    passed: bool
    spec: dict[str, Any]
    norms: dict[str, float] = Field(default_factory=dict)
    engine_version: str = __version__


class TauFitReport(BaseModel):
    slope: float
    intercept: float
    residual_band: float
    band: tuple[float, float]
    gamma_growth_sup: float
    kappa_growth_sup: float


class LevyReport(BaseModel):
    kernel: KernelSpec
    normalization: str
    gamma_sup: float
    gamma_sup_ratio: float
    parseval_error: float
    sectorial_constant: float
    tau: TauFitReport
    convolution_constant: float
    norms: dict[str, float] = Field(default_factory=dict)
    shell_integral: dict[str, Any] = Field(default_factory=dict)
    phi_omega: list[dict[str, float]] = Field(default_factory=list)
    example: dict[str, Any] = Field(default_factory=dict)
    engine_version: str = __version__


# Run configuration
class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    command: Command
    model_path: Path | None = None
    measures_path: Path | None = None
    kernel_path: Path | None = None
    alpha: float = Field(default=1.0, gt=0)
    seed: int | None = Field(default=None, ge=0)
    samples: int | None = Field(default=None, gt=0)
    delta_schedule: tuple[float, ...] = (0.5, 0.1, 0.02)
    out: Path | None = None
    format: OutputFormat = OutputFormat.JSON
    threads: int = Field(default=1, ge=1)
    record: bool = False
    corrupt_kernel: float = Field(default=0.0, ge=0)
    orders: tuple[int, ...] = (2, 3)
    n_max: int = Field(default=6, ge=1, le=8)
    trials: int = Field(default=200, gt=0)

    @model_validator(mode='after')
    def check_run(self) -> 'RunConfig':
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f'--seed is required for {self.command.value}')
        if not self.delta_schedule or min(self.delta_schedule) <= 0:
            raise ValueError('delta schedule must be positive')
        if any(not 1 <= order <= 4 for order in self.orders):
            raise ValueError('moment orders must lie in 1..4')
        return self


# HTTP request bodies
class MomentsRequest(BaseModel):
    model: ModelSpec
    measures: dict[str, MeasureMap] = Field(default_factory=dict)
    alpha: float = Field(default=1.0, gt=0)


class NormsRequest(BaseModel):
    model: ModelSpec
    measures: dict[str, MeasureMap]


class IsomorphismRequest(BaseModel):
    model: ModelSpec
    alpha: float = Field(default=1.0, gt=0)
    rho: MeasureMap
    phi: MeasureMap
    measures: list[MeasureMap]
    degrees: list[int]


class MomentRow(BaseModel):
    kind: str
    measures: str
    order: int
    value: float
