import itertools
import math
import tomllib
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from selection_lab.errors import SelectionLabError
from selection_lab.instances import WeightDistribution

Problem = Literal['secretary', 'bipartite', 'graphic', 'truthful']

ALGORITHMS = {
    'secretary': ('classical', 'algorithm1', 'random_lambda', 'naive'),
    'bipartite': ('kesselheim', 'algorithm3', 'reduction'),
    'graphic': ('algorithm4', 'algorithm5'),
    'truthful': ('mechanism',),
}

DEFAULT_ALGORITHM = {
    'secretary': 'algorithm1',
    'bipartite': 'algorithm3',
    'graphic': 'algorithm5',
    'truthful': 'mechanism',
}

RATIO_TOLERANCE = 1e-9


class GeneratorSpec(BaseModel):
    """
    How instances of a cell are drawn.

    n is the online side: secretary values, left nodes, graph vertices or
    agents. m is the number of right nodes or items.
    """

    n: int = Field(100, ge=1)
    m: Optional[int] = Field(None, ge=1)
    weights: WeightDistribution = WeightDistribution()
    density: float = Field(1.0, gt=0.0, le=1.0)
    edge_probability: float = Field(0.2, gt=0.0, le=1.0)
    graph: Literal['gnp', 'tree'] = 'gnp'

    @property
    def right_count(self) -> int:
        return self.m if self.m is not None else self.n


class Cell(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    c: float
    d: float
    lambda_scale: float
    eta_scale: float


class ExperimentConfig(BaseModel):
    """
    A Monte-Carlo experiment: one problem, one algorithm, a grid of cells.

    lambda and eta are scales of a reference value per instance: OPT for
    the secretary problem, otherwise the smallest prediction target.
    Result rows report the realised values in OPT units instead.
    """

    problem: Problem
    algorithm: Optional[str] = None
    generator: GeneratorSpec = GeneratorSpec()
    c: List[float] = Field(default_factory=lambda: [math.e])
    d: List[float] = Field(default_factory=lambda: [1.0])
    lambda_scale: List[float] = Field(default_factory=lambda: [0.0])
    eta_scale: List[float] = Field(default_factory=lambda: [0.0])
    error_kind: Literal['exact', 'constant_shift', 'uniform_noise', 'adversarial_sign'] = 'adversarial_sign'
    trials: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    instances_per_cell: int = Field(1, ge=1)
    gamma: Optional[float] = Field(None, ge=0.0, le=1.0)
    lambda_spread: float = Field(0.2, ge=0.0, le=1.0)
    slack: Optional[float] = Field(None, ge=0.0)
    output: Optional[str] = None

    @field_validator('c', 'd', 'lambda_scale', 'eta_scale')
    @classmethod
    def grid_must_be_nonempty(cls, v):
        if not v:
            raise ValueError('parameter grids must not be empty')
        return v

    @field_validator('c', 'd')
    @classmethod
    def phase_parameters_at_least_one(cls, v):
        for x in v:
            if x < 1.0:
                raise ValueError(f'c and d must be >= 1, got {x}')
        return v

    @field_validator('lambda_scale', 'eta_scale')
    @classmethod
    def scales_non_negative(cls, v):
        for x in v:
            if x < 0:
                raise ValueError(f'lambda and eta scales must be non-negative, got {x}')
        return v

    @model_validator(mode='after')
    def every_instance_gets_a_trial(self):
        if self.instances_per_cell > self.trials:
            raise ValueError(f'instances_per_cell {self.instances_per_cell} exceeds trials {self.trials}')
        return self

    @model_validator(mode='after')
    def check_algorithm(self):
        if self.algorithm is None:
            self.algorithm = DEFAULT_ALGORITHM[self.problem]
        if self.algorithm not in ALGORITHMS[self.problem]:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r} for {self.problem}, "
                f"choose one of {', '.join(ALGORITHMS[self.problem])}"
            )
        return self

    def cells(self) -> List[Cell]:
        grid = itertools.product(self.c, self.d, self.lambda_scale, self.eta_scale)
        return [
            Cell(index=i, c=c, d=d, lambda_scale=lam, eta_scale=eta)
            for i, (c, d, lam, eta) in enumerate(grid)
        ]


def read_config(path: str) -> dict:
    """Raw key-value content of a TOML config file."""
    try:
        with open(path, 'rb') as f:
            raw = tomllib.load(f)
    except OSError as e:
        raise SelectionLabError(f'cannot read config {path}: {e}') from e
    except tomllib.TOMLDecodeError as e:
        raise SelectionLabError(f'config {path} is not valid TOML: {e}') from e
    return raw


def load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.model_validate(read_config(path))


class TrialBatch(BaseModel):
    """Statistics of one grid cell."""

    model_config = ConfigDict(frozen=True)

    problem: Problem
    algorithm: str
    n: int
    c: float
    d: float
    lam: float
    eta: float
    trials: int = Field(..., ge=1)
    mean_ratio: float
    stddev: float = Field(..., ge=0.0)
    stderr: float = Field(..., ge=0.0)
    bound: float
    seed: int

    @model_validator(mode='after')
    def check_statistics(self):
        if self.mean_ratio < -RATIO_TOLERANCE or self.mean_ratio > 1.0 + RATIO_TOLERANCE:
            raise ValueError(f'mean ratio {self.mean_ratio} outside [0, 1]')
        expected = self.stddev / math.sqrt(self.trials)
        if abs(self.stderr - expected) > 1e-9 * max(1.0, expected):
            raise ValueError('stderr must equal stddev / sqrt(trials)')
        return self


class SkippedCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    c: float
    d: float
    reason: str


class ExperimentResult(BaseModel):
    batches: List[TrialBatch] = Field(default_factory=list)
    skipped: List[SkippedCell] = Field(default_factory=list)


class BoundVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch: TrialBatch
    slack: float
    threshold: float
    margin: float
    passed: bool

    @property
    def label(self) -> str:
        return 'PASS' if self.passed else 'FAIL'
