from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from paperpuf.errors import InvalidQuery


@dataclass(frozen=True)
class CollisionQuery:
    """Dimension d, similarity radius epsilon and sampling-ball radius R."""

    d: int
    epsilon: float
    radius: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidQuery(f"d must be a positive integer, got {self.d}")
        if not 0.0 < self.epsilon <= self.radius:
            raise InvalidQuery(f"need 0 < epsilon <= R, got epsilon={self.epsilon}, R={self.radius}")


@dataclass(frozen=True, eq=False)
class HistogramReport:
    edges: np.ndarray
    matched_counts: np.ndarray
    unmatched_counts: np.ndarray
    gap: float
    overlap: int

    @property
    def rows(self):
        for i in range(self.matched_counts.size):
            yield (
                float(self.edges[i]),
                float(self.edges[i + 1]),
                int(self.matched_counts[i]),
                int(self.unmatched_counts[i]),
            )


@dataclass(frozen=True)
class SweepRow:
    kind: str
    strength: float
    trials: int
    failures: int
    coverage: float
    mean_corr_x: float
    std_corr_x: float
    mean_corr_y: float
    std_corr_y: float


@dataclass(frozen=True)
class SuccessRateRow:
    method: str
    runs: int
    successes: int
    success_rate: float
    median_evals: Optional[float]
    min_evals: Optional[int]


@dataclass(frozen=True)
class MonteCarloEstimate:
    probability: float
    hits: int
    samples: int
    analytic: float

    @property
    def sigma(self) -> float:
        p = self.analytic
        return float(np.sqrt(p * (1.0 - p) / self.samples))

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.probability - self.analytic) <= sigmas * self.sigma


ScientificValue = Tuple[float, int]
