"""
Esquema Pydantic de las opciones de evaluación y análisis.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

PERCENTILE_GRID = tuple(range(1, 100))
ALPHA_GRID = tuple(range(0, 11))


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    slice_filter: tuple[int, ...] | None = None
    hd_method: Literal["brute", "edt"] = "brute"
    midline_iterations: int = Field(10, ge=1)
    resamples: int = Field(10000, ge=1000)
    ci_alpha: float = Field(0.05, gt=0.0, lt=1.0)
    bootstrap_seed: int = 0
    paired_cohens_d: bool = False
    percentile_grid: tuple[int, ...] = PERCENTILE_GRID
    alpha_grid: tuple[int, ...] = ALPHA_GRID
    capacity_rates: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
