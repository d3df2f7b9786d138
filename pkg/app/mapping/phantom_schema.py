"""
Esquema Pydantic de los parámetros del generador de fantomas y de la partición del dataset.
"""

from pydantic import BaseModel, ConfigDict, Field, model_validator


class PhantomParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    extents: tuple[int, int, int] = (32, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 0.117, 0.117)
    brain_radii: tuple[float, float, float] = (0.4, 0.38, 0.4)
    background_mean: float = 20.0
    contra_mean: float = 100.0
    contra_std: float = Field(0.0, ge=0.0)
    ipsi_mean: float = 100.0
    ipsi_std: float = Field(0.0, ge=0.0)
    lesion_probability: float = Field(0.8, ge=0.0, le=1.0)
    lesion_radius_range: tuple[float, float] = (3.0, 6.0)
    lesion_shift: float = 60.0
    midline_shift_range: tuple[int, int] = (0, 3)
    noise_sigma: float = Field(5.0, ge=0.0)
    sham: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def validate_ranges(self):
        if any(e < 1 for e in self.extents):
            raise ValueError("Las extensiones deben ser positivas")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("El espaciado debe ser positivo")
        if any(not 0.0 < r <= 0.5 for r in self.brain_radii):
            raise ValueError("Los semiejes del cerebro son fracciones de la extensión en (0, 0.5]")
        low, high = self.lesion_radius_range
        if low <= 0 or high < low:
            raise ValueError("lesion_radius_range debe cumplir 0 < min <= max")
        shift_low, shift_high = self.midline_shift_range
        if shift_low < 0 or shift_high < shift_low:
            raise ValueError("midline_shift_range debe cumplir 0 <= min <= max")
        return self


class SplitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_per_group: int = Field(3, ge=0)
    val_per_group: int = Field(1, ge=0)
    seed: int = 0
