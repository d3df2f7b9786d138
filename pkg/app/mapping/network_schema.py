"""
Esquemas Pydantic de la arquitectura y del entrenamiento.
Definen reglas de validación y valores por defecto.
"""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

STAGE_MULTIPLIERS = (1, 2, 4, 8)


class NetworkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    filter_rate: float = Field(1.0, gt=0.0, le=1.0)
    base_filters: int = Field(32, ge=1)
    num_classes: int = 3
    aspp_dilation_rates: tuple[int, int, int] = (2, 4, 6)
    # "baseline": DeepLabv3+ sin atención, sin ResNet en el decoder y con un único skip a 1/4
    architecture: Literal["medic", "baseline"] = "medic"
    deep_supervision: bool = True
    bn_momentum: float = Field(0.1, gt=0.0, le=1.0)
    bn_epsilon: float = Field(1e-5, gt=0.0)
    seed: int = 0

    @field_validator("num_classes")
    @classmethod
    def validate_num_classes(cls, value):
        if value != 3:
            raise ValueError("num_classes debe ser 3 (fondo, ipsilateral, contralateral)")
        return value

    @field_validator("aspp_dilation_rates")
    @classmethod
    def validate_rates(cls, value):
        if any(r < 1 for r in value):
            raise ValueError("Las tasas de dilatación del ASPP deben ser >= 1")
        return value

    @property
    def encoder_stage_channels(self) -> tuple[int, ...]:
        """Anchos (32, 64, 128, 256) x filter_rate, redondeados hacia el entero más cercano."""
        return tuple(int(math.floor(self.base_filters * m * self.filter_rate + 0.5)) for m in STAGE_MULTIPLIERS)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(1e-5, gt=0.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    epochs: int = Field(300, ge=1)
    seed: int = 0
    ensemble_size: int = Field(3, ge=1)
    clamp_floor: float = Field(1e-7, gt=0.0, lt=1.0)
    dice_smooth: float = Field(1e-6, gt=0.0)
    model_selection: Literal["best_val", "last"] = "best_val"
    parallel_members: bool = False