"""
Registros de resultados: métricas por volumen, bandas de línea media,
estadísticos del biomarcador, búsqueda en rejilla e historial de entrenamiento.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from app.models.Volume import BinaryMask

REGION_BRAIN = "brain"
REGION_CONTRA = "contralateral_hemisphere"


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    precision_undefined: bool = False
    recall_undefined: bool = False


@dataclass
class MetricRow:
    region: str
    dice: float
    hd_mm: float
    precision: float
    recall: float
    precision_undefined: bool = False
    hd_undefined: bool = False
    volume_id: str = ""
    group: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MidlineBand:
    n: int
    band: BinaryMask

    @property
    def size(self) -> int:
        return self.band.count


@dataclass
class MidlineRow:
    n: int
    dice_ipsi: float
    dice_contra: float
    band_voxels: int = 0
    volume_id: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BootstrapInterval:
    low: float
    high: float
    estimate: float
    z0: float = 0.0
    acceleration: float = 0.0
    resamples: int = 0
    valid_resamples: int = 0
    alpha: float = 0.05
    degenerate: bool = False
    method: str = "bca"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BiomarkerResult:
    gt_ratios: list[float]
    pred_ratios: list[float]
    cohens_d: float
    ci_low: float
    ci_high: float
    resamples: int
    alpha: float
    degenerate: bool = False
    paired: bool = False

    def __post_init__(self):
        if len(self.gt_ratios) != len(self.pred_ratios):
            raise ValueError("Las listas de cocientes deben estar emparejadas.")

    @property
    def n_volumes(self) -> int:
        return len(self.gt_ratios)

    def to_dict(self) -> dict:
        return {
            "d": self.cohens_d,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_volumes": self.n_volumes,
            "resamples": self.resamples,
            "alpha": self.alpha,
            "degenerate": self.degenerate,
            "paired": self.paired,
        }


@dataclass
class GridSearchResult:
    """
    Mejor par (percentil, iteraciones de cierre) del umbral de referencia.
    `table[a, b]` es el Dice medio para percentile_grid[a], alpha_grid[b].
    """

    best_percentile_index: int
    best_alpha: int
    best_score: float
    percentile_grid: tuple[int, ...]
    alpha_grid: tuple[int, ...]
    table: np.ndarray = field(repr=False)
    # Dice de cada volumen en la combinación elegida
    volume_scores: tuple[float, ...] = field(default=(), repr=False)

    @property
    def size(self) -> int:
        return int(self.table.size)

    def rows(self) -> list[dict]:
        return [
            {"i": i, "alpha": alpha, "mean_dice": float(self.table[a, b])}
            for a, i in enumerate(self.percentile_grid)
            for b, alpha in enumerate(self.alpha_grid)
        ]

    def to_dict(self) -> dict:
        return {
            "best_percentile_index": self.best_percentile_index,
            "best_alpha": self.best_alpha,
            "best_score": self.best_score,
            "grid_size": self.size,
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    terms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        row = {"epoch": self.epoch, "train_loss": self.train_loss, "val_loss": self.val_loss}
        row.update(self.terms)
        return row
