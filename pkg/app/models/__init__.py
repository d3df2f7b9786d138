"""
Inicialización del módulo de modelos.
Importa las entidades del dominio para facilitar su acceso.
"""

from .Volume import VolumeGrid, LabelVolume, BinaryMask
from .Dataset import DatasetItem, DatasetSplit, PhantomCase
from .Network import Model, NetworkPlan, SegmentationOutput
from .Reports import (
    MetricRow, MidlineRow, BootstrapInterval, BiomarkerResult, GridSearchResult, EpochRecord,
)
