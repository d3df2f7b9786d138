from dataclasses import asdict, dataclass, field, replace

import numpy as np

from app.models.Volume import LabelVolume, VolumeGrid

MANIFEST_COLUMNS = ["id", "group", "volume_path", "labels_path", "sham", "role"]


@dataclass
class PhantomCase:
    """Fantoma generado: imagen, etiquetas y los parámetros sorteados."""

    volume: VolumeGrid
    labels: LabelVolume
    midline_index: int
    midline_shift: int
    has_lesion: bool = False
    lesion_mask: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "midline_index": self.midline_index,
            "midline_shift": self.midline_shift,
            "has_lesion": self.has_lesion,
            "lesion_voxels": int(self.lesion_mask.sum()) if self.lesion_mask is not None else 0,
        }


@dataclass(frozen=True)
class DatasetItem:
    """Fila del manifiesto: un par volumen/etiquetas con su subgrupo."""

    id: str
    group: str
    volume_path: str = ""
    labels_path: str = ""
    sham: bool = False
    role: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DatasetSplit:
    train: list[DatasetItem] = field(default_factory=list)
    val: list[DatasetItem] = field(default_factory=list)
    test: list[DatasetItem] = field(default_factory=list)

    def roles(self) -> dict[str, str]:
        """id -> rol ('train' | 'val' | 'test')."""
        mapping = {}
        for role in ("train", "val", "test"):
            for item in getattr(self, role):
                mapping[item.id] = role
        return mapping

    def with_roles(self) -> list[DatasetItem]:
        """Todos los elementos con la columna `role` rellenada, ordenados por id."""
        items = [replace(item, role=role) for role in ("train", "val", "test") for item in getattr(self, role)]
        return sorted(items, key=lambda it: it.id)

    def to_dict(self) -> dict:
        return {role: [item.id for item in getattr(self, role)] for role in ("train", "val", "test")}
