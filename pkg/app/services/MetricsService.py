# app/services/MetricsService.py

import math

import numpy as np
from scipy import ndimage

from app.errors import DataValidationError, ShapeError
from app.models.Reports import REGION_BRAIN, REGION_CONTRA, MetricRow, PrecisionRecall
from app.models.Volume import CONTRALATERAL, BinaryMask, LabelVolume, check_same_extents

# vecindad de caras (6-conectividad)
FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)
HD_CHUNK = 2048


class MetricsService:
    """Dice, distancia de Hausdorff en mm, precisión y exhaustividad."""

    def __init__(self, hd_method: str = "brute"):
        if hd_method not in ("brute", "edt"):
            raise ValueError(f"Método de Hausdorff desconocido '{hd_method}'.")
        self.hd_method = hd_method

    @staticmethod
    def dice(a: BinaryMask, b: BinaryMask) -> float:
        """2|A∩B| / (|A| + |B|); dos máscaras vacías valen 1."""
        check_same_extents(a, b, "dice")
        total = int(a.mask.sum()) + int(b.mask.sum())
        if total == 0:
            return 1.0
        return 2.0 * int((a.mask & b.mask).sum()) / total

    @staticmethod
    def boundary_voxels(mask: BinaryMask) -> np.ndarray:
        """
        Coordenadas (K, 3) de los vóxeles de la máscara con algún vecino de cara
        fuera de la máscara; el exterior del volumen cuenta como fuera.
        """
        eroded = ndimage.binary_erosion(mask.mask, structure=FACE_STRUCTURE, border_value=0)
        return np.argwhere(mask.mask & ~eroded)

    @staticmethod
    def _directed_max_min_sq(src: np.ndarray, dst: np.ndarray, spacing) -> float:
        s0, s1, s2 = spacing
        worst = 0.0
        for start in range(0, len(src), HD_CHUNK):
            chunk = src[start:start + HD_CHUNK]
            o0 = (chunk[:, None, 0] - dst[None, :, 0]) * s0
            o1 = (chunk[:, None, 1] - dst[None, :, 1]) * s1
            o2 = (chunk[:, None, 2] - dst[None, :, 2]) * s2
            squared = o0 * o0 + o1 * o1 + o2 * o2
            worst = max(worst, float(squared.min(axis=1).max()))
        return worst

    def hausdorff_mm(self, a: BinaryMask, b: BinaryMask, spacing=None) -> float:
        """Máximo de las dos distancias dirigidas max-min entre bordes, escaladas por el espaciado."""
        check_same_extents(a, b, "hausdorff_mm")
        if a.is_empty() or b.is_empty():
            raise DataValidationError("La distancia de Hausdorff no está definida para máscaras vacías.")
        spacing = tuple(spacing) if spacing is not None else a.spacing
        if self.hd_method == "edt":
            return self._hausdorff_edt(a, b, spacing)
        border_a = self.boundary_voxels(a)
        border_b = self.boundary_voxels(b)
        worst = max(
            self._directed_max_min_sq(border_a, border_b, spacing),
            self._directed_max_min_sq(border_b, border_a, spacing),
        )
        return math.sqrt(worst)

    def _hausdorff_edt(self, a: BinaryMask, b: BinaryMask, spacing) -> float:
        edge_a = np.zeros(a.extents, dtype=bool)
        edge_b = np.zeros(b.extents, dtype=bool)
        edge_a[tuple(self.boundary_voxels(a).T)] = True
        edge_b[tuple(self.boundary_voxels(b).T)] = True
        to_b = ndimage.distance_transform_edt(~edge_b, sampling=spacing)
        to_a = ndimage.distance_transform_edt(~edge_a, sampling=spacing)
        return float(max(to_b[edge_a].max(), to_a[edge_b].max()))

    @staticmethod
    def precision_recall(pred: BinaryMask, gt: BinaryMask) -> PrecisionRecall:
        """Con denominador cero el valor se reporta como 0 y se marca como indefinido."""
        check_same_extents(pred, gt, "precision_recall")
        tp = int((pred.mask & gt.mask).sum())
        fp = int((pred.mask & ~gt.mask).sum())
        fn = int((~pred.mask & gt.mask).sum())
        precision_undefined = tp + fp == 0
        recall_undefined = tp + fn == 0
        precision = 0.0 if precision_undefined else tp / (tp + fp)
        recall = 0.0 if recall_undefined else tp / (tp + fn)
        return PrecisionRecall(precision, recall, precision_undefined, recall_undefined)

    @staticmethod
    def restrict_slices(mask: BinaryMask, slice_filter) -> BinaryMask:
        """Anula los cortes coronales (índice D) que no están en slice_filter."""
        if slice_filter is None:
            return mask
        indices = sorted(set(int(i) for i in slice_filter))
        if any(i < 0 or i >= mask.extents[0] for i in indices):
            raise DataValidationError(f"slice_filter fuera de rango [0, {mask.extents[0] - 1}]: {indices}.")
        keep = np.zeros(mask.extents[0], dtype=bool)
        keep[indices] = True
        return BinaryMask(mask.mask & keep[:, None, None], mask.spacing)

    def region_row(self, region: str, pred: BinaryMask, gt: BinaryMask) -> MetricRow:
        pr = self.precision_recall(pred, gt)
        if pred.is_empty() or gt.is_empty():
            hd, hd_undefined = math.nan, True
        else:
            hd, hd_undefined = self.hausdorff_mm(pred, gt), False
        return MetricRow(
            region=region,
            dice=self.dice(pred, gt),
            hd_mm=hd,
            precision=pr.precision,
            recall=pr.recall,
            precision_undefined=pr.precision_undefined,
            hd_undefined=hd_undefined,
        )

    def evaluate_volume(self, pred: LabelVolume, gt: LabelVolume, slice_filter=None) -> list[MetricRow]:
        check_same_extents(pred, gt, "evaluate_volume")
        if not np.allclose(pred.spacing, gt.spacing):
            raise ShapeError(f"evaluate_volume: espaciados distintos {pred.spacing} y {gt.spacing}.")
        regions = (
            (REGION_BRAIN, pred.brain_mask(), gt.brain_mask()),
            (REGION_CONTRA, pred.class_mask(CONTRALATERAL), gt.class_mask(CONTRALATERAL)),
        )
        return [
            self.region_row(region, self.restrict_slices(p, slice_filter), self.restrict_slices(g, slice_filter))
            for region, p, g in regions
        ]
