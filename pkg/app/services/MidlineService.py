# app/services/MidlineService.py

import numpy as np
from flask import current_app
from scipy.ndimage import binary_dilation, generate_binary_structure

from app.errors import DataValidationError
from app.models.Reports import MidlineBand, MidlineRow
from app.models.Volume import CONTRALATERAL, IPSILATERAL, BinaryMask, LabelVolume, check_same_extents
from app.services.MetricsService import MetricsService

# cruz 4-conexa dentro de cada corte coronal, sin extenderse al corte vecino
INPLANE_CROSS = generate_binary_structure(2, 1)[np.newaxis]


def dilate_inplane(mask: BinaryMask, n: int) -> BinaryMask:
    """n dilataciones con la cruz 2D aplicada a cada corte coronal (índice D) por separado."""
    if n < 0:
        raise ValueError(f"El número de dilataciones debe ser >= 0, se recibió {n}.")
    if n == 0:
        # binary_dilation con iterations=0 itera hasta que no hay cambios
        return BinaryMask(mask.mask.copy(), mask.spacing)
    return BinaryMask(binary_dilation(mask.mask, structure=INPLANE_CROSS, iterations=n), mask.spacing)


def extract_midline(labels: LabelVolume) -> BinaryMask:
    """Vóxeles de un hemisferio con algún 4-vecino en el plano del otro hemisferio."""
    ipsi = labels.labels == IPSILATERAL
    contra = labels.labels == CONTRALATERAL
    if not ipsi.any() or not contra.any():
        raise DataValidationError("La línea media requiere vóxeles de ambos hemisferios (clases 1 y 2).")
    near_contra = binary_dilation(contra, structure=INPLANE_CROSS)
    near_ipsi = binary_dilation(ipsi, structure=INPLANE_CROSS)
    return BinaryMask((ipsi & near_contra) | (contra & near_ipsi), labels.spacing)


class MidlineService:
    """Dice de ambos hemisferios dentro de una banda alrededor de la línea media."""

    def __init__(self):
        self.logger = current_app.logger
        self.metrics = MetricsService()

    def band(self, gt: LabelVolume, n: int, slice_filter=None) -> MidlineBand:
        band = dilate_inplane(extract_midline(gt), n)
        return MidlineBand(n, MetricsService.restrict_slices(band, slice_filter))

    def midline_dice(self, pred: LabelVolume, gt: LabelVolume, n: int, slice_filter=None) -> tuple[float, float]:
        check_same_extents(pred, gt, "midline_dice")
        band = self.band(gt, n, slice_filter).band
        if band.is_empty():
            raise DataValidationError(f"La banda de línea media (n={n}) está vacía tras filtrar cortes.")
        dice_ipsi = self.metrics.dice(pred.class_mask(IPSILATERAL) & band, gt.class_mask(IPSILATERAL) & band)
        dice_contra = self.metrics.dice(pred.class_mask(CONTRALATERAL) & band, gt.class_mask(CONTRALATERAL) & band)
        return dice_ipsi, dice_contra

    def midline_report(self, pred: LabelVolume, gt: LabelVolume, iterations: int = 10,
                       slice_filter=None, volume_id: str = "") -> list[MidlineRow]:
        """Una fila por n = 1..iterations."""
        rows = []
        for n in range(1, iterations + 1):
            dice_ipsi, dice_contra = self.midline_dice(pred, gt, n, slice_filter)
            band_voxels = self.band(gt, n, slice_filter).size
            rows.append(MidlineRow(n, dice_ipsi, dice_contra, band_voxels, volume_id))
        self.logger.debug(f"[MIDLINE] Volumen '{volume_id}': {len(rows)} bandas evaluadas.")
        return rows
