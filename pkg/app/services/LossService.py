# app/services/LossService.py

import numpy as np

from app.engine import Tensor
from app.engine import functional as F
from app.errors import ExtentError, ShapeError
from app.models.Network import SegmentationOutput
from app.models.Volume import NUM_CLASSES, LabelVolume

AUX_FACTORS = (8, 4)


class LossService:
    """
    Objetivo de entrenamiento: entropía cruzada + Dice en cada salida
    supervisada, sumadas sin ponderación.
    """

    def __init__(self, clamp_floor: float = 1e-7, dice_smooth: float = 1e-6):
        self.clamp_floor = clamp_floor
        self.dice_smooth = dice_smooth

    @staticmethod
    def one_hot(labels, num_classes: int = NUM_CLASSES) -> Tensor:
        """Etiquetas (D, H, W) -> tensor one-hot (1, C, D, H, W)."""
        array = labels.labels if isinstance(labels, LabelVolume) else np.asarray(labels)
        encoded = np.stack([(array == c) for c in range(num_classes)]).astype(np.float64)
        return Tensor(encoded[np.newaxis])

    @staticmethod
    def _check_pair(q: Tensor, p: Tensor, op: str):
        if q.shape != p.shape:
            raise ShapeError(f"{op}: predicción {q.shape} y objetivo {p.shape} no coinciden.")
        if q.ndim < 2:
            raise ShapeError(f"{op}: se requiere un eje de clases, forma recibida {q.shape}.")

    def cross_entropy(self, q: Tensor, p: Tensor) -> Tensor:
        """-(1 / (N * C)) * sum p * log(max(q, piso)), N = número de vóxeles."""
        self._check_pair(q, p, "cross_entropy")
        classes = q.shape[1]
        voxels = q.size // classes
        log_q = F.log(F.clamp_min(q, self.clamp_floor))
        total = F.reduce_sum(F.elementwise_mul(p, log_q))
        return F.scale(total, -1.0 / (voxels * classes))

    def dice_loss(self, q: Tensor, p: Tensor) -> Tensor:
        """1 - (2 / C) * sum_c [sum p*q / (sum p^2 + q^2 + suavizado)]."""
        self._check_pair(q, p, "dice_loss")
        classes = q.shape[1]
        axes = tuple(i for i in range(q.ndim) if i != 1)
        numerator = F.reduce_sum(F.elementwise_mul(p, q), axes)
        denominator = F.add_scalar(F.reduce_sum(F.elementwise_add(F.square(p), F.square(q)), axes),
                                   self.dice_smooth)
        ratio = F.reduce_sum(F.elementwise_div(numerator, denominator))
        return F.add_scalar(F.scale(ratio, -2.0 / classes), 1.0)

    @staticmethod
    def downsample_labels(labels, factor: int, num_classes: int = NUM_CLASSES) -> Tensor:
        """
        Mayoría por bloque factor^3; los empates van a la clase de menor índice.
        Devuelve el objetivo one-hot (1, C, D/f, H/f, W/f).
        """
        array = labels.labels if isinstance(labels, LabelVolume) else np.asarray(labels)
        if factor < 1:
            raise ExtentError(f"El factor de reducción debe ser >= 1, se recibió {factor}.")
        if any(e % factor for e in array.shape):
            padding = tuple(int((-e) % factor) for e in array.shape)
            raise ExtentError(
                f"Las extensiones {array.shape} no son divisibles por el factor {factor}.", padding=padding
            )
        d, h, w = (e // factor for e in array.shape)
        blocks = array.reshape(d, factor, h, factor, w, factor)
        counts = np.stack([(blocks == c).sum(axis=(1, 3, 5)) for c in range(num_classes)])
        return LossService.one_hot(np.argmax(counts, axis=0), num_classes)

    def loss_terms(self, output: SegmentationOutput, labels: LabelVolume) -> dict[str, Tensor]:
        """Términos individuales: main_ce, main_dice y aux{k}_ce / aux{k}_dice."""
        target = self.one_hot(labels)
        if output.main_probs.shape != target.shape:
            raise ShapeError(
                f"La salida principal {output.main_probs.shape} no coincide con las etiquetas {target.shape}."
            )
        terms = {
            "main_ce": self.cross_entropy(output.main_probs, target),
            "main_dice": self.dice_loss(output.main_probs, target),
        }
        if len(output.aux_probs) > len(AUX_FACTORS):
            raise ShapeError(f"Se esperaban a lo sumo {len(AUX_FACTORS)} salidas auxiliares.")
        for k, (aux, factor) in enumerate(zip(output.aux_probs, AUX_FACTORS), start=1):
            aux_target = self.downsample_labels(labels, factor)
            if aux.shape != aux_target.shape:
                raise ShapeError(
                    f"La salida auxiliar {k} tiene forma {aux.shape}; a 1/{factor} se esperaba {aux_target.shape}."
                )
            terms[f"aux{k}_ce"] = self.cross_entropy(aux, aux_target)
            terms[f"aux{k}_dice"] = self.dice_loss(aux, aux_target)
        return terms

    def deep_supervision_loss(self, output: SegmentationOutput, labels: LabelVolume) -> Tensor:
        terms = self.loss_terms(output, labels)
        return sum_terms(list(terms.values()))


def sum_terms(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = F.elementwise_add(total, term)
    return total
