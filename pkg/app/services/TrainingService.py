# app/services/TrainingService.py

import math
from collections import defaultdict

import numpy as np
from flask import current_app

from app.engine import Tensor, backward, no_grad
from app.errors import DivergenceError
from app.extensions import get_executor
from app.mapping.network_schema import NetworkConfig, TrainConfig
from app.models.Network import Model
from app.models.Reports import EpochRecord
from app.models.Volume import LabelVolume, VolumeGrid
from app.services.DataService import DataService
from app.services.LossService import LossService, sum_terms
from app.services.NetworkService import NetworkService
from app.services.OptimizerService import AdamState, OptimizerService

Sample = tuple[VolumeGrid, LabelVolume]


class TrainingService:
    """
    Bucle de entrenamiento con lotes de un volumen: pérdida de supervisión
    profunda, Adam y selección del modelo por pérdida de validación.
    """

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.logger = current_app.logger
        self.network = NetworkService()
        self.loss = LossService(cfg.clamp_floor, cfg.dice_smooth)
        self.optimizer = OptimizerService(cfg)

    @staticmethod
    def _as_tensor(grid: VolumeGrid) -> Tensor:
        return Tensor(grid.values[np.newaxis, np.newaxis])

    def _prepare(self, samples: list[Sample]) -> list[tuple[Tensor, LabelVolume]]:
        return [(self._as_tensor(DataService.standardize(grid)), labels) for grid, labels in samples]

    def validation_loss(self, model: Model, samples: list[tuple[Tensor, LabelVolume]]) -> float:
        if not samples:
            return math.nan
        with no_grad():
            values = [
                self.loss.deep_supervision_loss(self.network.forward(model, volume, training=False), labels).item()
                for volume, labels in samples
            ]
        return math.fsum(values) / len(values)

    def train(self, config: NetworkConfig, train_set: list[Sample], val_set: list[Sample],
              member: int = 0) -> tuple[Model, list[EpochRecord]]:
        """
        Entrena un modelo durante `cfg.epochs` épocas y devuelve el modelo y el
        historial. Con model_selection='best_val' se conservan los parámetros de
        la época con menor pérdida de validación (sin validación, la última).
        """
        if not train_set:
            raise ValueError("El conjunto de entrenamiento está vacío.")
        cfg = self.cfg
        model = self.network.build_model(config)
        train_samples = self._prepare(train_set)
        val_samples = self._prepare(val_set)
        rng = np.random.default_rng(cfg.seed + member)
        state = AdamState()
        history: list[EpochRecord] = []
        best_val = math.inf
        best_snapshot = None

        self.logger.info(
            f"[TRAIN] Miembro {member}: {len(train_samples)} volumen(es) de entrenamiento, "
            f"{len(val_samples)} de validación, {cfg.epochs} épocas, lr={cfg.learning_rate}."
        )
        for epoch in range(1, cfg.epochs + 1):
            epoch_losses = []
            term_sums: dict[str, float] = defaultdict(float)
            for index in rng.permutation(len(train_samples)):
                volume, labels = train_samples[index]
                output = self.network.forward(model, volume, training=True)
                terms = self.loss.loss_terms(output, labels)
                total = sum_terms(list(terms.values()))
                value = total.item()
                if not math.isfinite(value):
                    self.logger.error(f"[ERROR] Pérdida no finita en la época {epoch} (miembro {member}).")
                    raise DivergenceError(epoch, value)

                model.zero_grad()
                backward(total, parameters=model.parameters.values())
                grads = {name: tensor.grad for name, tensor in model.parameters.items()}
                model.parameters, state = self.optimizer.adam_step(model.parameters, grads, state)

                epoch_losses.append(value)
                for name, term in terms.items():
                    term_sums[name] += term.item()

            train_loss = math.fsum(epoch_losses) / len(epoch_losses)
            val_loss = self.validation_loss(model, val_samples)
            record = EpochRecord(
                epoch, train_loss, val_loss,
                {name: s / len(epoch_losses) for name, s in term_sums.items()},
            )
            history.append(record)
            self.logger.info(
                f"[TRAIN] Miembro {member} época {epoch}/{cfg.epochs}: train={train_loss:.6f} val={val_loss:.6f}"
            )

            if cfg.model_selection == "best_val" and math.isfinite(val_loss) and val_loss < best_val:
                best_val = val_loss
                best_snapshot = model.snapshot()
                best_snapshot["epoch"] = epoch

        if best_snapshot is not None:
            model.restore(best_snapshot)
            self.logger.info(f"[TRAIN] Miembro {member}: se conservan los parámetros de la época {best_snapshot['epoch']} "
                             f"(val={best_val:.6f}).")
        return model, history

    def train_ensemble(self, config: NetworkConfig, train_set: list[Sample],
                       val_set: list[Sample]) -> list[tuple[Model, list[EpochRecord]]]:
        """Un miembro por semilla (config.seed + k), en paralelo si cfg.parallel_members."""
        members = [config.model_copy(update={"seed": config.seed + k}) for k in range(self.cfg.ensemble_size)]

        if not self.cfg.parallel_members:
            return [self.train(member_cfg, train_set, val_set, member=k) for k, member_cfg in enumerate(members)]

        app = current_app._get_current_object()

        def task(k):
            with app.app_context():
                return TrainingService(self.cfg).train(members[k], train_set, val_set, member=k)

        self.logger.info(f"[TRAIN] Entrenando {len(members)} miembros en paralelo.")
        return list(get_executor().map(task, range(len(members))))
