# app/controllers/ControllersTraining.py

import os

import click
import numpy as np
from flask import Blueprint, current_app

from app.mapping.run_schema import load_run_config, write_run_config
from app.middleware import handle_cli_errors
from app.models.Dataset import DatasetItem
from app.models.Network import OUTPUT_STRIDE
from app.models.Volume import LabelVolume
from app.repositories.CheckpointRepository import CheckpointRepository
from app.repositories.ManifestRepository import ManifestRepository
from app.repositories.ReportRepository import ReportRepository
from app.repositories.VolumeRepository import VolumeRepository
from app.services.DataService import DataService
from app.services.NetworkService import NetworkService
from app.services.TrainingService import TrainingService

bp = Blueprint('training', __name__, cli_group=None)

PREDICTIONS_FILENAME = "predictions.csv"


def _load_pairs(items: list[DatasetItem]):
    volumes = VolumeRepository()
    return [(volumes.read_volume(item.volume_path), volumes.read_labels(item.labels_path)) for item in items]


def _training_roles(items: list[DatasetItem], split_cfg) -> tuple[list[DatasetItem], list[DatasetItem]]:
    """Usa la columna `role` del manifiesto; si falta, parte el dataset con la semilla configurada."""
    if any(item.role for item in items):
        return [i for i in items if i.role == "train"], [i for i in items if i.role == "val"]
    split = DataService().split_dataset(items, split_cfg.train_per_group, split_cfg.val_per_group, split_cfg.seed)
    return split.train, split.val


def _save_members(members, out_dir: str):
    checkpoints = CheckpointRepository()
    reports = ReportRepository()
    for k, (model, history) in enumerate(members):
        checkpoints.save(model, os.path.join(out_dir, f"member_{k}.npz"))
        reports.save([record.to_dict() for record in history], os.path.join(out_dir, f"history_member_{k}.csv"))


@bp.cli.command('train')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Archivo TOML de configuración.')
@click.option('--manifest', 'manifest_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.option('--epochs', type=int, default=None)
@click.option('--filter-rate', type=float, default=None)
@click.option('--architecture', type=click.Choice(['medic', 'baseline']), default=None,
              help='"baseline": DeepLabv3+ sin atención ni supervisión profunda.')
@click.option('--ensemble-size', type=int, default=None)
@click.option('--lr', 'learning_rate', type=float, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--model-selection', type=click.Choice(['best_val', 'last']), default=None)
@click.option('--parallel/--sequential', 'parallel_members', default=None, help='Entrenar miembros en paralelo.')
@click.option('--per-group', is_flag=True, default=False,
              help='Un ensamble por grupo, entrenado solo con los volúmenes de ese grupo (salida en <out>/<grupo>/).')
@handle_cli_errors
def train(config_path, manifest_path, out_dir, epochs, filter_rate, architecture, ensemble_size, learning_rate,
          seed, model_selection, parallel_members, per_group):
    """Entrena el ensamble y guarda un checkpoint y un historial por miembro."""
    run = load_run_config(config_path, {
        "command": "train",
        "paths": {"manifest": manifest_path, "out": out_dir},
        "network": {"filter_rate": filter_rate, "architecture": architecture, "seed": seed},
        "train": {"epochs": epochs, "ensemble_size": ensemble_size, "learning_rate": learning_rate, "seed": seed,
                  "model_selection": model_selection, "parallel_members": parallel_members},
    })
    items = ManifestRepository().load(manifest_path)
    train_items, val_items = _training_roles(items, run.split)
    if not train_items:
        raise click.UsageError("El manifiesto no tiene elementos de entrenamiento.")

    current_app.logger.info(
        f"[INFO] Parámetros de la red ({run.network.architecture}) con filter_rate={run.network.filter_rate}: "
        f"{NetworkService.count_parameters(run.network):,}."
    )
    write_run_config(run, out_dir)
    trainer = TrainingService(run.train)

    if not per_group:
        members = trainer.train_ensemble(run.network, _load_pairs(train_items), _load_pairs(val_items))
        _save_members(members, out_dir)
        current_app.logger.info(f"[INFO] Entrenamiento terminado: {len(members)} checkpoint(s) en '{out_dir}'.")
        return

    for group in sorted({item.group for item in train_items}):
        group_train = [i for i in train_items if i.group == group]
        group_val = [i for i in val_items if i.group == group]
        current_app.logger.info(
            f"[TRAIN] Grupo '{group}': {len(group_train)} volumen(es) de entrenamiento, {len(group_val)} de validación."
        )
        members = trainer.train_ensemble(run.network, _load_pairs(group_train), _load_pairs(group_val))
        _save_members(members, os.path.join(out_dir, group))
        current_app.logger.info(
            f"[INFO] Grupo '{group}' terminado: {len(members)} checkpoint(s) en '{os.path.join(out_dir, group)}'."
        )


@bp.cli.command('segment')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Archivo TOML de configuración.')
@click.option('--checkpoint', 'checkpoints', multiple=True, required=True, type=click.Path(exists=True, dir_okay=False),
              help='Uno o más checkpoints (más de uno: voto del ensamble).')
@click.option('--manifest', 'manifest_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.option('--role', default=None, help='Segmentar solo los elementos con este rol.')
@click.option('--pad/--no-pad', default=False, help='Rellenar hasta múltiplos de 16 y recortar la salida.')
@click.option('--parallel/--sequential', default=False)
@handle_cli_errors
def segment(config_path, checkpoints, manifest_path, out_dir, role, pad, parallel):
    """Segmenta cada volumen del manifiesto y escribe las etiquetas predichas."""
    run = load_run_config(config_path, {
        "command": "segment",
        "paths": {"manifest": manifest_path, "out": out_dir, "checkpoints": ",".join(checkpoints)},
    })
    repo = CheckpointRepository()
    models = [repo.load(path) for path in checkpoints]
    network = NetworkService()
    volumes = VolumeRepository()
    items = [i for i in ManifestRepository().load(manifest_path) if role is None or i.role == role]
    write_run_config(run, out_dir)

    predictions = []
    for item in items:
        grid = volumes.read_volume(item.volume_path)
        extents = grid.extents
        if pad:
            grid = DataService.pad_to_multiple(grid, OUTPUT_STRIDE)
        if len(models) == 1:
            labels = network.segment(models[0], grid)
        else:
            labels = network.ensemble_predict(models, grid, parallel=parallel)
        if pad:
            cropped = labels.labels[:extents[0], :extents[1], :extents[2]]
            labels = LabelVolume(np.ascontiguousarray(cropped), labels.spacing, labels.affine)
        labels_rel = os.path.join("labels", f"{item.id}.nii")
        volumes.write_labels(labels, os.path.join(out_dir, labels_rel))
        predictions.append(DatasetItem(item.id, item.group, item.volume_path, labels_rel, item.sham, item.role))
        current_app.logger.info(f"[INFO] Volumen '{item.id}' segmentado: {labels.counts()}")

    ManifestRepository().save(predictions, os.path.join(out_dir, PREDICTIONS_FILENAME))


@bp.cli.command('capacity')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Archivo TOML de configuración.')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@handle_cli_errors
def capacity(config_path, out_dir):
    """Tabla de parámetros entrenables para cada filter_rate configurado."""
    run = load_run_config(config_path, {"command": "capacity", "paths": {"out": out_dir}})
    full = NetworkService.count_parameters(run.network.model_copy(update={"filter_rate": 1.0}))
    rows = []
    for rate in run.analysis.capacity_rates:
        config = run.network.model_copy(update={"filter_rate": rate})
        count = NetworkService.count_parameters(config)
        rows.append({
            "filter_rate": rate,
            "channels": "/".join(str(c) for c in config.encoder_stage_channels),
            "parameters": count,
            "parameters_millions": round(count / 1e6, 3),
            "ratio_to_full": count / full,
        })
        current_app.logger.info(f"[INFO] filter_rate={rate}: {count:,} parámetros ({count / full:.3f} del total).")
    write_run_config(run, out_dir)
    ReportRepository().save(rows, os.path.join(out_dir, "capacity.csv"))
