# app/controllers/ControllersData.py

import os

import click
from flask import Blueprint, current_app

from app.mapping.run_schema import load_run_config, write_run_config
from app.middleware import handle_cli_errors
from app.models.Dataset import DatasetItem
from app.repositories.ManifestRepository import ManifestRepository
from app.repositories.VolumeRepository import VolumeRepository
from app.services.DataService import DataService
from app.services.PhantomService import PhantomService

bp = Blueprint('data', __name__, cli_group=None)

MANIFEST_FILENAME = "manifest.csv"
SHAM_GROUP = "sham"


@bp.cli.command('phantom')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Archivo TOML de configuración.')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False), help='Directorio del dataset.')
@click.option('--count', type=click.IntRange(min=1), default=5, show_default=True, help='Fantomas por grupo.')
@click.option('--groups', default='A,B', show_default=True, help='Subgrupos separados por coma.')
@click.option('--sham', 'sham_count', type=click.IntRange(min=0), default=0, show_default=True,
              help='Fantomas sin lesión (siempre en prueba).')
@click.option('--seed', type=int, default=None)
@click.option('--noise-sigma', type=float, default=None)
@click.option('--lesion-probability', type=float, default=None)
@click.option('--train-per-group', type=int, default=None)
@click.option('--val-per-group', type=int, default=None)
@handle_cli_errors
def phantom(config_path, out_dir, count, groups, sham_count, seed, noise_sigma, lesion_probability,
            train_per_group, val_per_group):
    """Genera un dataset de fantomas (volúmenes, etiquetas y manifiesto con roles)."""
    run = load_run_config(config_path, {
        "command": "phantom",
        "paths": {"out": out_dir},
        "phantom": {"seed": seed, "noise_sigma": noise_sigma, "lesion_probability": lesion_probability},
        "split": {"seed": seed, "train_per_group": train_per_group, "val_per_group": val_per_group},
    })
    group_names = [g.strip() for g in groups.split(',') if g.strip()]
    if not group_names:
        raise click.UsageError("--groups no puede estar vacío.")

    phantoms = PhantomService()
    volumes = VolumeRepository()
    plan = [(group, f"{group}_{i:03d}", False) for group in group_names for i in range(count)]
    plan += [(SHAM_GROUP, f"{SHAM_GROUP}_{i:03d}", True) for i in range(sham_count)]

    items = []
    for offset, (group, item_id, sham) in enumerate(plan):
        params = run.phantom.model_copy(update={"seed": run.phantom.seed + offset, "sham": sham})
        case = phantoms.generate_phantom(params)
        volume_rel = os.path.join("volumes", f"{item_id}.nii")
        labels_rel = os.path.join("labels", f"{item_id}.nii")
        volumes.write_volume(case.volume, os.path.join(out_dir, volume_rel))
        volumes.write_labels(case.labels, os.path.join(out_dir, labels_rel))
        items.append(DatasetItem(item_id, group, volume_rel, labels_rel, sham))
        current_app.logger.debug(f"[DEBUG] Fantoma '{item_id}' generado: {case.to_dict()}")

    split = DataService().split_dataset(items, run.split.train_per_group, run.split.val_per_group, run.split.seed)
    ManifestRepository().save(split.with_roles(), os.path.join(out_dir, MANIFEST_FILENAME))
    write_run_config(run, out_dir)
    current_app.logger.info(f"[INFO] Dataset de {len(items)} fantoma(s) generado en '{out_dir}'.")
