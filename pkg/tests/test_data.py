import os

import numpy as np
import pytest

from app.errors import ConfigurationError, DataValidationError, ExtentError, VolumeFormatError
from app.mapping.phantom_schema import PhantomParams
from app.mapping.run_schema import RUN_CONFIG_FILENAME, load_run_config, write_run_config
from app.models.Dataset import DatasetItem
from app.models.Volume import CONTRALATERAL, IPSILATERAL, BinaryMask, LabelVolume, VolumeGrid
from app.repositories.ManifestRepository import ManifestRepository
from app.repositories.VolumeRepository import VolumeRepository
from app.services.DataService import DataService
from app.services.PhantomService import PhantomService


# ─────────────────────── Estandarización y regiones ───────────────────────

def test_standardize_gives_zero_mean_unit_variance():
    grid = VolumeGrid(np.random.default_rng(0).normal(40.0, 7.0, size=(4, 5, 6)))
    values = DataService.standardize(grid).values
    assert values.mean() == pytest.approx(0.0, abs=1e-12)
    assert values.std() == pytest.approx(1.0, abs=1e-12)


def test_standardize_is_invariant_to_power_of_two_scaling():
    grid = VolumeGrid(np.random.default_rng(1).normal(size=(4, 4, 4)))
    scaled = VolumeGrid(grid.values * 4.0)
    np.testing.assert_array_equal(DataService.standardize(grid).values, DataService.standardize(scaled).values)


def test_standardize_rejects_constant_volume():
    with pytest.raises(DataValidationError):
        DataService.standardize(VolumeGrid(np.full((2, 2, 2), 3.0)))


def test_derive_regions():
    brain = np.zeros((2, 3, 4), dtype=bool)
    brain[:, 1:, 1:] = True
    contra = brain.copy()
    contra[:, :, 2:] = False
    labels = DataService.derive_regions(BinaryMask(brain), BinaryMask(contra))
    assert labels.counts() == {0: 12, 1: 8, 2: 4}
    assert np.all(labels.labels[contra] == CONTRALATERAL)
    assert np.all(labels.labels[brain & ~contra] == IPSILATERAL)


def test_derive_regions_rejects_contra_outside_brain():
    brain = np.zeros((2, 2, 2), dtype=bool)
    contra = np.zeros((2, 2, 2), dtype=bool)
    contra[0, 0, 0] = True
    with pytest.raises(DataValidationError):
        DataService.derive_regions(BinaryMask(brain), BinaryMask(contra))


def test_label_volume_rejects_out_of_range_classes():
    with pytest.raises(DataValidationError):
        LabelVolume(np.full((2, 2, 2), 3))


def test_pad_to_multiple_pads_at_the_end_with_the_minimum():
    grid = VolumeGrid(np.arange(2 * 3 * 17, dtype=float).reshape(2, 3, 17) + 5.0)
    padded = DataService.pad_to_multiple(grid, 16)
    assert padded.extents == (16, 16, 32)
    np.testing.assert_array_equal(padded.values[:2, :3, :17], grid.values)
    assert padded.values[15, 15, 31] == 5.0
    assert DataService.pad_to_multiple(padded, 16) is padded


def test_check_divisible_reports_padding():
    with pytest.raises(ExtentError) as info:
        DataService.check_divisible((30, 64, 50), 16)
    assert info.value.padding == (2, 0, 14)
    DataService.check_divisible((32, 64, 48), 16)


# ─────────────────────── Partición ───────────────────────

def _items(groups=("A", "B"), per_group=5, sham=2):
    items = [DatasetItem(f"{g}_{i:03d}", g) for g in groups for i in range(per_group)]
    items += [DatasetItem(f"sham_{i:03d}", "sham", sham=True) for i in range(sham)]
    return items


def test_split_is_deterministic_and_complete():
    service = DataService()
    first = service.split_dataset(_items(), 3, 1, seed=4)
    second = service.split_dataset(list(reversed(_items())), 3, 1, seed=4)
    assert first.roles() == second.roles()
    assert len(first.train) == 6 and len(first.val) == 2 and len(first.test) == 4
    assert set(first.roles()) == {item.id for item in _items()}


def test_sham_items_always_land_in_test():
    split = DataService().split_dataset(_items(), 3, 1, seed=0)
    roles = split.roles()
    assert roles["sham_000"] == "test" and roles["sham_001"] == "test"
    assert all(not item.sham for item in split.train + split.val)


def test_split_per_group_counts():
    split = DataService().split_dataset(_items(), 2, 2, seed=9)
    for group in ("A", "B"):
        assert sum(item.group == group for item in split.train) == 2
        assert sum(item.group == group for item in split.val) == 2


def test_split_rejects_undersized_group():
    items = [i for i in _items() if i.group != "B"] + _items(("B",), 2, 0)
    with pytest.raises(DataValidationError, match="'B'"):
        DataService().split_dataset(items, 3, 1)


def test_split_rejects_duplicate_ids():
    items = _items()
    with pytest.raises(DataValidationError):
        DataService().split_dataset(items + [items[0]], 1, 1)


def test_with_roles_sorted_by_id():
    split = DataService().split_dataset(_items(), 3, 1, seed=2)
    rows = split.with_roles()
    assert [r.id for r in rows] == sorted(r.id for r in rows)
    assert {r.role for r in rows} == {"train", "val", "test"}


# ─────────────────────── Fantomas ───────────────────────

@pytest.fixture
def phantoms():
    return PhantomService()


def test_phantom_is_reproducible(phantoms, small_phantom):
    first = phantoms.generate_phantom(small_phantom)
    second = phantoms.generate_phantom(small_phantom)
    np.testing.assert_array_equal(first.volume.values, second.volume.values)
    np.testing.assert_array_equal(first.labels.labels, second.labels.labels)
    other = phantoms.generate_phantom(small_phantom.model_copy(update={"seed": small_phantom.seed + 1}))
    assert not np.array_equal(first.volume.values, other.volume.values)


def test_phantom_hemispheres_split_at_midline(phantoms, small_phantom):
    case = phantoms.generate_phantom(small_phantom)
    labels = case.labels.labels
    columns = np.nonzero(labels == CONTRALATERAL)[2]
    assert columns.max() < case.midline_index
    assert np.nonzero(labels == IPSILATERAL)[2].min() >= case.midline_index
    assert case.midline_index == small_phantom.extents[2] // 2 - case.midline_shift
    lo, hi = small_phantom.midline_shift_range
    assert lo <= case.midline_shift <= hi


def test_lesion_lies_inside_the_ipsilateral_hemisphere(phantoms, small_phantom):
    params = small_phantom.model_copy(update={"lesion_probability": 1.0, "noise_sigma": 0.0,
                                               "lesion_radius_range": (2.0, 2.0)})
    case = phantoms.generate_phantom(params)
    assert case.has_lesion
    assert np.all(case.labels.labels[case.lesion_mask] == IPSILATERAL)
    assert np.all(case.volume.values[case.lesion_mask] == np.float32(params.ipsi_mean + params.lesion_shift))


def test_sham_phantom_has_no_lesion_and_no_shift(phantoms, small_phantom):
    case = phantoms.generate_phantom(small_phantom.model_copy(update={"sham": True, "lesion_probability": 1.0}))
    assert not case.has_lesion
    assert case.midline_shift == 0


def test_phantom_without_noise_has_piecewise_constant_intensities(phantoms, small_phantom):
    params = small_phantom.model_copy(update={"noise_sigma": 0.0, "lesion_probability": 0.0})
    case = phantoms.generate_phantom(params)
    brain = case.labels.labels > 0
    assert set(np.unique(case.volume.values[~brain])) == {params.background_mean}
    assert set(np.unique(case.volume.values[brain])) == {params.ipsi_mean}


def test_phantom_too_small_for_the_ellipsoid(phantoms):
    with pytest.raises(DataValidationError):
        phantoms.generate_phantom(PhantomParams(extents=(2, 2, 2)))


def test_generate_many_uses_consecutive_seeds(phantoms, small_phantom):
    cases = phantoms.generate_many(small_phantom, 2)
    second = phantoms.generate_phantom(small_phantom.model_copy(update={"seed": small_phantom.seed + 1}))
    np.testing.assert_array_equal(cases[1].volume.values, second.volume.values)


# ─────────────────────── NIfTI ───────────────────────

@pytest.fixture
def volumes():
    return VolumeRepository()


def test_nifti_roundtrip_is_exact(tmp_path, volumes, phantoms, small_phantom):
    case = phantoms.generate_phantom(small_phantom)
    volume_path = str(tmp_path / "v.nii")
    labels_path = str(tmp_path / "l.nii")
    volumes.write_volume(case.volume, volume_path)
    volumes.write_labels(case.labels, labels_path)

    grid = volumes.read_volume(volume_path)
    labels = volumes.read_labels(labels_path)
    np.testing.assert_array_equal(grid.values, case.volume.values)
    np.testing.assert_array_equal(labels.labels, case.labels.labels)
    assert grid.spacing == small_phantom.spacing
    assert labels.spacing == small_phantom.spacing


def test_compressed_nifti_is_rejected(tmp_path, volumes):
    with pytest.raises(VolumeFormatError):
        volumes.write_volume(VolumeGrid(np.ones((2, 2, 2))), str(tmp_path / "v.nii.gz"))
    with pytest.raises(VolumeFormatError):
        volumes.read_volume(str(tmp_path / "v.nii.gz"))


def test_truncated_nifti_is_rejected(tmp_path, volumes):
    path = str(tmp_path / "v.nii")
    volumes.write_volume(VolumeGrid(np.random.default_rng(0).normal(size=(8, 8, 8))), path)
    size = os.path.getsize(path)
    with open(path, "r+b") as f:
        f.truncate(size - 1024)
    with pytest.raises(VolumeFormatError):
        volumes.read_volume(path)


def test_labels_must_be_uint8(tmp_path, volumes):
    path = str(tmp_path / "v.nii")
    volumes.write_volume(VolumeGrid(np.ones((2, 2, 2))), path)
    with pytest.raises(VolumeFormatError):
        volumes.read_labels(path)


def test_missing_volume(tmp_path, volumes):
    with pytest.raises(FileNotFoundError):
        volumes.read_volume(str(tmp_path / "missing.nii"))


# ─────────────────────── Manifiesto y configuración ───────────────────────

def test_manifest_roundtrip_resolves_relative_paths(tmp_path):
    repo = ManifestRepository()
    items = [DatasetItem("A_000", "A", "volumes/A_000.nii", "labels/A_000.nii", False, "train"),
             DatasetItem("sham_000", "sham", "volumes/sham_000.nii", "labels/sham_000.nii", True, "test")]
    path = str(tmp_path / "manifest.csv")
    repo.save(items, path)
    loaded = repo.load(path)
    assert [i.id for i in loaded] == ["A_000", "sham_000"]
    assert loaded[0].volume_path == os.path.join(str(tmp_path), "volumes/A_000.nii")
    assert loaded[1].sham and loaded[1].role == "test"


def test_manifest_rejects_missing_columns(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("id,group\nA_000,A\n")
    with pytest.raises(DataValidationError):
        ManifestRepository().load(str(path))


def test_match_ids_lists_unmatched(tmp_path):
    left = [DatasetItem("a", "A"), DatasetItem("b", "A")]
    right = [DatasetItem("b", "A"), DatasetItem("c", "A")]
    with pytest.raises(DataValidationError, match=r"\['a', 'c'\]"):
        ManifestRepository.match_ids(left, right)


def test_run_config_merges_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[network]\nfilter_rate = 0.5\n\n[train]\nepochs = 7\n")
    run = load_run_config(str(path), {"train": {"epochs": None, "seed": 9}, "network": {"seed": None}})
    assert run.network.filter_rate == 0.5
    assert run.train.epochs == 7
    assert run.train.seed == 9
    written = write_run_config(run, str(tmp_path / "out"))
    assert os.path.basename(written) == RUN_CONFIG_FILENAME


def test_run_config_rejects_invalid_values(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(None, {"network": {"filter_rate": 2.0}})
    with pytest.raises(ConfigurationError):
        load_run_config(str(tmp_path / "missing.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("[network\n")
    with pytest.raises(ConfigurationError):
        load_run_config(str(bad))
