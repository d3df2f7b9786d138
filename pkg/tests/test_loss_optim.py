import math

import numpy as np
import pytest

from app.engine import Tensor
from app.engine.gradcheck import gradcheck
from app.errors import DivergenceError, ExtentError, NonFiniteGradientError, ShapeError
from app.mapping.network_schema import TrainConfig
from app.models.Network import SegmentationOutput
from app.models.Volume import LabelVolume
from app.services.LossService import LossService
from app.services.NetworkService import NetworkService
from app.services.OptimizerService import AdamState, OptimizerService
from app.services.PhantomService import PhantomService
from app.services.TrainingService import TrainingService


@pytest.fixture
def loss():
    return LossService()


def _balanced_labels(n=2):
    """Las tres clases con el mismo número de vóxeles."""
    return np.repeat(np.arange(3, dtype=np.uint8), n * 4 * 4).reshape(3 * n, 4, 4)


def test_cross_entropy_of_perfect_prediction_is_zero(loss):
    target = loss.one_hot(_balanced_labels())
    assert loss.cross_entropy(target, target).item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_of_uniform_prediction(loss):
    target = loss.one_hot(_balanced_labels())
    uniform = Tensor(np.full(target.shape, 1.0 / 3.0))
    assert loss.cross_entropy(uniform, target).item() == pytest.approx(math.log(3.0) / 3.0, abs=1e-9)


def test_dice_loss_identities(loss):
    target = loss.one_hot(_balanced_labels())
    assert loss.dice_loss(target, target).item() == pytest.approx(0.0, abs=1e-5)
    uniform = Tensor(np.full(target.shape, 1.0 / 3.0))
    assert loss.dice_loss(uniform, target).item() == pytest.approx(0.5, abs=1e-5)


def test_cross_entropy_clamps_zero_probabilities(loss):
    target = loss.one_hot(_balanced_labels())
    wrong = loss.one_hot((_balanced_labels() + 1) % 3)
    value = loss.cross_entropy(wrong, target).item()
    assert math.isfinite(value)
    assert value == pytest.approx(-math.log(1e-7) / 3.0)


def test_loss_shape_mismatch(loss):
    with pytest.raises(ShapeError):
        loss.cross_entropy(Tensor(np.ones((1, 3, 2, 2, 2))), Tensor(np.ones((1, 3, 2, 2, 4))))


def test_downsample_labels_majority_with_ties_to_lower_class():
    labels = np.zeros((2, 2, 4), dtype=np.uint8)
    labels[:, :, :2] = 2
    labels[0, 0, 0] = 1
    labels[:, :, 2:] = [[[1, 2], [1, 2]], [[1, 2], [1, 2]]]
    target = LossService.downsample_labels(labels, 2)
    assert target.shape == (1, 3, 1, 1, 2)
    assert np.argmax(target.data[0], axis=0).tolist() == [[[2, 1]]]


def test_downsample_labels_requires_divisible_extents():
    with pytest.raises(ExtentError) as info:
        LossService.downsample_labels(np.zeros((8, 8, 6), dtype=np.uint8), 4)
    assert info.value.padding == (0, 0, 2)


def test_loss_terms_include_auxiliary_outputs(loss):
    labels = LabelVolume(np.random.default_rng(0).integers(0, 3, size=(16, 16, 16)))
    uniform = lambda s: Tensor(np.full((1, 3, s, s, s), 1.0 / 3.0))
    output = SegmentationOutput(uniform(16), [uniform(2), uniform(4)])
    terms = loss.loss_terms(output, labels)
    assert sorted(terms) == ["aux1_ce", "aux1_dice", "aux2_ce", "aux2_dice", "main_ce", "main_dice"]
    total = loss.deep_supervision_loss(output, labels).item()
    assert total == pytest.approx(math.fsum(t.item() for t in terms.values()))


def test_loss_rejects_misplaced_auxiliary_output(loss):
    labels = LabelVolume(np.zeros((16, 16, 16), dtype=np.uint8))
    output = SegmentationOutput(Tensor(np.full((1, 3, 16, 16, 16), 1 / 3)), [Tensor(np.full((1, 3, 4, 4, 4), 1 / 3))])
    with pytest.raises(ShapeError):
        loss.loss_terms(output, labels)


PARAMETER_FAMILIES = ("stem.", "enc0.", "enc1.", "enc2.", "enc3.", "aspp.", "dec1.", "dec2.", "dec3.", "head.")


def test_deep_supervision_loss_gradient(tiny_network):
    """Gradiente de la pérdida completa respecto de un tensor al azar de cada familia de parámetros."""
    network = NetworkService()
    model = network.build_model(tiny_network)
    rng = np.random.default_rng(4)
    volume = Tensor(rng.normal(size=(1, 1, 16, 16, 16)))
    labels = LabelVolume(rng.integers(0, 3, size=(16, 16, 16)))
    loss = LossService()

    names = sorted(model.parameters)
    picker = np.random.default_rng(17)
    chosen = [str(picker.choice([n for n in names if n.startswith(prefix)])) for prefix in PARAMETER_FAMILIES]
    norm_params = [n for n in names if n.endswith((".bn.gamma", ".bn.beta"))]
    chosen += [str(picker.choice(norm_params)), "dec1.attention.aux.weight"]
    assert len({n.split(".")[0] for n in chosen}) == len(PARAMETER_FAMILIES)

    def fn():
        return loss.deep_supervision_loss(network.forward(model, volume, training=True), labels)

    checked = [model.parameters[name] for name in dict.fromkeys(chosen)]
    assert gradcheck(fn, checked, fraction=0.1, seed=1, max_samples=4, floor=1e-6) <= 1e-3


def test_adam_first_step_moves_by_learning_rate():
    cfg = TrainConfig(learning_rate=0.01)
    params = {"w": Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, name="w")}
    grads = {"w": np.array([0.5, -4.0, 1e-3])}
    updated, state = OptimizerService(cfg).adam_step(params, grads, AdamState())
    expected = params["w"].data - 0.01 * grads["w"] / (np.abs(grads["w"]) + cfg.epsilon)
    np.testing.assert_allclose(updated["w"].data, expected, rtol=1e-12)
    assert state.t == 1
    assert updated["w"] is not params["w"]
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0, 3.0])


def test_adam_rejects_non_finite_gradient():
    params = {"w": Tensor(np.zeros(2), requires_grad=True)}
    state = AdamState()
    with pytest.raises(NonFiniteGradientError) as info:
        OptimizerService(TrainConfig()).adam_step(params, {"w": np.array([1.0, np.nan])}, state)
    assert info.value.parameter == "w"
    assert state.t == 0


def test_adam_rejects_gradient_shape_mismatch():
    params = {"w": Tensor(np.zeros(2), requires_grad=True)}
    with pytest.raises(ShapeError):
        OptimizerService(TrainConfig()).adam_step(params, {"w": np.zeros(3)}, AdamState())


@pytest.fixture
def phantom_pairs(small_phantom):
    cases = PhantomService().generate_many(small_phantom, 3)
    return [(c.volume, c.labels) for c in cases]


def test_training_records_history_and_is_reproducible(tiny_network, train_config, phantom_pairs):
    train_set, val_set = phantom_pairs[:2], phantom_pairs[2:]
    first, history = TrainingService(train_config).train(tiny_network, train_set, val_set)
    second, _ = TrainingService(train_config).train(tiny_network, train_set, val_set)

    assert [r.epoch for r in history] == [1, 2]
    assert all(math.isfinite(r.train_loss) and math.isfinite(r.val_loss) for r in history)
    assert {"main_ce", "main_dice", "aux1_ce", "aux2_dice"} <= set(history[0].terms)
    for name, tensor in first.parameters.items():
        np.testing.assert_array_equal(tensor.data, second.parameters[name].data)


def test_training_reduces_loss(tiny_network, phantom_pairs):
    cfg = TrainConfig(epochs=6, learning_rate=3e-3, model_selection="last")
    _, history = TrainingService(cfg).train(tiny_network, phantom_pairs[:1], [])
    assert history[-1].train_loss < history[0].train_loss
    assert all(math.isnan(r.val_loss) for r in history)


def test_best_val_restores_the_best_epoch(tiny_network, phantom_pairs):
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, model_selection="best_val")
    service = TrainingService(cfg)
    model, history = service.train(tiny_network, phantom_pairs[:2], phantom_pairs[2:])
    best = min(r.val_loss for r in history)
    restored = service.validation_loss(model, service._prepare(phantom_pairs[2:]))
    assert restored == pytest.approx(best, rel=1e-12)


def test_divergence_aborts_training(tiny_network, train_config, phantom_pairs, monkeypatch):
    service = TrainingService(train_config)
    monkeypatch.setattr(service.loss, "loss_terms", lambda output, labels: {"main_ce": Tensor([math.nan])})
    with pytest.raises(DivergenceError) as info:
        service.train(tiny_network, phantom_pairs[:1], [])
    assert info.value.epoch == 1


def test_ensemble_members_use_consecutive_seeds(tiny_network, phantom_pairs):
    cfg = TrainConfig(epochs=1, ensemble_size=2, learning_rate=1e-3)
    members = TrainingService(cfg).train_ensemble(tiny_network, phantom_pairs[:1], [])
    assert [m.config.seed for m, _ in members] == [tiny_network.seed, tiny_network.seed + 1]

    parallel = TrainingService(cfg.model_copy(update={"parallel_members": True}))
    for (a, _), (b, _) in zip(members, parallel.train_ensemble(tiny_network, phantom_pairs[:1], [])):
        np.testing.assert_array_equal(a.parameters["head.weight"].data, b.parameters["head.weight"].data)
