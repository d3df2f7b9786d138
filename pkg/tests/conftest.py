import numpy as np
import pytest

from app import create_app
from app.extensions import shutdown_executor
from app.mapping.network_schema import NetworkConfig, TrainConfig
from app.mapping.phantom_schema import PhantomParams
from app.models.Volume import CONTRALATERAL, IPSILATERAL, LabelVolume

TINY_RATE = 0.125


@pytest.fixture(scope="session")
def app():
    app = create_app("testing")
    ctx = app.app_context()
    ctx.push()
    yield app
    ctx.pop()
    shutdown_executor()


@pytest.fixture(autouse=True)
def _app_context(app):
    """Todos los servicios leen current_app.logger."""
    yield


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def tiny_network():
    return NetworkConfig(filter_rate=TINY_RATE, seed=7)


@pytest.fixture
def train_config():
    return TrainConfig(epochs=2, learning_rate=1e-3, ensemble_size=1, seed=3)


@pytest.fixture
def small_phantom():
    return PhantomParams(extents=(16, 32, 32), seed=11)


def split_labels(shape=(4, 6, 8), midline=None, spacing=(1.0, 1.0, 1.0)) -> LabelVolume:
    """Caja llena de cerebro partida en w = midline: contralateral a la izquierda."""
    labels = np.full(shape, IPSILATERAL, dtype=np.uint8)
    midline = shape[2] // 2 if midline is None else midline
    labels[:, :, :midline] = CONTRALATERAL
    return LabelVolume(labels, spacing)
