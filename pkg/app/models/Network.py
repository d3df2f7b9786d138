"""
Topología completa de la red y contenedor de sus parámetros.
"""

from dataclasses import dataclass, field

import numpy as np

from app.engine import ConvSpec, Tensor
from app.engine.functional import BatchNormState
from app.errors import ConfigurationError
from app.mapping.network_schema import NetworkConfig
from app.models.Layers import (
    ASPPModule, Conv3dLayer, ConvNormAct, DecoderStage, EncoderStage, Module, ParamSpec, PlainDecoderStage,
)

OUTPUT_STRIDE = 16
ENCODER_DILATIONS = (1, 1, 1, 2)


class NetworkPlan(Module):
    """
    Encoder de 4 etapas (salidas a 1/2, 1/4, 1/8, 1/16), ASPP sobre las
    características profundas y decoder de 3 etapas: x2 (skip 1/8, aux),
    x2 (skip 1/4, aux) y x4 en total (skip 1/2, upsample final).

    La variante "baseline" es DeepLabv3+: x4 hasta 1/4, skip 1/4, conv y x4
    hasta la resolución original, sin atención ni cabezas auxiliares.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__("net")
        self.config = config
        channels = config.encoder_stage_channels
        if min(channels) < 1:
            raise ConfigurationError(
                f"filter_rate={config.filter_rate} deja etapas sin canales: {channels}."
            )
        c0, c1, c2, c3 = channels
        k = config.num_classes
        aux = config.deep_supervision

        self.stem = ConvNormAct("stem", Conv3dLayer("stem.conv", ConvSpec.same(1, c0)), c0)
        widths = (c0,) + channels
        self.encoder = [
            EncoderStage(f"enc{s}", widths[s], widths[s + 1], ENCODER_DILATIONS[s]) for s in range(4)
        ]
        self.aspp = ASPPModule("aspp", c3, c2, c3, config.aspp_dilation_rates)
        if config.architecture == "baseline":
            self.decoder = [PlainDecoderStage("dec1", c3, c1, c1, factor=4, skip_index=1)]
            self.final_factor = 4
            self.head = Conv3dLayer("head", ConvSpec(c1, k, kernel=1))
        else:
            self.decoder = [
                DecoderStage("dec1", c3, c2, c2, factor=2, with_aux=aux, num_classes=k, skip_index=0),
                DecoderStage("dec2", c2, c1, c1, factor=2, with_aux=aux, num_classes=k, skip_index=1),
                DecoderStage("dec3", c1, c0, c0, factor=2, with_aux=False, num_classes=k, skip_index=2),
            ]
            self.final_factor = 2
            self.head = Conv3dLayer("head", ConvSpec(c0, k, kernel=1))

    def children(self):
        return [self.stem, *self.encoder, self.aspp, *self.decoder, self.head]


@dataclass
class Model:
    """Configuración + parámetros nombrados + estadísticas de batch-norm."""

    config: NetworkConfig
    plan: NetworkPlan
    parameters: dict[str, Tensor]
    states: dict[str, BatchNormState] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: NetworkConfig) -> "Model":
        """He (fan-in) para los pesos, ceros para sesgos y beta, unos para gamma."""
        plan = NetworkPlan(config)
        rng = np.random.default_rng(config.seed)
        parameters = {}
        for spec in plan.parameter_specs():
            parameters[spec.name] = Tensor(_init_array(spec, rng), requires_grad=True, name=spec.name)
        states = {name: BatchNormState.fresh(channels) for name, channels in plan.state_specs()}
        return cls(config, plan, parameters, states)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.parameters.items())

    def zero_grad(self):
        for tensor in self.parameters.values():
            tensor.zero_grad()

    def replace_parameters(self, arrays: dict[str, np.ndarray]):
        for name, array in arrays.items():
            self.parameters[name] = Tensor(array, requires_grad=True, name=name)

    def snapshot(self) -> dict:
        """Copia de parámetros y estadísticas, para retener el mejor epoch."""
        return {
            "parameters": {name: t.data.copy() for name, t in self.parameters.items()},
            "states": {
                name: (s.running_mean.copy(), s.running_var.copy(), s.tracked_batches)
                for name, s in self.states.items()
            },
        }

    def restore(self, snapshot: dict):
        self.replace_parameters(snapshot["parameters"])
        self.states = {
            name: BatchNormState(mean.copy(), var.copy(), tracked)
            for name, (mean, var, tracked) in snapshot["states"].items()
        }


def _init_array(spec: ParamSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.init == "he":
        return rng.normal(0.0, np.sqrt(2.0 / spec.fan_in), size=spec.shape)
    if spec.init == "ones":
        return np.ones(spec.shape)
    return np.zeros(spec.shape)


@dataclass
class SegmentationOutput:
    main_probs: Tensor
    aux_probs: list[Tensor] = field(default_factory=list)
    attention_maps: list[Tensor] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "main_shape": list(self.main_probs.shape),
            "aux_shapes": [list(t.shape) for t in self.aux_probs],
            "attention_shapes": [list(t.shape) for t in self.attention_maps],
        }
