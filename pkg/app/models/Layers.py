"""
Capas y bloques de la red. Cada módulo declara sus parámetros (nombre, forma,
inicialización) y su estado de batch-norm; los valores viven en el `Model`, lo
que permite contar parámetros sin reservar memoria.
"""

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from app.engine import ConvSpec, Tensor
from app.engine import functional as F


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    init: str
    fan_in: int = 1

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class Module:
    """Base de capas y bloques: nombre jerárquico, hijos y parámetros propios."""

    def __init__(self, name: str):
        self.name = name

    def children(self) -> list["Module"]:
        return []

    def own_parameters(self) -> list[ParamSpec]:
        return []

    def own_states(self) -> dict[str, int]:
        return {}

    def parameter_specs(self) -> Iterator[ParamSpec]:
        yield from self.own_parameters()
        for child in self.children():
            yield from child.parameter_specs()

    def state_specs(self) -> Iterator[tuple[str, int]]:
        yield from self.own_states().items()
        for child in self.children():
            yield from child.state_specs()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameter_specs())


class Conv3dLayer(Module):
    def __init__(self, name: str, spec: ConvSpec, bias: bool = True):
        super().__init__(name)
        self.spec = spec
        self.bias = bias

    def own_parameters(self):
        params = [ParamSpec(f"{self.name}.weight", self.spec.weight_shape, "he", self.spec.fan_in)]
        if self.bias:
            params.append(ParamSpec(f"{self.name}.bias", (self.spec.out_channels,), "zeros"))
        return params

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        bias = model.parameters[f"{self.name}.bias"] if self.bias else None
        return F.conv3d(x, model.parameters[f"{self.name}.weight"], bias, self.spec)


class SeparableConv3dLayer(Module):
    """Convolución depthwise 3x3x3 + pointwise 1x1x1."""

    def __init__(self, name: str, in_channels: int, out_channels: int, dilation: int = 1, stride: int = 1):
        super().__init__(name)
        self.depthwise = Conv3dLayer(
            f"{name}.dw",
            ConvSpec.same(in_channels, in_channels, dilation=dilation, stride=stride, groups=in_channels),
        )
        self.pointwise = Conv3dLayer(f"{name}.pw", ConvSpec(in_channels, out_channels, kernel=1))
        self.dilation = dilation
        self.stride = stride

    def children(self):
        return [self.depthwise, self.pointwise]

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        p = model.parameters
        return F.depthwise_separable_conv3d(
            x, p[f"{self.name}.dw.weight"], p[f"{self.name}.pw.weight"],
            p[f"{self.name}.dw.bias"], p[f"{self.name}.pw.bias"],
            stride=self.stride, dilation=self.dilation,
        )


class BatchNorm3dLayer(Module):
    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.channels = channels

    def own_parameters(self):
        return [
            ParamSpec(f"{self.name}.gamma", (self.channels,), "ones"),
            ParamSpec(f"{self.name}.beta", (self.channels,), "zeros"),
        ]

    def own_states(self):
        return {self.name: self.channels}

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        p = model.parameters
        return F.batch_norm(
            x, p[f"{self.name}.gamma"], p[f"{self.name}.beta"], model.states[self.name], training,
            momentum=model.config.bn_momentum, epsilon=model.config.bn_epsilon,
        )


class ConvNormAct(Module):
    """conv -> batch-norm -> relu (relu opcional)."""

    def __init__(self, name: str, conv: Module, channels: int, act: bool = True):
        super().__init__(name)
        self.conv = conv
        self.norm = BatchNorm3dLayer(f"{name}.bn", channels)
        self.act = act

    def children(self):
        return [self.conv, self.norm]

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        out = self.norm.forward(model, self.conv.forward(model, x, training), training)
        return F.relu(out) if self.act else out


class EncoderStage(Module):
    """
    Bloque residual estilo Xception: dos convoluciones separables con BN, suma
    residual (proyección 1x1x1 si cambia el ancho) y reducción con paso 2.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int, dilation: int = 1):
        super().__init__(name)
        self.sep1 = ConvNormAct(f"{name}.sep1", SeparableConv3dLayer(f"{name}.sep1", in_channels, out_channels, dilation),
                                out_channels)
        self.sep2 = ConvNormAct(f"{name}.sep2", SeparableConv3dLayer(f"{name}.sep2", out_channels, out_channels, dilation),
                                out_channels, act=False)
        self.projection = None
        if in_channels != out_channels:
            self.projection = Conv3dLayer(f"{name}.proj", ConvSpec(in_channels, out_channels, kernel=1), bias=False)
        self.down = ConvNormAct(f"{name}.down", SeparableConv3dLayer(f"{name}.down", out_channels, out_channels, stride=2),
                                out_channels)

    def children(self):
        modules = [self.sep1, self.sep2]
        if self.projection is not None:
            modules.append(self.projection)
        return modules + [self.down]

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        h = self.sep2.forward(model, self.sep1.forward(model, x, training), training)
        shortcut = x if self.projection is None else self.projection.forward(model, x, training)
        y = F.relu(F.elementwise_add(h, shortcut))
        return self.down.forward(model, y, training)


class ASPPModule(Module):
    """Ramas paralelas (1x1x1, 3x3x3 dilatadas, pooling global) concatenadas y fusionadas."""

    def __init__(self, name: str, in_channels: int, branch_channels: int, out_channels: int, rates):
        super().__init__(name)
        self.pointwise = ConvNormAct(f"{name}.b0",
                                     Conv3dLayer(f"{name}.b0.conv", ConvSpec(in_channels, branch_channels, kernel=1)),
                                     branch_channels)
        self.dilated = [
            ConvNormAct(f"{name}.b{i + 1}",
                        Conv3dLayer(f"{name}.b{i + 1}.conv", ConvSpec.same(in_channels, branch_channels, dilation=r)),
                        branch_channels)
            for i, r in enumerate(rates)
        ]
        # un único vóxel por canal: la rama de pooling no lleva batch-norm
        self.pool = Conv3dLayer(f"{name}.pool.conv", ConvSpec(in_channels, branch_channels, kernel=1))
        self.project = ConvNormAct(f"{name}.project",
                                   Conv3dLayer(f"{name}.project.conv",
                                               ConvSpec(branch_channels * (len(rates) + 2), out_channels, kernel=1)),
                                   out_channels)

    @property
    def branch_count(self) -> int:
        return len(self.dilated) + 2

    def children(self):
        return [self.pointwise, *self.dilated, self.pool, self.project]

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        branches = [self.pointwise.forward(model, x, training)]
        branches += [branch.forward(model, x, training) for branch in self.dilated]
        pooled = F.relu(self.pool.forward(model, F.global_avg_pool(x), training))
        branches.append(F.trilinear_upsample(pooled, x.shape[2:]))
        return self.project.forward(model, F.concat_channels(branches), training)


class ResNetBlock(Module):
    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.conv1 = ConvNormAct(f"{name}.conv1", Conv3dLayer(f"{name}.conv1.conv", ConvSpec.same(channels, channels)),
                                 channels)
        self.conv2 = ConvNormAct(f"{name}.conv2", Conv3dLayer(f"{name}.conv2.conv", ConvSpec.same(channels, channels)),
                                 channels, act=False)

    def children(self):
        return [self.conv1, self.conv2]

    def forward(self, model, x: Tensor, training: bool) -> Tensor:
        h = self.conv2.forward(model, self.conv1.forward(model, x, training), training)
        return F.relu(F.elementwise_add(h, x))


class AttentionBlock(Module):
    """
    Atención espacial: convolución separable, promedio sobre canales, sigmoide y
    producto vóxel a vóxel con la entrada. Con `with_aux` una convolución 1x1x1
    sobre la rama previa a la sigmoide emite logits de segmentación.
    """

    def __init__(self, name: str, channels: int, with_aux: bool, num_classes: int):
        super().__init__(name)
        self.conv = SeparableConv3dLayer(f"{name}.conv", channels, channels)
        self.aux = None
        if with_aux:
            self.aux = Conv3dLayer(f"{name}.aux", ConvSpec(channels, num_classes, kernel=1))

    def children(self):
        return [self.conv] + ([self.aux] if self.aux is not None else [])

    def forward(self, model, x: Tensor, training: bool):
        transformed = self.conv.forward(model, x, training)
        attention_map = F.sigmoid(F.channel_mean(transformed))
        attended = F.elementwise_mul(x, F.expand_channels(attention_map, x.shape[1]))
        aux_logits = self.aux.forward(model, transformed, training) if self.aux is not None else None
        return attended, attention_map, aux_logits


class DecoderStage(Module):
    """Upsample trilineal + skip + conv 3x3x3 que reduce canales + ResNet + atención."""

    def __init__(self, name: str, in_channels: int, skip_channels: int, out_channels: int,
                 factor: int, with_aux: bool, num_classes: int, skip_index: int):
        super().__init__(name)
        self.factor = factor
        self.skip_index = skip_index
        self.reduce = ConvNormAct(f"{name}.reduce",
                                  Conv3dLayer(f"{name}.reduce.conv",
                                              ConvSpec.same(in_channels + skip_channels, out_channels)),
                                  out_channels)
        self.resnet = ResNetBlock(f"{name}.resnet", out_channels)
        self.attention = AttentionBlock(f"{name}.attention", out_channels, with_aux, num_classes)

    def children(self):
        return [self.reduce, self.resnet, self.attention]

    def forward(self, model, x: Tensor, skip: Tensor, training: bool):
        up = F.trilinear_upsample(x, self.factor)
        h = self.reduce.forward(model, F.concat_channels([up, skip]), training)
        h = self.resnet.forward(model, h, training)
        return self.attention.forward(model, h, training)


class PlainDecoderStage(Module):
    """Decoder de DeepLabv3+: upsample, concatenación del skip y conv 3x3x3; sin atención."""

    attention = None

    def __init__(self, name: str, in_channels: int, skip_channels: int, out_channels: int,
                 factor: int, skip_index: int):
        super().__init__(name)
        self.factor = factor
        self.skip_index = skip_index
        self.reduce = ConvNormAct(f"{name}.reduce",
                                  Conv3dLayer(f"{name}.reduce.conv",
                                              ConvSpec.same(in_channels + skip_channels, out_channels)),
                                  out_channels)

    def children(self):
        return [self.reduce]

    def forward(self, model, x: Tensor, skip: Tensor, training: bool):
        up = F.trilinear_upsample(x, self.factor)
        return self.reduce.forward(model, F.concat_channels([up, skip]), training), None, None
