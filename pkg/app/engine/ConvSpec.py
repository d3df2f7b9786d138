"""
Descripción de una convolución 3D: canales, kernel, paso, dilatación, relleno y grupos.
"""

from dataclasses import dataclass

from app.errors import ShapeError

Triple = tuple[int, int, int]


def as_triple(value: int | Triple) -> Triple:
    if isinstance(value, int):
        return (value, value, value)
    values = tuple(int(v) for v in value)
    if len(values) != 3:
        raise ShapeError(f"Se esperaban 3 valores por eje, se recibieron {len(values)}.")
    return values


@dataclass(frozen=True)
class ConvSpec:
    """
    Hiperparámetros de una convolución 3D (correlación cruzada, relleno con ceros).

    groups == in_channels da el caso depthwise; groups == 1 el caso denso.
    """

    in_channels: int
    out_channels: int
    kernel: Triple = (3, 3, 3)
    stride: Triple = (1, 1, 1)
    dilation: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    groups: int = 1

    def __post_init__(self):
        for field in ("kernel", "stride", "dilation", "padding"):
            object.__setattr__(self, field, as_triple(getattr(self, field)))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError(f"Los canales deben ser positivos: in={self.in_channels}, out={self.out_channels}.")
        if any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ShapeError(f"El kernel debe ser impar en cada eje, se recibió {self.kernel}.")
        if any(s < 1 for s in self.stride) or any(d < 1 for d in self.dilation):
            raise ShapeError(f"Paso y dilatación deben ser >= 1 (stride={self.stride}, dilation={self.dilation}).")
        if any(p < 0 for p in self.padding):
            raise ShapeError(f"El relleno no puede ser negativo: {self.padding}.")
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"groups={self.groups} debe dividir in_channels={self.in_channels} y out_channels={self.out_channels}."
            )

    @classmethod
    def same(cls, in_channels: int, out_channels: int, kernel: int = 3, dilation: int = 1,
             stride: int = 1, groups: int = 1) -> "ConvSpec":
        """Convolución con relleno 'same' para kernels impares (con stride 1 conserva la extensión)."""
        return cls(in_channels, out_channels, kernel=kernel, stride=stride, dilation=dilation,
                   padding=dilation * (kernel - 1) // 2, groups=groups)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    @property
    def fan_in(self) -> int:
        k0, k1, k2 = self.kernel
        return (self.in_channels // self.groups) * k0 * k1 * k2

    def parameter_count(self, bias: bool = True) -> int:
        return self.out_channels * self.fan_in + (self.out_channels if bias else 0)

    def output_extent(self, extent: Triple) -> Triple:
        out = tuple(
            (n + 2 * p - d * (k - 1) - 1) // s + 1
            for n, p, d, k, s in zip(extent, self.padding, self.dilation, self.kernel, self.stride)
        )
        if any(o < 1 for o in out):
            raise ShapeError(f"La convolución produce una extensión no positiva {out} para la entrada {tuple(extent)}.")
        return out
