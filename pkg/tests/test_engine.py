import numpy as np
import pytest
from scipy import ndimage

from app.engine import ConvSpec, Graph, Tensor, backward, no_grad
from app.engine import functional as F
from app.engine.gradcheck import gradcheck, relative_error
from app.errors import ShapeError

CASES = range(30)
TOLERANCE = 1e-3


def _leaf(rng, shape, low=None, high=None, away_from_zero=False):
    if low is not None:
        data = rng.uniform(low, high, size=shape)
    else:
        data = rng.normal(size=shape)
    if away_from_zero:
        data = data + 0.1 * np.sign(data)
    return Tensor(data, requires_grad=True)


def _shape(rng, channels=None):
    c = channels or int(rng.integers(1, 4))
    return (int(rng.integers(1, 3)), c, *(int(n) for n in rng.integers(2, 5, size=3)))


def case_conv3d(rng):
    c_in = int(rng.integers(1, 4))
    groups = c_in if rng.random() < 0.3 else 1
    c_out = groups * int(rng.integers(1, 3))
    kernel = int(rng.choice([1, 3]))
    spec = ConvSpec.same(c_in, c_out, kernel=kernel, dilation=int(rng.integers(1, 3)),
                         stride=int(rng.integers(1, 3)), groups=groups)
    x = _leaf(rng, (1, c_in, *(int(n) for n in rng.integers(3, 6, size=3))))
    w = _leaf(rng, spec.weight_shape)
    b = _leaf(rng, (c_out,)) if rng.random() < 0.5 else None
    tensors = [x, w] + ([b] if b is not None else [])
    weights = F.constant(rng.normal(size=(1, c_out, *spec.output_extent(x.shape[2:]))))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.conv3d(x, w, b, spec), weights))), tensors


def case_separable(rng):
    c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    stride, dilation = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    x = _leaf(rng, (1, c_in, 4, 4, 4))
    dw = _leaf(rng, (c_in, 1, 3, 3, 3))
    pw = _leaf(rng, (c_out, c_in, 1, 1, 1))
    dwb, pwb = _leaf(rng, (c_in,)), _leaf(rng, (c_out,))
    out_extent = ConvSpec.same(c_in, c_in, stride=stride, dilation=dilation, groups=c_in).output_extent((4, 4, 4))
    weights = F.constant(rng.normal(size=(1, c_out, *out_extent)))

    def fn():
        out = F.depthwise_separable_conv3d(x, dw, pw, dwb, pwb, stride=stride, dilation=dilation)
        return F.reduce_sum(F.elementwise_mul(out, weights))

    return fn, [x, dw, pw, dwb, pwb]


def case_batch_norm(rng):
    shape = _shape(rng)
    x = _leaf(rng, (2, *shape[1:]))
    gamma, beta = _leaf(rng, (shape[1],)), _leaf(rng, (shape[1],))
    training = bool(rng.random() < 0.5)
    state = F.BatchNormState(rng.normal(size=shape[1]), rng.uniform(0.5, 2.0, size=shape[1]))
    weights = F.constant(rng.normal(size=x.shape))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.batch_norm(x, gamma, beta, state, training), weights))), \
        [x, gamma, beta]


def _unary(op, **leaf_kwargs):
    def build(rng):
        x = _leaf(rng, _shape(rng), **leaf_kwargs)
        weights = F.constant(rng.normal(size=op(x).shape))
        return (lambda: F.reduce_sum(F.elementwise_mul(op(x), weights))), [x]
    return build


def _binary(op, **b_kwargs):
    def build(rng):
        shape = _shape(rng)
        a, b = _leaf(rng, shape), _leaf(rng, shape, **b_kwargs)
        weights = F.constant(rng.normal(size=shape))
        return (lambda: F.reduce_sum(F.elementwise_mul(op(a, b), weights))), [a, b]
    return build


def case_upsample(rng):
    factor = tuple(int(f) for f in rng.integers(1, 4, size=3))
    x = _leaf(rng, _shape(rng))
    weights = F.constant(rng.normal(size=F.trilinear_upsample(x, factor).shape))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.trilinear_upsample(x, factor), weights))), [x]


def case_expand(rng):
    shape = _shape(rng, channels=1)
    channels = int(rng.integers(1, 5))
    x = _leaf(rng, shape)
    weights = F.constant(rng.normal(size=(shape[0], channels, *shape[2:])))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.expand_channels(x, channels), weights))), [x]


def case_concat(rng):
    base = _shape(rng)
    parts = [_leaf(rng, (base[0], int(rng.integers(1, 4)), *base[2:])) for _ in range(int(rng.integers(2, 4)))]
    total = sum(p.shape[1] for p in parts)
    weights = F.constant(rng.normal(size=(base[0], total, *base[2:])))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.concat_channels(parts), weights))), parts


def case_reduce_sum(rng):
    x = _leaf(rng, _shape(rng))
    axes = (1, 2) if rng.random() < 0.5 else (0, 3, 4)
    weights = F.constant(rng.normal(size=F.reduce_sum(x, axes).shape))
    return (lambda: F.reduce_sum(F.elementwise_mul(F.reduce_sum(x, axes), weights))), [x]


PRIMITIVES = {
    "conv3d": case_conv3d,
    "depthwise_separable_conv3d": case_separable,
    "batch_norm": case_batch_norm,
    "relu": _unary(F.relu, away_from_zero=True),
    "sigmoid": _unary(F.sigmoid),
    "softmax_channel": _unary(F.softmax_channel),
    "trilinear_upsample": case_upsample,
    "global_avg_pool": _unary(F.global_avg_pool),
    "channel_mean": _unary(F.channel_mean),
    "expand_channels": case_expand,
    "concat_channels": case_concat,
    "add": _binary(F.elementwise_add),
    "sub": _binary(F.elementwise_sub),
    "mul": _binary(F.elementwise_mul),
    "div": _binary(F.elementwise_div, low=0.5, high=2.0),
    "square": _unary(F.square),
    "log": _unary(F.log, low=0.2, high=3.0),
    "clamp_min": _unary(lambda x: F.clamp_min(F.add_scalar(x, 0.05), 0.05), away_from_zero=True),
    "scale": _unary(lambda x: F.scale(x, -1.7)),
    "add_scalar": _unary(lambda x: F.add_scalar(x, 0.3)),
    "reduce_sum": case_reduce_sum,
}


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("primitive", sorted(PRIMITIVES))
def test_gradient_matches_central_differences(primitive, case):
    rng = np.random.default_rng(1000 * sorted(PRIMITIVES).index(primitive) + case)
    fn, tensors = PRIMITIVES[primitive](rng)
    assert gradcheck(fn, tensors) <= TOLERANCE


def test_conv3d_matches_scipy_correlation():
    rng = np.random.default_rng(0)
    volume = rng.normal(size=(5, 6, 7))
    kernel = rng.normal(size=(3, 3, 3))
    out = F.conv3d(Tensor(volume[None, None]), Tensor(kernel[None, None]), None, ConvSpec.same(1, 1))
    expected = ndimage.correlate(volume, kernel, mode="constant", cval=0.0)
    np.testing.assert_allclose(out.data[0, 0], expected, rtol=1e-12, atol=1e-12)


def test_strided_conv_halves_extent():
    spec = ConvSpec.same(2, 4, stride=2)
    x = Tensor(np.ones((1, 2, 8, 8, 8)))
    w = Tensor(np.ones(spec.weight_shape))
    assert F.conv3d(x, w, None, spec).shape == (1, 4, 4, 4, 4)


def test_conv3d_rejects_wrong_channels():
    spec = ConvSpec.same(3, 2)
    with pytest.raises(ShapeError):
        F.conv3d(Tensor(np.zeros((1, 2, 4, 4, 4))), Tensor(np.zeros(spec.weight_shape)), None, spec)


def test_conv_spec_validation():
    with pytest.raises(ShapeError):
        ConvSpec(4, 4, kernel=2)
    with pytest.raises(ShapeError):
        ConvSpec(4, 6, groups=4)
    assert ConvSpec(4, 8, kernel=3).parameter_count(bias=True) == 8 * 4 * 27 + 8
    assert ConvSpec(4, 4, groups=4).parameter_count(bias=False) == 4 * 27


def test_upsample_preserves_constants_and_mass_of_gradient():
    x = Tensor(np.full((1, 2, 3, 3, 3), 2.5), requires_grad=True)
    out = F.trilinear_upsample(x, 2)
    assert out.shape == (1, 2, 6, 6, 6)
    np.testing.assert_allclose(out.data, 2.5)
    backward(F.reduce_sum(out))
    # cada fila de la matriz de interpolación suma 1
    assert x.grad.sum() == pytest.approx(out.size)


def test_batch_norm_updates_running_statistics_only_in_training():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(3.0, 2.0, size=(2, 3, 4, 4, 4)))
    gamma, beta = Tensor(np.ones(3)), Tensor(np.zeros(3))
    state = F.BatchNormState.fresh(3)
    out = F.batch_norm(x, gamma, beta, state, training=True, momentum=0.5)
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3, 4)), 0.0, atol=1e-12)
    assert state.tracked_batches == 1
    np.testing.assert_allclose(state.running_mean, 0.5 * x.data.mean(axis=(0, 2, 3, 4)))

    frozen = (state.running_mean.copy(), state.running_var.copy())
    F.batch_norm(x, gamma, beta, state, training=False)
    np.testing.assert_array_equal(state.running_mean, frozen[0])
    assert state.tracked_batches == 1


def test_softmax_sums_to_one():
    rng = np.random.default_rng(2)
    out = F.softmax_channel(Tensor(rng.normal(size=(1, 3, 2, 2, 2)) * 50))
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0)


def test_no_grad_skips_graph_recording():
    x = Tensor(np.ones((1, 1, 2, 2, 2)), requires_grad=True)
    with no_grad():
        y = F.relu(x)
    assert y.op is None and not y.requires_grad
    z = F.relu(x)
    assert z.op is not None and z.requires_grad


def test_graph_accumulates_shared_inputs_once_per_use():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    loss = F.reduce_sum(F.elementwise_add(F.square(x), F.scale(x, 3.0)))
    graph = Graph.trace(loss)
    assert [op.name for op in graph.operations][-1] == "reduce_sum"
    graph.backward(loss)
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 3.0)


def test_backward_gives_zero_gradient_to_unused_parameters():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    backward(F.reduce_sum(x), parameters=[x, unused])
    np.testing.assert_array_equal(unused.grad, np.zeros(2))


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(F.scale(x, 2.0))


def test_tensor_data_is_read_only():
    t = Tensor(np.zeros(4))
    with pytest.raises(ValueError):
        t.data[0] = 1.0


def test_relative_error_of_identical_gradients_is_zero():
    g = np.array([1.0, 2.0])
    assert relative_error(g, g) == 0.0
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
