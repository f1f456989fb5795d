import numpy as np
import pytest

from htrm.errors import UsageError
from htrm.fusion import FusionParams, multiscale_fuse
from htrm.tensor import Tensor, backward

from oracles import finite_difference, loop_conv_same, relative_error


def _zeroed_params():
    params = FusionParams.create(channels=5, rng=np.random.default_rng(0))
    for kernel in params.scale_kernels:
        kernel.data = np.zeros_like(kernel.data)
    params.reduce_kernels.data = np.zeros_like(params.reduce_kernels.data)
    params.reduce_biases.data = np.zeros_like(params.reduce_biases.data)
    return params


def _identity_kernel(k):
    kernel = np.zeros((k, k, k))
    kernel[(k // 2,) * 3] = 1.0
    return kernel


def _stacks(rng, frames=8):
    return [Tensor(rng.standard_normal((frames, frames, 5))) for _ in range(3)]


def test_all_zero_inputs_and_biases_give_zero():
    params = _zeroed_params()
    zero = Tensor(np.zeros((6, 6, 5)))
    out = multiscale_fuse(zero, zero, zero, params)
    assert out.shape == (6, 6, 15)
    assert np.all(out.data == 0.0)


def test_zero_reduction_is_pure_residual():
    rng = np.random.default_rng(1)
    params = FusionParams.create(channels=5, rng=rng)
    for kernel, k in zip(params.scale_kernels, (1, 3, 5)):
        kernel.data = _identity_kernel(k)
    params.reduce_kernels.data = np.zeros_like(params.reduce_kernels.data)
    params.reduce_biases.data = np.zeros_like(params.reduce_biases.data)
    m1, m2, m3 = _stacks(rng)
    out = multiscale_fuse(m1, m2, m3, params).data
    expected = np.concatenate([m1.data, m2.data, m3.data], axis=2)
    assert np.allclose(out, expected, atol=1e-12)


def test_matches_composed_loop_oracle():
    rng = np.random.default_rng(2)
    params = FusionParams.create(channels=5, rng=rng)
    m1, m2, m3 = _stacks(rng, frames=8)

    volumes = [np.transpose(m.data, (2, 0, 1)) for m in (m1, m2, m3)]
    mixed = []
    for vol, kernel, bias in zip(volumes, params.scale_kernels, params.scale_biases):
        conv = loop_conv_same(vol, kernel.data) + bias.data
        mixed.append(np.maximum(conv, 0.0))
    cat = np.concatenate(mixed, axis=0)
    reduced = np.zeros_like(cat)
    for g in range(5):
        group = cat[g::5]
        out = loop_conv_same(group, params.reduce_kernels.data[g]) + params.reduce_biases.data[g]
        reduced[g::5] = out
    expected = np.transpose(reduced + np.concatenate(volumes, axis=0), (1, 2, 0))

    out = multiscale_fuse(m1, m2, m3, params).data
    assert np.max(np.abs(out - expected)) < 1e-10


@pytest.mark.parametrize("frames", [4, 8, 16])
def test_output_shape(frames):
    rng = np.random.default_rng(3)
    params = FusionParams.create(channels=5, rng=rng)
    stacks = _stacks(rng, frames)
    assert multiscale_fuse(*stacks, params).shape == (frames, frames, 15)


def test_swapping_scales_changes_output():
    rng = np.random.default_rng(4)
    params = FusionParams.create(channels=5, rng=rng)
    m1, m2, m3 = _stacks(rng)
    base = multiscale_fuse(m1, m2, m3, params).data
    swapped = multiscale_fuse(m3, m2, m1, params).data
    assert not np.allclose(base, swapped)


def test_shape_mismatch_rejected():
    params = FusionParams.create(channels=5, rng=np.random.default_rng(5))
    with pytest.raises(UsageError):
        multiscale_fuse(
            Tensor(np.zeros((4, 4, 5))),
            Tensor(np.zeros((4, 4, 5))),
            Tensor(np.zeros((5, 5, 5))),
            params,
        )


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    params = FusionParams.create(channels=5, rng=rng)
    stacks = _stacks(rng, frames=6)
    weights = rng.standard_normal((6, 6, 15))
    tensors = [t for _, t in params.parameters()]

    def f():
        return (multiscale_fuse(*stacks, params) * weights).sum()

    grads = backward(f(), tensors)
    for pi, idx, numeric in finite_difference(lambda: f().item(), tensors, rng, 5):
        analytic = grads[pi].ravel()[idx]
        if abs(numeric) < 1e-10 and abs(analytic) < 1e-10:
            continue
        assert relative_error(analytic, numeric) < 1e-4
