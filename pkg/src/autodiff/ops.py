"""Registered ops and their vector-Jacobian products."""

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from src.autodiff.tensor import Function, Tensor, register
from src.constants import INSTANCE_NORM_EPS
from src.models.grid import SphericalGrid
from src.models.legendre import LegendreTable
from src.models.spectral import SpectralCoeffs
from src.services import sht_service


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums `grad` over the axes that broadcasting added or stretched to reach its shape."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _shape(value) -> Tuple[int, ...]:
    return np.shape(value)


@register("add")
class Add(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a_shape=_shape(a), b_shape=_shape(b))
        return a + b

    @staticmethod
    def backward(ctx, grad):
        return unbroadcast(grad, ctx.a_shape), unbroadcast(grad, ctx.b_shape)


@register("sub")
class Sub(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a_shape=_shape(a), b_shape=_shape(b))
        return a - b

    @staticmethod
    def backward(ctx, grad):
        return unbroadcast(grad, ctx.a_shape), -unbroadcast(grad, ctx.b_shape)


@register("neg")
class Neg(Function):
    @staticmethod
    def forward(ctx, a):
        return -a

    @staticmethod
    def backward(ctx, grad):
        return (-grad,)


@register("mul")
class Mul(Function):
    """Elementwise product, complex-aware: ∂(a·b) routes conj(b)·g to a."""

    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a=a, b=b)
        return a * b

    @staticmethod
    def backward(ctx, grad):
        return (
            unbroadcast(grad * np.conj(ctx.b), _shape(ctx.a)),
            unbroadcast(grad * np.conj(ctx.a), _shape(ctx.b)),
        )


@register("div")
class Div(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a=a, b=b)
        return a / b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx.a, ctx.b
        return (
            unbroadcast(grad / np.conj(b), _shape(a)),
            unbroadcast(-grad * np.conj(a / (b * b)), _shape(b)),
        )


@register("pow")
class Power(Function):
    @staticmethod
    def forward(ctx, a, exponent: float):
        ctx.save(a=a, exponent=exponent)
        return a ** exponent

    @staticmethod
    def backward(ctx, grad):
        return grad * ctx.exponent * ctx.a ** (ctx.exponent - 1), None


@register("abs")
class Abs(Function):
    """|a| with subgradient 0 at 0."""

    @staticmethod
    def forward(ctx, a):
        ctx.save(a=a)
        return np.abs(a)

    @staticmethod
    def backward(ctx, grad):
        a = ctx.a
        if np.iscomplexobj(a):
            magnitude = np.abs(a)
            unit = np.divide(a, magnitude, out=np.zeros_like(a), where=magnitude > 0)
            return (grad * unit,)
        return (grad * np.sign(a),)


@register("sum")
class Sum(Function):
    @staticmethod
    def forward(ctx, a, axis=None, keepdims: bool = False):
        ctx.save(shape=a.shape, axis=axis, keepdims=keepdims)
        return np.sum(a, axis=axis, keepdims=keepdims)

    @staticmethod
    def backward(ctx, grad):
        grad = np.asarray(grad)
        if ctx.axis is not None and not ctx.keepdims:
            grad = np.expand_dims(grad, ctx.axis)
        return (np.broadcast_to(grad, ctx.shape).copy(),)


@register("reshape")
class Reshape(Function):
    @staticmethod
    def forward(ctx, a, shape):
        ctx.save(shape=a.shape)
        return np.reshape(a, shape)

    @staticmethod
    def backward(ctx, grad):
        return np.reshape(grad, ctx.shape), None


@register("matmul")
class MatMul(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a=a, b=b)
        return a @ b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx.a, ctx.b
        grad_a = grad @ np.swapaxes(np.conj(b), -1, -2)
        grad_b = np.swapaxes(np.conj(a), -1, -2) @ grad
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


def _split_subscripts(subscripts: str) -> Tuple[str, str, str]:
    inputs, output = subscripts.replace(" ", "").split("->")
    first, second = inputs.split(",")
    return first, second, output


@register("einsum")
class Einsum(Function):
    """Two-operand contraction; every index of an operand must appear in the other operand or the output."""

    @staticmethod
    def forward(ctx, a, b, subscripts: str):
        ctx.save(a=a, b=b, subscripts=subscripts)
        return np.einsum(subscripts, a, b)

    @staticmethod
    def backward(ctx, grad):
        first, second, output = _split_subscripts(ctx.subscripts)
        grad_a = np.einsum(f"{output},{second}->{first}", grad, np.conj(ctx.b))
        grad_b = np.einsum(f"{output},{first}->{second}", grad, np.conj(ctx.a))
        return grad_a, grad_b


@register("real")
class Real(Function):
    @staticmethod
    def forward(ctx, a):
        return np.real(a).copy()

    @staticmethod
    def backward(ctx, grad):
        return (np.asarray(grad, dtype=np.complex128),)


@register("imag")
class Imag(Function):
    @staticmethod
    def forward(ctx, a):
        return np.imag(a).copy()

    @staticmethod
    def backward(ctx, grad):
        return (1j * grad,)


@register("complex_join")
class ComplexJoin(Function):
    """(..., 2) real pairs → complex (...)."""

    @staticmethod
    def forward(ctx, pair):
        return pair[..., 0] + 1j * pair[..., 1]

    @staticmethod
    def backward(ctx, grad):
        return (np.stack([np.real(grad), np.imag(grad)], axis=-1),)


@register("gelu")
class Gelu(Function):
    """x·Φ(x) with the exact error-function Φ."""

    @staticmethod
    def forward(ctx, a):
        cdf = 0.5 * (1.0 + erf(a / np.sqrt(2.0)))
        ctx.save(a=a, cdf=cdf)
        return a * cdf

    @staticmethod
    def backward(ctx, grad):
        pdf = np.exp(-0.5 * ctx.a * ctx.a) / np.sqrt(2.0 * np.pi)
        return (grad * (ctx.cdf + ctx.a * pdf),)


@register("crelu")
class ComplexReLU(Function):
    """x + iy → ReLU(x) + iy."""

    @staticmethod
    def forward(ctx, a):
        mask = np.real(a) > 0
        ctx.save(mask=mask)
        return np.where(mask, np.real(a), 0.0) + 1j * np.imag(a)

    @staticmethod
    def backward(ctx, grad):
        return (np.real(grad) * ctx.mask + 1j * np.imag(grad),)


@register("instance_norm")
class InstanceNorm(Function):
    """Per-channel normalization over the last two axes with area weights summing to one."""

    @staticmethod
    def forward(ctx, a, weights, eps: float = INSTANCE_NORM_EPS):
        mean = np.sum(a * weights, axis=(-2, -1), keepdims=True)
        centered = a - mean
        variance = np.sum(centered * centered * weights, axis=(-2, -1), keepdims=True)
        inv_std = 1.0 / np.sqrt(variance + eps)
        normalized = centered * inv_std
        ctx.save(weights=weights, inv_std=inv_std, normalized=normalized)
        return normalized

    @staticmethod
    def backward(ctx, grad):
        w, x_hat = ctx.weights, ctx.normalized
        total = np.sum(grad, axis=(-2, -1), keepdims=True)
        projected = np.sum(grad * x_hat, axis=(-2, -1), keepdims=True)
        return ctx.inv_std * (grad - w * total - w * x_hat * projected), None


@register("sht_forward")
class SHTForward(Function):
    @staticmethod
    def forward(ctx, field, table: LegendreTable):
        ctx.save(table=table)
        return sht_service.sht_forward(field, table).data

    @staticmethod
    def backward(ctx, grad):
        table = ctx.table
        return sht_service.sht_forward_adjoint(SpectralCoeffs(table.lmax, table.mmax, grad), table), None


@register("sht_inverse")
class SHTInverse(Function):
    @staticmethod
    def forward(ctx, coeffs, table: LegendreTable, out_grid: Optional[SphericalGrid] = None):
        lmax, mmax = coeffs.shape[-2] - 1, coeffs.shape[-1] - 1
        used = sht_service.inverse_table_for(lmax, mmax, table, out_grid)
        ctx.save(used=used, lmax=lmax, mmax=mmax)
        return sht_service.sht_inverse(SpectralCoeffs(lmax, mmax, coeffs), used)

    @staticmethod
    def backward(ctx, grad):
        adjoint = sht_service.sht_inverse_adjoint(grad, ctx.used)
        return adjoint.resized(ctx.lmax, ctx.mmax).data, None, None


@register("rfft_lon")
class RFFTLon(Function):
    @staticmethod
    def forward(ctx, field, mmax: int):
        ctx.save(nlon=field.shape[-1])
        return sht_service.rfft_lon(field, mmax)

    @staticmethod
    def backward(ctx, grad):
        return sht_service.rfft_lon_adjoint(grad, ctx.nlon), None


@register("irfft_lon")
class IRFFTLon(Function):
    @staticmethod
    def forward(ctx, spectrum, nlon: int):
        ctx.save(mmax=spectrum.shape[-1] - 1)
        return sht_service.irfft_lon(spectrum, nlon)

    @staticmethod
    def backward(ctx, grad):
        return sht_service.irfft_lon_adjoint(grad, ctx.mmax), None


@register("fft_lat")
class FFTLat(Function):
    """Unnormalized complex DFT along the ring axis (-2)."""

    @staticmethod
    def forward(ctx, a):
        ctx.save(n=a.shape[-2])
        return np.fft.fft(a, axis=-2)

    @staticmethod
    def backward(ctx, grad):
        return (np.fft.ifft(grad, axis=-2) * ctx.n,)


@register("ifft_lat")
class IFFTLat(Function):
    @staticmethod
    def forward(ctx, a):
        ctx.save(n=a.shape[-2])
        return np.fft.ifft(a, axis=-2)

    @staticmethod
    def backward(ctx, grad):
        return (np.fft.fft(grad, axis=-2) / ctx.n,)


@register("take")
class Take(Function):
    """Selects distinct `indices` along `axis`."""

    @staticmethod
    def forward(ctx, a, indices: Sequence[int], axis: int):
        ctx.save(shape=a.shape, indices=np.asarray(indices), axis=axis)
        return np.take(a, indices, axis=axis)

    @staticmethod
    def backward(ctx, grad):
        out = np.zeros(ctx.shape, dtype=grad.dtype)
        index = [slice(None)] * len(ctx.shape)
        index[ctx.axis] = ctx.indices
        out[tuple(index)] = grad
        return out, None, None


@register("embed")
class Embed(Function):
    """Places `a` at distinct `indices` of a zero array of length `size` along `axis`."""

    @staticmethod
    def forward(ctx, a, indices: Sequence[int], size: int, axis: int):
        shape = list(a.shape)
        shape[axis] = size
        out = np.zeros(shape, dtype=a.dtype)
        index = [slice(None)] * a.ndim
        index[axis] = np.asarray(indices)
        out[tuple(index)] = a
        ctx.save(indices=np.asarray(indices), axis=axis)
        return out

    @staticmethod
    def backward(ctx, grad):
        return np.take(grad, ctx.indices, axis=ctx.axis), None, None, None


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def neg(a) -> Tensor:
    return Neg.apply(a)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def scale(a, factor) -> Tensor:
    return Mul.apply(a, factor)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def power(a, exponent: float) -> Tensor:
    return Power.apply(a, exponent)


def absolute(a) -> Tensor:
    return Abs.apply(a)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def reshape(a, shape) -> Tensor:
    return Reshape.apply(a, tuple(shape))


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def einsum(subscripts: str, a, b) -> Tensor:
    return Einsum.apply(a, b, subscripts=subscripts)


def real(a) -> Tensor:
    return Real.apply(a)


def imag(a) -> Tensor:
    return Imag.apply(a)


def complex_join(pair) -> Tensor:
    return ComplexJoin.apply(pair)


def gelu(a) -> Tensor:
    return Gelu.apply(a)


def crelu(a) -> Tensor:
    return ComplexReLU.apply(a)


def instance_norm(a, weights: np.ndarray, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    return InstanceNorm.apply(a, weights, eps=eps)


def sht_forward(field, table: LegendreTable) -> Tensor:
    return SHTForward.apply(field, table)


def sht_inverse(coeffs, table: LegendreTable, out_grid: Optional[SphericalGrid] = None) -> Tensor:
    return SHTInverse.apply(coeffs, table, out_grid)


def rfft_lon(field, mmax: int) -> Tensor:
    return RFFTLon.apply(field, mmax)


def irfft_lon(spectrum, nlon: int) -> Tensor:
    return IRFFTLon.apply(spectrum, nlon)


def fft_lat(a) -> Tensor:
    return FFTLat.apply(a)


def ifft_lat(a) -> Tensor:
    return IFFTLat.apply(a)


def take(a, indices: Sequence[int], axis: int) -> Tensor:
    return Take.apply(a, indices, axis)


def embed(a, indices: Sequence[int], size: int, axis: int) -> Tensor:
    return Embed.apply(a, indices, size, axis)
