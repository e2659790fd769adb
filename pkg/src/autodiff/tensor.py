"""Define-by-run reverse-mode differentiation.

Every op is a registered `Function`; calling it while a `Tape` is active and
some input requires a gradient appends a node to that tape. `Tape.backward`
walks the nodes in reverse recording order, which is a reverse topological
order by construction, and sums the contributions each tensor receives.

Complex tensors follow the real parameterization: the gradient of a complex
tensor z is ∂L/∂Re(z) + i·∂L/∂Im(z).
"""

import threading
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Type

import numpy as np

from src.exceptions import NonScalarLossError, TapeConsumedError, UnregisteredOpError
from src.utils.logging import get_logger

logger = get_logger(__name__)

_state = threading.local()

_REGISTRY: Dict[str, Type["Function"]] = {}


def register(op_name: str):
    def decorator(cls):
        cls.op_name = op_name
        _REGISTRY[op_name] = cls
        return cls
    return decorator


def registered_ops() -> List[str]:
    return sorted(_REGISTRY)


def _tape_stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
        _state.grad_disabled = 0
    return _state.tapes


def current_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    if not stack or _state.grad_disabled:
        return None
    return stack[-1]


@contextmanager
def no_grad():
    _tape_stack()
    _state.grad_disabled += 1
    try:
        yield
    finally:
        _state.grad_disabled -= 1


class Tensor:
    """Dense real or complex array with a gradient-tracking handle."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data)
        if not np.iscomplexobj(self.data) and self.data.dtype != np.float64:
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    # Arithmetic dispatches to registered ops (imported lazily to avoid a cycle)
    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from src.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from src.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from src.autodiff import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from src.autodiff import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from src.autodiff import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from src.autodiff import ops
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        from src.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    @property
    def real(self) -> "Tensor":
        from src.autodiff import ops
        return ops.real(self)

    @property
    def imag(self) -> "Tensor":
        from src.autodiff import ops
        return ops.imag(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Context:
    def __init__(self):
        self.saved: Dict[str, Any] = {}

    def save(self, **kwargs):
        self.saved.update(kwargs)

    def __getattr__(self, key):
        try:
            return self.__dict__["saved"][key]
        except KeyError:
            raise AttributeError(key)


class Node:
    __slots__ = ("op_name", "backward", "inputs", "output")

    def __init__(self, op_name: str, backward: Callable, inputs: Sequence[Any], output: Tensor):
        self.op_name = op_name
        self.backward = backward
        self.inputs = list(inputs)
        self.output = output


class Function:
    op_name: Optional[str] = None

    @staticmethod
    def forward(ctx: Context, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad_output: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply(cls, *args, **kwargs) -> Tensor:
        if cls.op_name is None or _REGISTRY.get(cls.op_name) is not cls:
            raise UnregisteredOpError(cls.op_name or cls.__name__)
        ctx = Context()
        raw = [arg.data if isinstance(arg, Tensor) else arg for arg in args]
        output = Tensor(cls.forward(ctx, *raw, **kwargs))

        tape = current_tape()
        if tape is not None and any(isinstance(arg, Tensor) and arg.requires_grad for arg in args):
            output.requires_grad = True
            tape.record(Node(cls.op_name, lambda grad, c=ctx: cls.backward(c, grad), args, output))
        return output


def _accumulate(grads: Dict[int, list], tensor: Tensor, grad: np.ndarray):
    if not tensor.is_complex and np.iscomplexobj(grad):
        grad = grad.real
    grad = np.asarray(grad)
    if grad.shape != tensor.shape:
        grad = np.broadcast_to(grad, tensor.shape)
    entry = grads.get(id(tensor))
    if entry is None:
        grads[id(tensor)] = [tensor, np.array(grad, dtype=tensor.dtype if tensor.is_complex else np.float64)]
    else:
        entry[1] = entry[1] + grad


class Tape:
    """Records one forward pass; consumed by exactly one backward pass."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().remove(self)
        return False

    def record(self, node: Node):
        if self.consumed:
            raise TapeConsumedError()
        self.nodes.append(node)

    def vjp(self, output: Tensor, cotangent: np.ndarray,
            wrt: Optional[Iterable[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
        """Vector-Jacobian product of `output` with `cotangent` for every leaf reached (and `wrt`)."""
        if self.consumed:
            raise TapeConsumedError()
        self.consumed = True

        grads: Dict[int, list] = {}
        _accumulate(grads, output, np.asarray(cotangent))
        produced = set()
        for node in reversed(self.nodes):
            produced.add(id(node.output))
            entry = grads.get(id(node.output))
            if entry is None:
                continue
            input_grads = node.backward(entry[1])
            if not isinstance(input_grads, (tuple, list)):
                input_grads = (input_grads,)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not isinstance(tensor, Tensor) or not tensor.requires_grad:
                    continue
                _accumulate(grads, tensor, grad)

        result = {tensor: grad for key, (tensor, grad) in grads.items() if key not in produced}
        for tensor in wrt or ():
            if tensor not in result:
                result[tensor] = np.zeros_like(tensor.data)
        self.nodes = []
        return result

    def backward(self, loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
        if loss.data.size != 1:
            raise NonScalarLossError(loss.shape)
        return self.vjp(loss, np.ones_like(loss.data), wrt)


def backward(loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
    """Backward pass over the innermost active tape."""
    stack = _tape_stack()
    if not stack:
        raise TapeConsumedError()
    return stack[-1].backward(loss, wrt)


@register("checkpoint")
class Checkpoint(Function):
    """Marker for recomputed segments; recording goes through `checkpoint`."""


def checkpoint(fn: Callable[..., Tensor], *inputs: Tensor, params: Sequence[Tensor] = ()) -> Tensor:
    """Runs `fn` without recording and replays it during backward.

    `params` lists every differentiable tensor `fn` closes over; their
    gradients are produced by the replay.
    """
    with no_grad():
        output = fn(*inputs)
    tape = current_tape()
    tracked = list(inputs) + list(params)
    if tape is None or not any(t.requires_grad for t in tracked):
        return output

    def replay(grad_output: np.ndarray):
        replay_inputs = [Tensor(t.data, requires_grad=t.requires_grad) for t in inputs]
        with Tape() as inner:
            replayed = fn(*replay_inputs)
            grads = inner.vjp(replayed, grad_output, replay_inputs + list(params))
        return [grads[t] for t in replay_inputs] + [grads[p] for p in params]

    output = Tensor(output.data, requires_grad=True)
    tape.record(Node(Checkpoint.op_name, replay, tracked, output))
    return output
