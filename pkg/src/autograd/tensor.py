"""
Tensor and reverse-mode differentiation tape

A ``Tape`` records every differentiable operation executed while it is
active. ``Tape.backward`` walks the records in reverse and leaves a gradient
buffer on every participating tensor that requires one.
"""

import contextlib
import weakref
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.exceptions import TapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_default_dtype = np.dtype(np.float32)
_tape_stack: List["Tape"] = []
_deterministic = False


def get_default_dtype() -> np.dtype:
    """Return the floating dtype used for newly created tensors"""
    return _default_dtype


def set_default_dtype(dtype) -> None:
    """
    Set the floating dtype used for newly created tensors

    Args:
        dtype: float32 for training/inference, float64 for gradient checks
    """
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported precision: {dtype}. Use float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default tensor precision"""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def deterministic_reductions() -> bool:
    """Whether contractions run in a fixed, thread-independent summation order"""
    return _deterministic


def set_deterministic(enabled: bool) -> None:
    """
    Route matmul, linear and convolution contractions through ``np.einsum``

    The einsum loops sum in one fixed order regardless of how many BLAS
    threads are available, so repeated runs are bit-identical on any machine.
    They are slower than the BLAS kernels used otherwise.
    """
    global _deterministic
    _deterministic = bool(enabled)


@contextlib.contextmanager
def deterministic(enabled: bool = True) -> Iterator[None]:
    """Temporarily switch deterministic contractions on or off"""
    previous = _deterministic
    set_deterministic(enabled)
    try:
        yield
    finally:
        set_deterministic(previous)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording on every active tape"""
    saved = list(_tape_stack)
    _tape_stack.clear()
    try:
        yield
    finally:
        _tape_stack.extend(saved)


def active_tape() -> Optional["Tape"]:
    """Return the innermost active tape, if any"""
    return _tape_stack[-1] if _tape_stack else None


@dataclass
class TapeNode:
    """One recorded operation"""
    index: int
    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: BackwardFn


class Tape:
    """
    Ordered record of differentiable operations

    Nodes are appended in execution order, so every node's inputs were
    produced by earlier nodes (or are leaves). A tape supports exactly one
    backward pass; call ``reset()`` before recording again.
    """

    def __init__(self):
        self.nodes: List[Optional[TapeNode]] = []
        self.consumed = False
        self._participants: "weakref.WeakValueDictionary[int, Tensor]" = weakref.WeakValueDictionary()

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise TapeError("Cannot record on a consumed tape; call reset() first")
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self in _tape_stack:
            _tape_stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(
        self,
        op: str,
        inputs: Sequence["Tensor"],
        output: "Tensor",
        backward: BackwardFn
    ) -> int:
        """
        Append an operation to the tape

        Args:
            op: Operation name
            inputs: Input tensors in the order ``backward`` returns gradients
            output: Tensor produced by the operation
            backward: Maps the output gradient to one gradient per input

        Returns:
            Node index assigned to the output
        """
        if self.consumed:
            raise TapeError("Cannot record on a consumed tape; call reset() first")
        index = len(self.nodes)
        self.nodes.append(TapeNode(index, op, tuple(inputs), output, backward))
        for tensor in (*inputs, output):
            if tensor.requires_grad:
                self._participants[id(tensor)] = tensor
        output.tape_node = index
        output._tape = self
        return index

    def reset(self) -> None:
        """Discard all records so the tape can be reused"""
        self.nodes = []
        self.consumed = False
        self._participants = weakref.WeakValueDictionary()

    def backward(self, loss: "Tensor") -> None:
        """
        Propagate gradients from a scalar loss through the recorded graph

        Args:
            loss: Scalar tensor produced under this tape

        Raises:
            TapeError: If the tape was already consumed or the loss is not scalar
        """
        if self.consumed:
            raise TapeError("Tape already consumed; backward may run once per tape")
        if loss.data.size != 1:
            raise TapeError(f"backward requires a scalar loss, got shape {loss.shape}")

        pending: Dict[int, Tuple[Tensor, np.ndarray]] = {
            id(loss): (loss, np.ones_like(loss.data))
        }

        for position in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[position]
            self.nodes[position] = None
            entry = pending.pop(id(node.output), None)
            if entry is None:
                continue
            output, grad = entry
            output._accumulate(grad)

            input_grads = node.backward(grad)
            for tensor, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if input_grad.shape != tensor.data.shape:
                    raise TapeError(
                        f"Gradient shape {input_grad.shape} does not match "
                        f"input shape {tensor.data.shape} in op '{node.op}'"
                    )
                key = id(tensor)
                if key in pending:
                    pending[key] = (tensor, pending[key][1] + input_grad)
                else:
                    pending[key] = (tensor, input_grad)

        for tensor, grad in pending.values():
            tensor._accumulate(grad)

        for tensor in list(self._participants.values()):
            if tensor.grad is None:
                tensor.grad = np.zeros_like(tensor.data)

        self.consumed = True
        self.nodes = []
        logger.debug("Backward pass complete")


def backward(tape: Tape, scalar_loss: "Tensor") -> None:
    """Run the backward pass of ``tape`` from ``scalar_loss``"""
    tape.backward(scalar_loss)


class Tensor:
    """
    N-dimensional array participating in a differentiation tape

    Attributes:
        data: Underlying numpy array (treated as immutable)
        requires_grad: Whether gradients should be accumulated for this tensor
        grad: Gradient buffer of the same shape, populated by backward
        tape_node: Index of the producing node on the active tape, if recorded
    """

    # numpy defers mixed ndarray/Tensor arithmetic to the reflected Tensor ops
    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        name: Optional[str] = None
    ):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _default_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tape_node: Optional[int] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap an op result without casting its dtype"""
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.tape_node = None
        tensor.name = None
        tensor._tape = None
        return tensor

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = grad.astype(self.data.dtype, copy=False)
        self.grad = grad if self.grad is None else self.grad + grad

    # -- array protocol -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array"""
        return self.data.copy()

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Return a tensor sharing data but outside any tape"""
        return Tensor._wrap(self.data, requires_grad=False)

    def backward(self) -> None:
        """Run backward on the tape that produced this tensor"""
        if self._tape is None:
            raise TapeError("Tensor was not produced under an active tape")
        self._tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- operator sugar (implemented in functional) -----------------------

    def __add__(self, other):
        from src.autograd import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from src.autograd import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from src.autograd import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from src.autograd import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from src.autograd import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from src.autograd import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from src.autograd import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from src.autograd import functional as F
        return F.div(other, self)

    def __neg__(self):
        from src.autograd import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float):
        from src.autograd import functional as F
        return F.power(self, exponent)

    def __matmul__(self, other):
        from src.autograd import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index):
        from src.autograd import functional as F
        return F.getitem(self, index)

    def reshape(self, *shape):
        from src.autograd import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from src.autograd import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from src.autograd import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from src.autograd import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        from src.autograd import functional as F
        return F.exp(self)

    def log(self):
        from src.autograd import functional as F
        return F.log(self)


class Parameter(Tensor):
    """Trainable leaf tensor registered on a Module"""

    def __init__(self, data: ArrayLike, dtype=None, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)
