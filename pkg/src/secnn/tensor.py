"""Dense float64 tensors with taped reverse-mode gradients.

Everything array-valued in this package is a :class:`Tensor`: a contiguous
row-major float64 numpy buffer plus a ``requires_grad`` flag.  Operations
executed while a :class:`GradTape` is active are recorded on the tape in
execution order; :func:`backward` replays the tape in exact reverse order
and returns a gradient for every ``requires_grad`` tensor in the loss
ancestry.  :func:`finite_diff_grad` is the independent central-difference
oracle used to verify the analytic gradients.

Scope is deliberately narrow: no broadcasting beyond scalar-with-tensor,
no views, 2-D matmul only.  Every operation checks its result for NaN/Inf
and raises :class:`NumericError` so numerical blow-ups surface at the op
that produced them.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "GradTape",
    "Rng",
    "ShapeError",
    "NumericError",
    "elementwise",
    "add",
    "sub",
    "mul",
    "relu",
    "sigmoid",
    "matmul",
    "transpose",
    "reshape",
    "index_axis0",
    "reduce",
    "backward",
    "finite_diff_grad",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """An operation produced NaN or Inf values."""


TensorLike = Union["Tensor", float, int, np.ndarray, Sequence]


class Tensor:
    """A dense float64 array that can participate in gradient recording.

    Tensors are immutable after construction except that the training loop
    may overwrite `.data` of parameter leaves in place between steps.
    Identity (not value) is what the gradient machinery keys on, so Tensor
    is hashable by object identity and defines no `__eq__`.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data: TensorLike, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:  # 0-d arrays are always contiguous
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains NaN or Inf values")
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions carry the real logic.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


# --------------------------------------------------------------------------
# Gradient tape

class GradTape:
    """Ordered record of executed operations, replayable exactly once.

    Use as a context manager; ops run inside the `with` block are recorded
    when their output requires a gradient.  A tape is single-use: after
    `backward` consumed it, reuse raises.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> "GradTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "mismatched GradTape nesting"

    def __len__(self) -> int:
        return len(self._ops)


_TAPE_STACK: list[GradTape] = []


def _active_tape() -> Optional[GradTape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record_op(
    out: Tensor,
    inputs: tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]],
) -> None:
    """Register a primitive on the active tape (no-op when none is active).

    `backward_fn` maps the output gradient to one gradient array (or None)
    per input, each of the input's own shape.
    """
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._ops.append((out, inputs, backward_fn))


def backward(loss: Tensor, tape: GradTape) -> dict[Tensor, Tensor]:
    """Reverse-replay `tape` from scalar `loss`, returning a gradient map.

    The map holds one entry per requires_grad tensor reachable from the
    loss; tensors outside the ancestry are absent.  Gradients accumulate
    additively when a tensor feeds multiple consumers.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if tape._consumed:
        raise RuntimeError("GradTape already consumed by a previous backward pass")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}

    for out, inputs, backward_fn in reversed(tape._ops):
        gout = grads.get(id(out))
        if gout is None:
            continue
        partials = backward_fn(gout)
        for inp, gin in zip(inputs, partials):
            if gin is None or not inp.requires_grad:
                continue
            if gin.shape != inp.shape:
                raise ShapeError(
                    f"backward produced gradient of shape {gin.shape} "
                    f"for input of shape {inp.shape}"
                )
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gin
            else:
                grads[key] = gin
                holders[key] = inp

    return {
        holders[key]: Tensor(g)
        for key, g in grads.items()
        if holders[key].requires_grad
    }


# --------------------------------------------------------------------------
# Helpers

def _coerce(x: TensorLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)

def _propagates(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)

def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to an operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)

def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")

def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --------------------------------------------------------------------------
# Elementwise operations

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("add", a, b)
    out = Tensor(a.data + b.data, requires_grad=_propagates(a, b))

    def bw(g):
        return _sum_to(g, a.shape), _sum_to(g, b.shape)

    record_op(out, (a, b), bw)
    return out


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("sub", a, b)
    out = Tensor(a.data - b.data, requires_grad=_propagates(a, b))

    def bw(g):
        return _sum_to(g, a.shape), _sum_to(-g, b.shape)

    record_op(out, (a, b), bw)
    return out


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_binary("mul", a, b)
    out = Tensor(a.data * b.data, requires_grad=_propagates(a, b))

    def bw(g):
        return _sum_to(g * b.data, a.shape), _sum_to(g * a.data, b.shape)

    record_op(out, (a, b), bw)
    return out


def relu(a: TensorLike) -> Tensor:
    a = _coerce(a)
    out = Tensor(np.maximum(a.data, 0.0), requires_grad=a.requires_grad)

    def bw(g):
        return (g * (a.data > 0.0),)

    record_op(out, (a,), bw)
    return out


def sigmoid(a: TensorLike) -> Tensor:
    a = _coerce(a)
    y = _stable_sigmoid(a.data)
    out = Tensor(y, requires_grad=a.requires_grad)

    def bw(g):
        return (g * y * (1.0 - y),)

    record_op(out, (a,), bw)
    return out


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "relu": relu, "sigmoid": sigmoid}
_UNARY = {"relu", "sigmoid"}


def elementwise(op: str, a: TensorLike, b: TensorLike | None = None) -> Tensor:
    """Dispatch by name: binary {add, sub, mul} or unary {relu, sigmoid}."""
    fn = _ELEMENTWISE.get(op)
    if fn is None:
        raise ValueError(f"unknown elementwise op {op!r}")
    if op in _UNARY:
        if b is not None:
            raise ValueError(f"{op} takes a single operand")
        return fn(a)
    if b is None:
        raise ValueError(f"{op} requires two operands")
    return fn(a, b)


# --------------------------------------------------------------------------
# Matrix and movement operations

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, requires_grad=_propagates(a, b))

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    record_op(out, (a, b), bw)
    return out


def transpose(a: TensorLike) -> Tensor:
    a = _coerce(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.shape}")
    out = Tensor(a.data.T, requires_grad=a.requires_grad)

    def bw(g):
        return (np.ascontiguousarray(g.T),)

    record_op(out, (a,), bw)
    return out


def reshape(a: TensorLike, shape: tuple) -> Tensor:
    a = _coerce(a)
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad)

    def bw(g):
        return (g.reshape(a.shape),)

    record_op(out, (a,), bw)
    return out


def index_axis0(a: TensorLike, i: int) -> Tensor:
    """Select slice `i` along the leading axis; backward scatters into it."""
    a = _coerce(a)
    if a.ndim < 1 or not (0 <= i < a.shape[0]):
        raise ShapeError(f"index {i} out of range for shape {a.shape}")
    out = Tensor(a.data[i], requires_grad=a.requires_grad)

    def bw(g):
        full = np.zeros_like(a.data)
        full[i] = g
        return (full,)

    record_op(out, (a,), bw)
    return out


# --------------------------------------------------------------------------
# Reductions

def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        axes = tuple(range(ndim))
    elif isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    else:
        axes = tuple(int(ax) for ax in axes)
    if len(axes) == 0:
        raise ShapeError("reduce requires at least one axis")
    norm = []
    for ax in axes:
        if not (-ndim <= ax < ndim):
            raise ShapeError(f"axis {ax} out of range for {ndim}-D tensor")
        norm.append(ax % ndim)
    if len(set(norm)) != len(norm):
        raise ShapeError(f"duplicate axes in {axes}")
    return tuple(sorted(norm))


def reduce(op: str, a: TensorLike, axes: Union[int, Iterable[int], None] = None) -> Tensor:
    """Reduce over `axes` (None means all) with op in {mean, sum, max}.

    The reduced axes are dropped from the output shape.  `max` routes its
    gradient entirely to the first maximal element of each reduced block,
    in row-major order over the reduced axes.
    """
    a = _coerce(a)
    axes = _normalize_axes(axes, a.ndim)

    if op == "sum" or op == "mean":
        count = 1
        for ax in axes:
            count *= a.shape[ax]
        if op == "mean":
            # Shifted mean: averaging the residuals against a reference
            # slice keeps the mean of a constant block exact.
            ref_idx = tuple(0 if i in axes else slice(None) for i in range(a.ndim))
            ref = a.data[ref_idx]
            centered = a.data - np.expand_dims(ref, axes)
            data = ref + centered.sum(axis=axes) / count
        else:
            data = a.data.sum(axis=axes)
        out = Tensor(data, requires_grad=a.requires_grad)

        def bw(g):
            expanded = np.expand_dims(g, axes)
            full = np.broadcast_to(expanded, a.shape)
            if op == "mean":
                full = full / count
            return (np.ascontiguousarray(full),)

        record_op(out, (a,), bw)
        return out

    if op == "max":
        kept = tuple(i for i in range(a.ndim) if i not in axes)
        perm = kept + axes
        moved = a.data.transpose(perm)
        kept_shape = moved.shape[: len(kept)]
        block = int(np.prod([a.shape[ax] for ax in axes], dtype=np.int64))
        flat = moved.reshape(kept_shape + (block,))
        argmax = np.argmax(flat, axis=-1)  # first maximum on ties
        data = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
        out = Tensor(data, requires_grad=a.requires_grad)

        def bw(g):
            scattered = np.zeros(kept_shape + (block,), dtype=np.float64)
            np.put_along_axis(scattered, argmax[..., None], g[..., None], axis=-1)
            restored = scattered.reshape(moved.shape)
            inv = np.argsort(perm)
            return (np.ascontiguousarray(restored.transpose(inv)),)

        record_op(out, (a,), bw)
        return out

    raise ValueError(f"unknown reduce op {op!r}")


# --------------------------------------------------------------------------
# Finite-difference oracle

def finite_diff_grad(f: Callable[[Tensor], Union[float, Tensor]], x: Tensor, h: float = 1e-5) -> Tensor:
    """Central-difference gradient of scalar `f` at `x`: (f(x+h*e_i) - f(x-h*e_i)) / 2h.

    Independent of the tape machinery by construction; `f` is called on
    fresh perturbed tensors and must return a finite scalar.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")

    def evaluate(data: np.ndarray) -> float:
        val = f(Tensor(data))
        val = val.item() if isinstance(val, Tensor) else float(val)
        if not np.isfinite(val):
            raise NumericError("finite_diff_grad: function returned a non-finite value")
        return val

    base = x.data
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        plus = base.copy()
        plus.flat[i] += h
        minus = base.copy()
        minus.flat[i] -= h
        flat[i] = (evaluate(plus) - evaluate(minus)) / (2.0 * h)
    return Tensor(grad)


# --------------------------------------------------------------------------
# Seeded random source

class Rng:
    """Deterministic random stream: PCG64 seeded with a 64-bit integer.

    The same seed yields bit-identical sample streams within one build.
    `child` derives independent substreams from (seed, key) so unrelated
    consumers (splitting, init, shuffling) cannot perturb each other.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, *key: int) -> "Rng":
        rng = Rng.__new__(Rng)
        rng.seed = self.seed
        rng._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=tuple(key)))
        )
        return rng

    def uniform(self, low: float, high: float, shape: tuple = ()) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, shape: tuple = ()) -> np.ndarray:
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int, shape: tuple = ()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, options, size=None, replace=True):
        return self._gen.choice(options, size=size, replace=replace)

    def uniform_tensor(self, low: float, high: float, shape: tuple, requires_grad: bool = False) -> Tensor:
        return Tensor(self.uniform(low, high, shape), requires_grad=requires_grad)
