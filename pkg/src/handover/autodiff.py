"""Small reverse-mode automatic differentiation engine over numpy arrays.

Supports exactly the operations the association tracker needs: broadcasting
arithmetic, batched matmul, reshapes/transposes, GeLU, (log-)softmax along the
last axis, embedding lookups, row gathers, and dropout. Everything runs in
float64 so finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        # parents: tuple of (tensor, fn) where fn maps out-grad -> parent-grad
        self._parents = parents

    @property
    def shape(self):
        return self.data.shape

    def _needs_graph(self) -> bool:
        return self.requires_grad or any(p.requires_grad or p._parents for p, _ in self._parents)

    # -- graph construction helpers -------------------------------------

    @staticmethod
    def _make(data, parents):
        keep = tuple((p, fn) for p, fn in parents if p.requires_grad or p._parents)
        out = Tensor(data, parents=keep)
        return out

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return Tensor._make(
            self.data + other.data,
            (
                (self, lambda g: _unbroadcast(g, self.data.shape)),
                (other, lambda g: _unbroadcast(g, other.data.shape)),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, ((self, lambda g: -g),))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return Tensor._make(
            self.data * other.data,
            (
                (self, lambda g: _unbroadcast(g * other.data, self.data.shape)),
                (other, lambda g: _unbroadcast(g * self.data, other.data.shape)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self * other.pow(-1.0)

    def pow(self, exponent: float):
        out = self.data**exponent
        return Tensor._make(
            out, ((self, lambda g: g * exponent * self.data ** (exponent - 1.0)),)
        )

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, ((self, lambda g: g * out),))

    def log(self):
        return Tensor._make(np.log(self.data), ((self, lambda g: g / self.data),))

    def matmul(self, other: "Tensor"):
        out = np.matmul(self.data, other.data)
        return Tensor._make(
            out,
            (
                (
                    self,
                    lambda g: _unbroadcast(
                        np.matmul(g, other.data.swapaxes(-1, -2)), self.data.shape
                    ),
                ),
                (
                    other,
                    lambda g: _unbroadcast(
                        np.matmul(self.data.swapaxes(-1, -2), g), other.data.shape
                    ),
                ),
            ),
        )

    def __matmul__(self, other):
        return self.matmul(other)

    def reshape(self, *shape):
        orig = self.data.shape
        return Tensor._make(
            self.data.reshape(*shape), ((self, lambda g: g.reshape(orig)),)
        )

    def transpose(self, *axes):
        inv = np.argsort(axes)
        return Tensor._make(
            self.data.transpose(axes), ((self, lambda g: g.transpose(inv)),)
        )

    def swap_last(self):
        return Tensor._make(
            self.data.swapaxes(-1, -2), ((self, lambda g: g.swapaxes(-1, -2)),)
        )

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            return np.broadcast_to(gg, self.data.shape).copy()

        return Tensor._make(out, ((self, back),))

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def gelu(self):
        # tanh approximation; its own derivative is used for the backward pass
        x = self.data
        c = np.sqrt(2.0 / np.pi)
        inner = c * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)

        def back(g):
            dinner = c * (1.0 + 3 * 0.044715 * x**2)
            return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner)

        return Tensor._make(out, ((self, back),))

    def softmax(self):
        """Softmax along the last axis, max-stabilized."""
        z = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)

        def back(g):
            return y * (g - (g * y).sum(axis=-1, keepdims=True))

        return Tensor._make(y, ((self, back),))

    def log_softmax(self):
        z = self.data - self.data.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        out = z - lse
        y = np.exp(out)

        def back(g):
            return g - y * g.sum(axis=-1, keepdims=True)

        return Tensor._make(out, ((self, back),))

    def dropout(self, p: float, rng: np.random.Generator | None):
        """Inverted dropout; identity when rng is None (eval mode) or p == 0."""
        if rng is None or p <= 0.0:
            return self
        mask = (rng.random(self.data.shape) >= p) / (1.0 - p)
        return self * Tensor(mask)

    def gather_rows(self, idx: np.ndarray):
        """Select rows along axis -2: (..., N, C) indexed by (..., K) -> (..., K, C)."""
        idx = np.asarray(idx)
        take = np.take_along_axis(self.data, idx[..., None], axis=-2)

        def back(g):
            out = np.zeros_like(self.data)
            np.add.at(
                out.reshape(-1, *self.data.shape[-2:]),
                (
                    np.arange(int(np.prod(idx.shape[:-1])) or 1)[:, None],
                    idx.reshape(-1, idx.shape[-1]),
                ),
                g.reshape(-1, idx.shape[-1], self.data.shape[-1]),
            )
            return out

        return Tensor._make(take, ((self, back),))

    # -- backward pass ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            for parent, fn in node._parents:
                pg = fn(g)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup in a (V, C) table by an integer id array of any shape."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return gt

    return Tensor._make(out, ((table, back),))


def parameter(rng: np.random.Generator, *shape, fan_in: int | None = None) -> Tensor:
    """Uniform fan-in initialized trainable tensor."""
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else 1
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_parameter(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Adam:
    """Adaptive-moment gradient descent with polynomial learning-rate decay.

    lr(step) = lr0 * (1 - step / total_steps) ** power
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        total_steps: int | None = None,
        power: float = 0.9,
    ):
        self.params = params
        self.lr0 = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.total_steps = total_steps
        self.power = power
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def current_lr(self) -> float:
        if not self.total_steps:
            return self.lr0
        frac = min(self.step_count / self.total_steps, 1.0)
        return self.lr0 * (1.0 - frac) ** self.power

    def step(self):
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1**t)
            vhat = self.v[name] / (1 - self.beta2**t)
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
