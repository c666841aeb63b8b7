"""Dense float64 tensors with reverse-mode automatic differentiation.

Every primitive records a closure mapping the upstream gradient to one
gradient per parent.  :meth:`Tensor.backward` topologically sorts the
recorded graph and sweeps it once in reverse, accumulating into the
``grad`` buffers of leaf tensors (parameters, or inputs created with
``requires_grad=True``).  Intermediate gradients live only for the
duration of the sweep.

Only what the GRFF models need is implemented: 2-D matmul, a handful of
elementwise maps, batch normalization, valid 5x5-style convolution,
2x2 max pooling and softmax cross-entropy.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ContractError, DegenerateBatchError, LabelError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An n-dimensional float64 array that can take part in autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- array-like conveniences -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self):
        if not self.requires_grad:
            return
        if self.grad is None or self.grad.shape != self.data.shape:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    # -- operators ---------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # -- reverse sweep -----------------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


class Parameter(Tensor):
    """Trainable leaf tensor carrying its own Adam state."""

    __slots__ = ("m", "v", "step")

    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def __repr__(self):
        return f"Parameter(shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    """Wrap a primitive's output, recording the graph only when needed."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _make(ad @ bd, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {original} as {shape}") from exc
    return _make(out, (a,), lambda g: (g.reshape(original),), "reshape")


def concat(tensors, axis=1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]} along axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward, "concat")


def linear(x, W, b) -> Tensor:
    """Affine map ``x @ W + b`` for (B, F_in) inputs; fused for speed."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"linear: x {x.shape}, W {W.shape}, b {b.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd
    out += b.data

    def backward(g):
        return (g @ Wd.T if x.requires_grad else None,
                xd.T @ g if W.requires_grad else None,
                g.sum(axis=0))

    return _make(out, (x, W, b), backward, "linear")


def slot_linear(x, W, b) -> Tensor:
    """Row ``j`` of ``x`` through its own column block of ``W``.

    ``x`` is (S, F_in), ``W`` is (F_in, S * F) and ``b`` is (S * F,); the
    result is (S, F) with ``out[j] = x[j] @ W[:, jF:(j+1)F] + b[jF:(j+1)F]``.
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or W.shape[1] % x.shape[0] \
            or b.shape != (W.shape[1],):
        raise ShapeError(f"slot_linear: x {x.shape}, W {W.shape}, b {b.shape}")
    S, H = x.shape
    F = W.shape[1] // S
    xd, W3 = x.data, W.data.reshape(H, S, F)
    out = np.einsum("sh,hsf->sf", xd, W3) + b.data.reshape(S, F)

    def backward(g):
        gx = np.einsum("sf,hsf->sh", g, W3) if x.requires_grad else None
        gW = np.einsum("sh,sf->hsf", xd, g).reshape(H, S * F) if W.requires_grad else None
        return gx, gW, g.reshape(-1)

    return _make(out, (x, W, b), backward, "slot_linear")


def add_bias(x, b) -> Tensor:
    """Row-broadcast add of a length-F vector to a (B, F) matrix."""
    x, b = as_tensor(x), as_tensor(b)
    if x.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    return _make(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)), "add_bias")


# -- elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def cos(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.cos(x), (a,), lambda g: (-g * np.sin(x),), "cos")


def sin(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.sin(x), (a,), lambda g: (g * np.cos(x),), "sin")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def fourier(a, s=1.0, axis=1) -> Tensor:
    """``concat([s*cos(a), s*sin(a)], axis)`` as one primitive."""
    a = as_tensor(a)
    c = np.cos(a.data)
    sn = np.sin(a.data)
    out = np.concatenate([c, sn], axis=axis)
    out *= s
    n = a.shape[axis]

    def backward(g):
        gc, gs = np.split(g, [n], axis=axis)
        return ((gs * c - gc * sn) * s,)

    return _make(out, (a,), backward, "fourier")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope=0.2) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, slope * x) if slope <= 1 else np.minimum(x, slope * x)

    def backward(g):
        return (np.where(x > 0, g, slope * g),)

    return _make(out, (a,), backward, "leaky_relu")


def tsum(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),),
                 "sum")


def tmean(a) -> Tensor:
    a = as_tensor(a)
    shape, n = a.shape, a.data.size
    return _make(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to(g / n, shape).copy(),), "mean")


# -- normalization ---------------------------------------------------------------

@dataclass
class BatchNormState:
    """Running statistics of one batch-normalization layer (not trained)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, features, momentum=0.1, eps=1e-5):
        return cls(np.zeros(features), np.ones(features), momentum, eps)


def batchnorm(x, gamma, beta, state: BatchNormState, training=True, update_stats=True) -> Tensor:
    """Per-feature normalization of a (B, F) batch.

    Training mode uses the biased batch variance for normalization and
    feeds the unbiased variance into the running estimate (momentum
    ``state.momentum``).  Evaluation mode uses the running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batchnorm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    n = x.shape[0]
    eps = state.eps
    if training:
        if n < 2:
            raise DegenerateBatchError(f"batchnorm in train mode needs >= 2 samples, got {n}")
        mu = x.data.mean(axis=0)
        centred = x.data - mu
        var = np.einsum("ij,ij->j", centred, centred) / n
        if update_stats:
            m = state.momentum
            state.running_mean = (1 - m) * state.running_mean + m * mu
            state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
    else:
        mu, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (centred if training else x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    gd = gamma.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        if not x.requires_grad:
            return None, dgamma, dbeta
        gx = g * gd
        if training:
            dx = inv_std * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
        else:
            dx = gx * inv_std
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), backward, "batchnorm")


# -- convolution and pooling -----------------------------------------------------

def conv2d_valid(x, kernels) -> Tensor:
    """Stride-1, unpadded cross-correlation.

    ``x`` is (B, C, H, W), ``kernels`` is (K, C, kh, kw); the output is
    (B, K, H - kh + 1, W - kw + 1).
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d_valid: expected 4-d operands, got {x.shape} and {kernels.shape}")
    B, C, H, W = x.shape
    K, Ck, kh, kw = kernels.shape
    if C != Ck:
        raise ShapeError(f"conv2d_valid: image has {C} channels, kernels expect {Ck}")
    if H < kh or W < kw:
        raise ShapeError(f"conv2d_valid: image {H}x{W} smaller than kernel {kh}x{kw}")
    Ho, Wo = H - kh + 1, W - kw + 1
    xd, kd = x.data, kernels.data
    # im2col: one row per output pixel, columns ordered (C, kh, kw) like the kernels
    cols = sliding_window_view(xd, (kh, kw), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(B * Ho * Wo, C * kh * kw)
    kmat = kd.reshape(K, C * kh * kw)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, K).transpose(0, 3, 1, 2)

    def backward(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, K)
        gk = (gflat.T @ cols).reshape(kd.shape) if kernels.requires_grad else None
        gx = None
        if x.requires_grad:
            # full correlation of the zero-padded output gradient with flipped kernels
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gcols = sliding_window_view(gp, (kh, kw), axis=(2, 3))[:, :, :, :, ::-1, ::-1]
            gcols = gcols.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, K * kh * kw)
            kflip = kd.reshape(K, C, kh * kw).transpose(0, 2, 1).reshape(K * kh * kw, C)
            gx = (gcols @ kflip).reshape(B, H, W, C).transpose(0, 3, 1, 2)
        return gx, gk

    return _make(np.ascontiguousarray(out), (x, kernels), backward, "conv2d_valid")


def maxpool2(x) -> Tensor:
    """Non-overlapping 2x2 max pooling; ties send the gradient to the first cell."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2 expects (B, C, H, W), got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got {H}x{W}")
    # window cells in row-major order; strict ">" keeps the first maximum
    cells = [x.data[:, :, i::2, j::2] for i in (0, 1) for j in (0, 1)]
    out = cells[0].copy()
    idx = np.zeros(out.shape, dtype=np.int8)
    for k in (1, 2, 3):
        better = cells[k] > out
        np.copyto(out, cells[k], where=better)
        idx[better] = k

    def backward(g):
        gx = np.zeros((B, C, H, W))
        for k, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            gx[:, :, i::2, j::2] = np.where(idx == k, g, 0.0)
        return (gx,)

    return _make(out, (x,), backward, "maxpool2")


# -- loss ------------------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (B, C) logits, got {logits.shape}")
    B, C = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {B}")
    if labels.size and (labels.min() < 0 or labels.max() >= C
                        or not np.issubdtype(labels.dtype, np.integer)):
        raise LabelError(f"labels must be integers in [0, {C})")
    logp = log_softmax(logits.data)
    rows = np.arange(B)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / B),)

    return _make(np.asarray(loss), (logits,), backward, "cross_entropy")


# -- optimizer -------------------------------------------------------------------

_SCRATCH = {}


def _scratch(n):
    buf = _SCRATCH.get(n)
    if buf is None:
        buf = _SCRATCH[n] = np.empty(n)
    return buf


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update of every parameter in ``params``.

    Computes ``m_hat / (sqrt(v_hat) + eps)`` in place through a reusable
    scratch buffer; large parameters make allocation the dominant cost.
    """
    for p in params:
        if p.grad is None:
            raise ContractError(f"{p!r} has no gradient; call backward() first")
    for p in params:
        p.step += 1
        g = p.grad.reshape(-1)
        m, v, theta = p.m.reshape(-1), p.v.reshape(-1), p.data.reshape(-1)
        buf = _scratch(g.size)
        np.multiply(g, 1 - beta1, out=buf)
        m *= beta1
        m += buf
        np.multiply(g, g, out=buf)
        buf *= 1 - beta2
        v *= beta2
        v += buf
        np.sqrt(v, out=buf)
        buf *= 1.0 / np.sqrt(1 - beta2 ** p.step)
        buf += eps
        np.divide(m, buf, out=buf)
        buf *= lr / (1 - beta1 ** p.step)
        theta -= buf


class Adam:
    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps

    def step(self, params):
        adam_step(params, self.lr, self.betas[0], self.betas[1], self.eps)


def zero_grad(params):
    for p in params:
        p.zero_grad()


# -- verification helper ---------------------------------------------------------

def gradcheck(f, params, h=1e-5) -> float:
    """Largest relative discrepancy between reverse-mode and central differences.

    ``f`` is a zero-argument callable building a scalar Tensor from
    ``params``.  Errors are infinity-norm differences scaled by the largest
    gradient entry over all parameters, so a parameter whose true gradient
    is exactly zero (a bias feeding batch normalization) is judged against
    the loss's overall gradient scale instead of against rounding noise.
    """
    params = list(params)
    for p in params:
        p.grad = None
    f().backward()
    analytic = [p.grad.copy() for p in params]
    diffs, scale = [], 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
            diffs.append(float(np.abs(a - numeric).max(initial=0.0)))
            scale = max(scale, np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    return max(diffs, default=0.0) / max(scale, 1e-12)
