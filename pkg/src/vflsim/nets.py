"""Dense residual-network engine: forward/backward passes, losses, optimizers.

All state is float64 and batches are row-major: an input of shape (B, d_in)
maps to an output of shape (B, d_out). Each residual block computes

    x <- x + W2 @ sigma(W1 @ x + b1)

per row, and an affine head maps the final d_in-dimensional state to the
output width. The backward pass returns both parameter gradients and the
gradient with respect to the input batch; the latter is the quantity a
federation server relays back to feature-holding nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError


def _tanh(z):
    return np.tanh(z)


def _tanh_prime(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    return (z > 0.0).astype(np.float64)


ACTIVATIONS = {
    "tanh": (_tanh, _tanh_prime),
    "relu": (_relu, _relu_prime),
}


@dataclass
class ResidualBlock:
    w1: np.ndarray  # (hidden, dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (dim, hidden)


@dataclass
class ResidualNet:
    """A stack of residual blocks on the input space plus an affine head.

    `version` counts parameter updates; forward tapes remember the version
    they were recorded against so a tape cannot be replayed after the
    parameters moved underneath it.
    """

    input_dim: int
    output_dim: int
    hidden_dim: int
    blocks: list[ResidualBlock]
    w_out: np.ndarray  # (output_dim, input_dim)
    b_out: np.ndarray  # (output_dim,)
    activation: str = "tanh"
    version: int = 0

    @property
    def depth(self) -> int:
        return len(self.blocks)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list: (w1, b1, w2) per block, then (w_out, b_out)."""
        params: list[np.ndarray] = []
        for blk in self.blocks:
            params.extend((blk.w1, blk.b1, blk.w2))
        params.extend((self.w_out, self.b_out))
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def init_net(
    input_dim: int,
    output_dim: int,
    hidden_dim: int = 32,
    depth: int = 10,
    activation: str = "tanh",
    rng: np.random.Generator | None = None,
) -> ResidualNet:
    """Seeded uniform(-s, s) initialization with s = 1/sqrt(fan_in) per layer."""
    if activation not in ACTIVATIONS:
        raise ContractError(f"unknown activation {activation!r}")
    if input_dim < 1 or output_dim < 1 or hidden_dim < 1 or depth < 0:
        raise DimensionError("net dimensions must be positive (depth may be 0)")
    rng = rng if rng is not None else np.random.default_rng()

    def uniform(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    blocks = [
        ResidualBlock(
            w1=uniform((hidden_dim, input_dim), input_dim),
            b1=uniform((hidden_dim,), input_dim),
            w2=uniform((input_dim, hidden_dim), hidden_dim),
        )
        for _ in range(depth)
    ]
    return ResidualNet(
        input_dim=input_dim,
        output_dim=output_dim,
        hidden_dim=hidden_dim,
        blocks=blocks,
        w_out=uniform((output_dim, input_dim), input_dim),
        b_out=uniform((output_dim,), input_dim),
        activation=activation,
    )


@dataclass
class ForwardTape:
    """Activation record sufficient for an exact backward pass."""

    net: ResidualNet
    version: int
    x_in: list[np.ndarray] = field(default_factory=list)  # block inputs
    z: list[np.ndarray] = field(default_factory=list)  # block pre-activations
    x_last: np.ndarray | None = None  # head input


def forward(net: ResidualNet, x: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Run the net on a (B, d_in) batch, recording a tape for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(
            f"expected input of shape (B, {net.input_dim}), got {x.shape}"
        )
    act, _ = ACTIVATIONS[net.activation]
    tape = ForwardTape(net=net, version=net.version)
    for blk in net.blocks:
        tape.x_in.append(x)
        z = x @ blk.w1.T + blk.b1
        tape.z.append(z)
        x = x + act(z) @ blk.w2.T
    tape.x_last = x
    y = x @ net.w_out.T + net.b_out
    if not np.isfinite(y).all():
        raise NumericError("non-finite values in forward output")
    return y, tape


def backward(
    net: ResidualNet, tape: ForwardTape, d_y: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate d_y through the taped forward pass.

    Returns (parameter gradients in `net.parameters()` order, gradient with
    respect to the input batch).
    """
    if tape.net is not net or tape.version != net.version:
        raise ContractError("stale tape: parameters changed since forward")
    d_y = np.asarray(d_y, dtype=np.float64)
    if d_y.shape != (tape.x_last.shape[0], net.output_dim):
        raise DimensionError(
            f"expected upstream gradient of shape "
            f"({tape.x_last.shape[0]}, {net.output_dim}), got {d_y.shape}"
        )
    _, act_prime = ACTIVATIONS[net.activation]

    d_w_out = d_y.T @ tape.x_last
    d_b_out = d_y.sum(axis=0)
    d_x = d_y @ net.w_out

    block_grads: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for blk, x_in, z in zip(
        reversed(net.blocks), reversed(tape.x_in), reversed(tape.z)
    ):
        a = ACTIVATIONS[net.activation][0](z)
        d_w2 = d_x.T @ a
        d_a = d_x @ blk.w2
        d_z = d_a * act_prime(z)
        d_w1 = d_z.T @ x_in
        d_b1 = d_z.sum(axis=0)
        d_x = d_x + d_z @ blk.w1
        block_grads.append((d_w1, d_b1, d_w2))

    grads: list[np.ndarray] = []
    for d_w1, d_b1, d_w2 in reversed(block_grads):
        grads.extend((d_w1, d_b1, d_w2))
    grads.extend((d_w_out, d_b_out))
    return grads, d_x


def loss_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements, with gradient wrt predictions."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    value = float(np.mean(diff * diff))
    if not np.isfinite(value):
        raise NumericError("non-finite MSE value")
    return value, 2.0 * diff / diff.size


def loss_softmax_ce(
    logits: np.ndarray, classes: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy for integer class targets.

    The returned gradient is (softmax - onehot)/B, so every row sums to zero.
    """
    logits = np.asarray(logits, dtype=np.float64)
    classes = np.asarray(classes, dtype=np.int64)
    if logits.ndim != 2 or classes.shape != (logits.shape[0],):
        raise DimensionError(
            f"expected (B, M) logits and (B,) classes, got {logits.shape} "
            f"and {classes.shape}"
        )
    n, m = logits.shape
    if classes.size and (classes.min() < 0 or classes.max() >= m):
        raise DimensionError(f"class index out of range for {m} logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    log_probs = shifted - np.log(total)[:, None]
    value = float(-log_probs[np.arange(n), classes].mean())
    if not np.isfinite(value):
        raise NumericError("non-finite cross-entropy value")
    d_logits = exp / total[:, None]
    d_logits[np.arange(n), classes] -= 1.0
    return value, d_logits / n


@dataclass
class OptimizerState:
    """Gradient-descent state with decoupled weight decay.

    `weight_decay` is the coefficient of the squared-norm penalty on the
    parameters, applied as an extra -lr * 2 * wd * p term at each step
    (decoupled from the adaptive moments for the adam kind).
    """

    kind: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0.0:
            raise ContractError("learning_rate must be > 0")
        if self.weight_decay < 0.0:
            raise ContractError("weight_decay must be >= 0")


def optimizer_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState
) -> None:
    """Update `params` in place from `grads` according to `state`."""
    if len(params) != len(grads):
        raise DimensionError("params/grads length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    lr = state.learning_rate
    wd = state.weight_decay
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= lr * (g + 2.0 * wd * p)
    else:
        if state.m is None:
            state.m = [np.zeros_like(p) for p in params]
            state.v = [np.zeros_like(p) for p in params]
        state.step_count += 1
        t = state.step_count
        b1, b2 = state.beta1, state.beta2
        bias1 = 1.0 - b1**t
        bias2 = 1.0 - b2**t
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            step = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
            p -= lr * (step + 2.0 * wd * p)
    for p in params:
        if not np.isfinite(p).all():
            raise NumericError("non-finite parameter after update")


def gradient_check(
    net: ResidualNet,
    x: np.ndarray,
    loss: str,
    target: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences.

    Returns max over parameter entries of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    Cost is two forward passes per parameter, so the net must be small.
    """
    if net.parameter_count() > 500:
        raise ContractError("gradient_check is limited to nets with <= 500 parameters")
    if loss == "mse":
        loss_fn = lambda y: loss_mse(y, target)
    elif loss == "softmax":
        loss_fn = lambda y: loss_softmax_ce(y, target)
    else:
        raise ContractError(f"unknown loss kind {loss!r}")

    y, tape = forward(net, x)
    _, d_y = loss_fn(y)
    grads, _ = backward(net, tape, d_y)

    worst = 0.0
    for p, g in zip(net.parameters(), grads):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            f_plus = loss_fn(forward(net, x)[0])[0]
            p[idx] = orig - eps
            f_minus = loss_fn(forward(net, x)[0])[0]
            p[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = g[idx]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    return worst
