"""
A small dense numeric kernel built on NumPy and SciPy.

It holds the pieces every model component shares: the affine map and
activations, learnable parameter storage with Adam state, seeded random
streams, and a central-difference checker for the hand-derived gradients.
Dense matrices are plain row-major `float64` NumPy arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

from domain.errors import GradientError, ShapeError

log = logging.getLogger(__name__)

# Named sub-streams of a run seed. Each randomized step draws from its own
# stream so adding draws to one never shifts another.
INIT_STREAM = 1
SHUFFLE_STREAM = 2
NEGATIVE_STREAM = 3
SPLIT_STREAM = 4
SYNTHETIC_STREAM = 5
CHECK_STREAM = 6

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def as_dense(values, name: str = "matrix") -> np.ndarray:
    """Return `values` as a finite 2-D float64 array, or raise ShapeError."""
    array = np.array(values, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {array.shape}.")
    if not np.all(np.isfinite(array)):
        raise ShapeError(f"{name} contains non-finite values.")
    return array


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return W @ x + b.

    Args:
        W: Weight matrix of shape (out, in).
        x: Input vector of length `in`.
        b: Bias vector of length `out`.

    Raises:
        ShapeError: If the shapes do not conform.
    """
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or x.shape != (W.shape[1],) or b.shape != (W.shape[0],):
        raise ShapeError(
            f"affine shapes do not conform: W{W.shape}, x{x.shape}, b{b.shape}."
        )
    return W @ x + b


def sigmoid(x) -> np.ndarray:
    """Elementwise logistic function 1 / (1 + e^-x), stable for large |x|."""
    return expit(np.asarray(x, dtype=np.float64))


def softplus(x) -> np.ndarray:
    """Elementwise ln(1 + e^x)."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def softplus_inverse(y) -> np.ndarray:
    """Inverse of softplus for y > 0: ln(e^y - 1)."""
    return np.log(np.expm1(np.asarray(y, dtype=np.float64)))


def cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-pair binary cross-entropy of sigmoid(logits) against labels."""
    return labels * np.logaddexp(0.0, -logits) + (1.0 - labels) * np.logaddexp(
        0.0, logits
    )


@dataclass(frozen=True)
class RngStream:
    """A seeded, platform-independent random stream.

    Generators are NumPy PCG64 instances seeded through `SeedSequence`, so
    identical seeds give identical sequences on every platform.
    """

    seed: int
    algorithm: str = "PCG64"

    def generator(self, *streams: int) -> np.random.Generator:
        """Return a fresh generator for this seed and optional sub-stream keys."""
        if self.seed < 0 or any(s < 0 for s in streams):
            raise ValueError("Seeds and stream keys must be unsigned integers.")
        entropy = [self.seed, *streams] if streams else self.seed
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass
class ParamTensor:
    """A learnable parameter with its gradient and Adam moments."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        for name in ("grad", "m", "v"):
            current = getattr(self, name)
            if current is None:
                setattr(self, name, np.zeros_like(self.value))
            else:
                current = np.array(current, dtype=np.float64)
                if current.shape != self.value.shape:
                    raise ShapeError(
                        f"ParamTensor.{name} has shape {current.shape}, "
                        f"expected {self.value.shape}."
                    )
                setattr(self, name, current)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def adam_step(
    p: ParamTensor,
    lr: float = ADAM_LR,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> ParamTensor:
    """Apply one bias-corrected Adam update to `p` in place.

    The gradient is left untouched; the caller clears it. An all-zero
    gradient leaves the parameter, its moments and its step count alone.

    Raises:
        ValueError: If a hyperparameter is out of range.
        GradientError: If the gradient holds a non-finite entry.
    """
    if not lr > 0 or not 0 < beta1 < 1 or not 0 < beta2 < 1 or not eps > 0:
        raise ValueError(
            f"Invalid Adam hyperparameters lr={lr}, beta1={beta1}, "
            f"beta2={beta2}, eps={eps}."
        )
    if not np.all(np.isfinite(p.grad)):
        raise GradientError("Adam step received a non-finite gradient.")
    if not np.any(p.grad):
        return p

    p.step_count += 1
    p.m *= beta1
    p.m += (1.0 - beta1) * p.grad
    p.v *= beta2
    p.v += (1.0 - beta2) * (p.grad * p.grad)

    m_hat = p.m / (1.0 - beta1**p.step_count)
    v_hat = p.v / (1.0 - beta2**p.step_count)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, ParamTensor],
    h: float = 1e-5,
    samples: int = 50,
    rng: RngStream | None = None,
) -> float:
    """Compare analytic gradients with central differences.

    `loss_fn` evaluates the loss at the current parameter values and writes
    the analytic gradient into each `ParamTensor.grad`. It is called once
    to capture the analytic gradient, then twice per sampled coordinate.
    Parameter values and gradients are restored before returning.

    Args:
        loss_fn: Zero-argument loss evaluation that also populates grads.
        params: The parameters to perturb, by name.
        h: Central-difference step.
        samples: Number of coordinates drawn (with replacement) across all params.
        rng: Stream choosing the coordinates.

    Returns:
        The largest relative error |a - n| / max(|a|, |n|, 1e-8) seen.

    Raises:
        GradientError: If the loss is not finite at any evaluation.
    """
    if not h > 0:
        raise ValueError("Finite-difference step must be positive.")
    rng = rng or RngStream(0)
    generator = rng.generator(CHECK_STREAM)

    def evaluate() -> float:
        value = float(loss_fn())
        if not np.isfinite(value):
            raise GradientError(f"Loss is not finite ({value}) during gradient check.")
        return value

    evaluate()
    names = sorted(params)
    analytic = {name: params[name].grad.copy() for name in names}
    sizes = np.array([params[name].value.size for name in names])
    total = int(sizes.sum())
    if total == 0 or samples <= 0:
        return 0.0
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat in generator.integers(0, total, size=samples):
        slot = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[slot]
        tensor = params[name]
        index = np.unravel_index(int(flat - offsets[slot]), tensor.shape)

        original = tensor.value[index]
        tensor.value[index] = original + h
        f_plus = evaluate()
        tensor.value[index] = original - h
        f_minus = evaluate()
        tensor.value[index] = original

        numeric = (f_plus - f_minus) / (2.0 * h)
        exact = analytic[name][index]
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        if error > worst:
            log.debug(
                f"Gradient check {name}{index}: analytic={exact:.6e}, "
                f"numeric={numeric:.6e}, relative error={error:.3e}"
            )
            worst = error

    for name in names:
        params[name].grad[...] = analytic[name]
    return worst
