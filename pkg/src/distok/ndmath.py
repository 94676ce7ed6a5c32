"""Dense-network math: two-layer MLPs with exact reverse-mode gradients,
cosine similarity, softmax/KL, Adam, cosine LR schedule, and a
finite-difference gradient checker.

Everything runs in float64.  No hidden global state: optimizer state lives
in ``AdamState``, RNGs are caller-supplied.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateInputError, NonFiniteError


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)


@dataclass
class Mlp2:
    """Two-layer perceptron y = W2 tanh(W1 x + b1) + b2."""

    layer1: DenseLayer
    layer2: DenseLayer

    @property
    def in_dim(self):
        return self.layer1.weight.shape[1]

    @property
    def out_dim(self):
        return self.layer2.weight.shape[0]


def init_mlp(in_dim, hidden_dim, out_dim, rng):
    """Seeded init with 1/sqrt(fan_in) weight scale and zero biases."""
    w1 = rng.standard_normal((hidden_dim, in_dim)) / math.sqrt(in_dim)
    w2 = rng.standard_normal((out_dim, hidden_dim)) / math.sqrt(hidden_dim)
    return Mlp2(
        DenseLayer(w1, np.zeros(hidden_dim)),
        DenseLayer(w2, np.zeros(out_dim)),
    )


def mlp_params(net):
    """Parameter arrays in a fixed order (shared with gradients and Adam)."""
    return [net.layer1.weight, net.layer1.bias, net.layer2.weight, net.layer2.bias]


def zeros_like_params(params):
    return [np.zeros_like(p) for p in params]


def mlp_forward(net, x):
    """Returns (output, cache). Cache feeds mlp_backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != net.in_dim:
        raise ValueError(f"input length {x.shape[0]} != layer1.in {net.in_dim}")
    y, h = kernels.mlp2_forward(
        net.layer1.weight, net.layer1.bias, net.layer2.weight, net.layer2.bias, x
    )
    return y, (x, h)


def mlp_backward(net, cache, dy):
    """Exact reverse-mode gradients of mlp_forward.

    Returns (dx, [dW1, db1, dW2, db2]) in mlp_params order.
    """
    x, h = cache
    dx, dw1, db1, dw2, db2 = kernels.mlp2_backward(
        net.layer1.weight, net.layer1.bias, net.layer2.weight, net.layer2.bias,
        x, h, np.asarray(dy, dtype=np.float64),
    )
    return dx, [dw1, db1, dw2, db2]


# ------------------------------------------------------------------- cosines

def cosine_similarity(a, b):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def cosine_similarity_grad(a, b):
    """Returns (cos, d cos/d a, d cos/d b)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector")
    c = float(np.dot(a, b) / (na * nb))
    da = b / (na * nb) - c * a / (na * na)
    db = a / (na * nb) - c * b / (nb * nb)
    return c, da, db


# ------------------------------------------------------------ softmax and KL

def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def kl_divergence(p, q, epsilon=1e-8):
    """KL(p || q) with epsilon smoothing of q (added, then renormalized).

    0 * log 0 is taken as 0.  Result is clamped at 0 against float noise.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("negative probability entry")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    qs = (q + epsilon) / (q + epsilon).sum()
    mask = p > 0
    val = float(np.sum(p[mask] * np.log(p[mask] / qs[mask])))
    return max(0.0, val)


# ---------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(params):
    return AdamState(zeros_like_params(params), zeros_like_params(params))


def adam_step(params, grads, state, rate):
    """Bias-corrected Adam update, in place on params."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter #{i}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= rate * mhat / (np.sqrt(vhat) + state.epsilon)


# ------------------------------------------------------------------ schedule

@dataclass
class LrSchedule:
    initial_rate: float
    total_steps: int


def cosine_lr(schedule, step):
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    return 0.5 * schedule.initial_rate * (1.0 + math.cos(math.pi * step / schedule.total_steps))


# -------------------------------------------------------- gradient checking

@dataclass
class FdReport:
    max_rel_err: float
    worst_param: int
    worst_index: tuple
    analytic: float
    numeric: float
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance

    def __str__(self):
        return (
            f"gradcheck {'PASS' if self.passed else 'FAIL'}: "
            f"max rel err {self.max_rel_err:.3e} (tol {self.tolerance:.0e}) "
            f"at param #{self.worst_param}{list(self.worst_index)} "
            f"analytic={self.analytic:.6e} numeric={self.numeric:.6e}"
        )


def finite_diff_check(loss_fn, params, analytic_grads, h=1e-5, tolerance=1e-4,
                      abs_switch=1e-4):
    """Central-difference check of analytic_grads against loss_fn.

    ``loss_fn()`` must read the arrays in ``params`` in place and return a
    scalar.  Coordinates where both gradients are below ``abs_switch`` in
    magnitude are compared absolutely: at h=1e-5 the difference quotient
    carries ~1e-11 of cancellation noise, so relative error is
    unattainable there no matter how exact the analytic gradient is, while
    an absolute bound at ``tolerance`` still catches any real error."""
    worst = FdReport(0.0, -1, (), 0.0, 0.0, tolerance)
    for pi, p in enumerate(params):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            fp = loss_fn()
            p[idx] = orig - h
            fm = loss_fn()
            p[idx] = orig
            numeric = (fp - fm) / (2 * h)
            analytic = float(analytic_grads[pi][idx])
            denom = max(abs(analytic), abs(numeric))
            err = abs(analytic - numeric) if denom < abs_switch \
                else abs(analytic - numeric) / denom
            if err > worst.max_rel_err:
                worst = FdReport(err, pi, idx, analytic, numeric, tolerance)
    return worst
