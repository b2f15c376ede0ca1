"""Central-difference verification of every backward rule.

Each op is wrapped into a scalar probe (random fixed linear functionals
built from ops whose own rules are checked independently), the analytic
gradient of every input is compared elementwise against central finite
differences, and the worst normalized error is reported. The error metric
is |analytic - numeric| / max(|analytic|, |numeric|, 1), i.e. relative for
large gradients and absolute near zero, which keeps the finite-difference
noise floor (~1e-11 at eps=1e-5) far below the pass thresholds.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    add,
    affine,
    backward,
    conv1d_dilated_causal,
    cross_entropy,
    global_avg_pool_time,
    matmul,
    relu,
    scale,
    softmax_rows,
    sum_all,
    transpose,
)
from .model import TcanConfig, attention_block_forward, AttentionBlockWeights, init_params, tcan_forward

__all__ = ["OP_KINDS", "GRADCHECK_THRESHOLD", "check_op", "run_suite", "toy_config"]

GRADCHECK_THRESHOLD = 1e-4
FD_EPS = 1e-5

OP_KINDS = (
    "conv1d_dilated_causal",
    "softmax_rows",
    "matmul",
    "transpose",
    "add",
    "relu",
    "affine",
    "global_avg_pool_time",
    "cross_entropy",
    "scale",
    "sum_all",
    "attention_block",
    "full_network",
)


def normalized_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(inputs: list[Tensor], build_loss, eps: float = FD_EPS) -> float:
    """Worst normalized error between backward() and central differences.

    ``build_loss`` must rebuild the scalar loss graph from the current
    contents of ``inputs`` each time it is called.
    """
    loss = build_loss()
    backward(loss)
    worst = 0.0
    for inp in inputs:
        analytic = inp.grad if inp.grad is not None else np.zeros_like(inp.data)
        numeric = np.empty_like(inp.data)
        flat = inp.data.ravel()
        num_flat = numeric.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = float(build_loss().data)
            flat[i] = saved - eps
            f_minus = float(build_loss().data)
            flat[i] = saved
            num_flat[i] = (f_plus - f_minus) / (2.0 * eps)
        worst = max(worst, normalized_error(analytic, numeric))
    return worst


def _probe_matrix(out_builder, rows: int, cols: int, rng: np.random.Generator):
    """sum(a @ out @ b) for fixed random a, b: a full-support scalar readout."""
    left = Tensor(rng.standard_normal((1, rows)))
    right = Tensor(rng.standard_normal((cols, 1)))
    return lambda: sum_all(matmul(matmul(left, out_builder()), right))


def _probe_vector(out_builder, n: int, rng: np.random.Generator):
    weights = Tensor(rng.standard_normal((1, n)))
    zero = Tensor(np.zeros(1))
    return lambda: sum_all(affine(out_builder(), weights, zero))


def toy_config(size: str = "small") -> TcanConfig:
    if size == "small":
        return TcanConfig(input_dim=5, channels=8, kernel_size=6, dilations=(1, 2),
                          attention_reduced_dim=2, classifier_hidden=16)
    if size == "tiny":
        return TcanConfig(input_dim=3, channels=4, kernel_size=3, dilations=(1, 2),
                          attention_reduced_dim=2, classifier_hidden=8)
    raise ValueError(f"unknown size {size!r}")


def check_op(kind: str, size: str = "small", seed: int = 0) -> float:
    """Finite-difference check for one op kind; returns the worst error."""
    rng = np.random.default_rng(seed)
    big = 8 if size == "small" else 4

    def rand_t(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    if kind == "conv1d_dilated_causal":
        x = rand_t(3, big)
        w = rand_t(2, 3, 3)
        b = rand_t(2)
        probe = _probe_matrix(lambda: conv1d_dilated_causal(x, w, b, 2), 2, big, rng)
        return check_gradients([x, w, b], probe)
    if kind == "softmax_rows":
        x = rand_t(4, big)
        probe = _probe_matrix(lambda: softmax_rows(x), 4, big, rng)
        return check_gradients([x], probe)
    if kind == "matmul":
        a = rand_t(4, 3)
        b = rand_t(3, big)
        probe = _probe_matrix(lambda: matmul(a, b), 4, big, rng)
        return check_gradients([a, b], probe)
    if kind == "transpose":
        a = rand_t(3, big)
        probe = _probe_matrix(lambda: transpose(a), big, 3, rng)
        return check_gradients([a], probe)
    if kind == "add":
        a = rand_t(4, big)
        b = rand_t(4, big)
        probe = _probe_matrix(lambda: add(a, b), 4, big, rng)
        return check_gradients([a, b], probe)
    if kind == "relu":
        # offset keeps values away from the kink, where finite differences are invalid
        a = Tensor(rng.standard_normal((4, big)) + np.sign(rng.standard_normal((4, big))) * 0.5,
                   requires_grad=True)
        probe = _probe_matrix(lambda: relu(a), 4, big, rng)
        return check_gradients([a], probe)
    if kind == "affine":
        x = rand_t(big)
        w = rand_t(3, big)
        b = rand_t(3)
        probe = _probe_vector(lambda: affine(x, w, b), 3, rng)
        return check_gradients([x, w, b], probe)
    if kind == "global_avg_pool_time":
        x = rand_t(4, big)
        probe = _probe_vector(lambda: global_avg_pool_time(x), 4, rng)
        return check_gradients([x], probe)
    if kind == "cross_entropy":
        z = rand_t(5)
        return check_gradients([z], lambda: cross_entropy(z, 2))
    if kind == "scale":
        a = rand_t(3, big)
        probe = _probe_matrix(lambda: scale(a, -1.7), 3, big, rng)
        return check_gradients([a], probe)
    if kind == "sum_all":
        a = rand_t(3, big)
        return check_gradients([a], lambda: sum_all(a))
    if kind == "attention_block":
        c, r, t = (6, 2, big) if size == "small" else (4, 2, big)
        x = rand_t(c, t)
        weights = AttentionBlockWeights(w_g=rand_t(r, c), w_h=rand_t(r, c), w_k=rand_t(c, c))
        probe = _probe_matrix(lambda: attention_block_forward(x, weights), c, t, rng)
        return check_gradients([x, weights.w_g, weights.w_h, weights.w_k], probe)
    if kind == "full_network":
        config = toy_config(size)
        t = 20 if size == "small" else 10
        params = init_params(config, seed + 1)
        feats = Tensor(rng.standard_normal((config.input_dim, t)), requires_grad=True)
        inputs = [feats] + list(params.values())
        return check_gradients(inputs, lambda: cross_entropy(tcan_forward(feats, config, params), 2))
    raise ValueError(f"unknown op kind {kind!r}")


def run_suite(size: str = "small", corrupt_op: str | None = None,
              seed: int = 0) -> dict[str, float]:
    """Check every op kind; returns kind -> worst error.

    ``corrupt_op`` injects a deliberate error into that op's result (a
    negative control for the reporting path).
    """
    if corrupt_op is not None and corrupt_op not in OP_KINDS:
        raise ValueError(f"unknown op kind {corrupt_op!r}")
    results = {}
    for kind in OP_KINDS:
        err = check_op(kind, size=size, seed=seed)
        if kind == corrupt_op:
            err += 1.0
        results[kind] = err
    return results
