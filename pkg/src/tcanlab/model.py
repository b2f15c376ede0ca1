"""The TCAN network: dilated causal conv blocks, per-block self-attention,
global average pooling over time, and a two-layer classifier.

Disabling attention yields the plain-TCN ablation with an identical
parameter layout minus the attention weights. Checkpoints are a versioned
text header (config, parameter manifest with byte offsets) followed by raw
little-endian float64 arrays, and round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import (
    Tensor,
    add,
    affine,
    conv1d_dilated_causal,
    global_avg_pool_time,
    matmul,
    relu,
    softmax_rows,
    transpose,
)

__all__ = [
    "TcanConfig",
    "AttentionBlockWeights",
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointCompatibilityError",
    "attention_block_forward",
    "init_params",
    "param_count",
    "tcan_sequence_output",
    "tcan_forward",
    "receptive_field",
    "config_hash",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = "TCANCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TcanConfig:
    input_dim: int = 40
    channels: int = 64
    kernel_size: int = 6
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    attention_enabled: bool = True
    attention_reduced_dim: int = 8
    classifier_hidden: int = 64
    n_classes: int = 5

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ValueError(f"dilations must be non-empty and >= 1, got {self.dilations}")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if not 1 <= self.attention_reduced_dim <= self.channels:
            raise ValueError("attention_reduced_dim must be in [1, channels]")
        for name in ("input_dim", "channels", "classifier_hidden", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TcanConfig":
        return cls(**d)


@dataclass
class AttentionBlockWeights:
    """1x1 transforms of one attention block: two reduced-dim maps and a full-dim map."""

    w_g: Tensor  # (reduced, channels)
    w_h: Tensor  # (reduced, channels)
    w_k: Tensor  # (channels, channels)


def attention_block_forward(x: Tensor, weights: AttentionBlockWeights,
                            collect_attention: list | None = None) -> Tensor:
    """Self-attention with a residual connection.

    A = softmax_rows(G^T H) with G = w_g x and H = w_h x; the output is
    x + K A with K = w_k x, so each attention row is a probability vector
    and a zero w_k makes the block an exact identity.
    """
    g = matmul(weights.w_g, x)
    h = matmul(weights.w_h, x)
    k = matmul(weights.w_k, x)
    attn = softmax_rows(matmul(transpose(g), h))
    if collect_attention is not None:
        collect_attention.append(attn)
    return add(x, matmul(k, attn))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_params(config: TcanConfig, seed: int) -> dict[str, Tensor]:
    """Fan-in scaled uniform weights, zero biases; keyed by layer-qualified names."""
    rng = np.random.default_rng(seed)
    c, k, r = config.channels, config.kernel_size, config.attention_reduced_dim
    params: dict[str, Tensor] = {}
    params["in_proj.w"] = _uniform(rng, (c, config.input_dim, 1), config.input_dim)
    params["in_proj.b"] = _zeros(c)
    for i in range(len(config.dilations)):
        params[f"block{i}.conv.w"] = _uniform(rng, (c, c, k), c * k)
        params[f"block{i}.conv.b"] = _zeros(c)
        if config.attention_enabled:
            params[f"block{i}.attn.wg"] = _uniform(rng, (r, c), c)
            params[f"block{i}.attn.wh"] = _uniform(rng, (r, c), c)
            params[f"block{i}.attn.wk"] = _uniform(rng, (c, c), c)
    params["fc1.w"] = _uniform(rng, (config.classifier_hidden, c), c)
    params["fc1.b"] = _zeros(config.classifier_hidden)
    params["fc2.w"] = _uniform(rng, (config.n_classes, config.classifier_hidden),
                               config.classifier_hidden)
    params["fc2.b"] = _zeros(config.n_classes)
    return params


def param_count(config: TcanConfig) -> int:
    """Closed-form parameter count for a config."""
    c, k, r = config.channels, config.kernel_size, config.attention_reduced_dim
    n = c * config.input_dim + c  # input projection
    per_block = c * c * k + c
    if config.attention_enabled:
        per_block += 2 * r * c + c * c
    n += per_block * len(config.dilations)
    n += config.classifier_hidden * c + config.classifier_hidden
    n += config.n_classes * config.classifier_hidden + config.n_classes
    return n


def _block_attention(params: dict[str, Tensor], i: int) -> AttentionBlockWeights:
    return AttentionBlockWeights(
        w_g=params[f"block{i}.attn.wg"],
        w_h=params[f"block{i}.attn.wh"],
        w_k=params[f"block{i}.attn.wk"],
    )


def tcan_sequence_output(features, config: TcanConfig, params: dict[str, Tensor],
                         collect_attention: list | None = None) -> Tensor:
    """Run the convolution/attention stack, returning the channels x time tensor
    that feeds the pooling stage."""
    if isinstance(features, Tensor):
        x = features
    else:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != config.input_dim:
            raise ValueError(
                f"features must be frames x {config.input_dim}, got {features.shape}"
            )
        x = Tensor(features.T.copy())
    h = conv1d_dilated_causal(x, params["in_proj.w"], params["in_proj.b"], 1)
    for i, d in enumerate(config.dilations):
        h = conv1d_dilated_causal(h, params[f"block{i}.conv.w"], params[f"block{i}.conv.b"], d)
        h = relu(h)
        if config.attention_enabled:
            h = attention_block_forward(h, _block_attention(params, i), collect_attention)
    return h


def tcan_forward(features, config: TcanConfig, params: dict[str, Tensor],
                 collect_attention: list | None = None) -> Tensor:
    """Full forward pass; returns the raw class logits."""
    h = tcan_sequence_output(features, config, params, collect_attention)
    pooled = global_avg_pool_time(h)
    hidden = relu(affine(pooled, params["fc1.w"], params["fc1.b"]))
    return affine(hidden, params["fc2.w"], params["fc2.b"])


def receptive_field(config: TcanConfig) -> int:
    """1 + sum of (k-1)*d over the conv stack, in frames.

    Only meaningful with attention disabled; the attention blocks see all
    time steps, so the stack with attention has no finite bound.
    """
    if config.attention_enabled:
        raise ValueError("receptive_field is only defined for attention_enabled=False")
    k = config.kernel_size
    return 1 + sum((k - 1) * d for d in config.dilations)


# ---------------------------------------------------------------------------
# checkpoints


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    """Corrupt or unreadable checkpoint; ``field`` names the offending part."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class CheckpointCompatibilityError(CheckpointError):
    """The checkpoint was written for a different model config."""


def config_hash(config: TcanConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def save_checkpoint(path, params: dict[str, Tensor], config: TcanConfig,
                    metadata: dict | None = None) -> None:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in params.items():
        raw = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "metadata": metadata or {},
        "params": manifest,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {len(header_bytes)}\n".encode())
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path, expected_config: TcanConfig | None = None):
    """Read a checkpoint; returns (params, config, metadata).

    All structure is validated before any tensor is built, so a corrupt
    file never yields partial state. If ``expected_config`` is given, its
    hash must match the stored one.
    """
    with open(path, "rb") as fh:
        first = fh.readline(256)
        parts = first.decode(errors="replace").split()
        if len(parts) != 3 or parts[0] != CHECKPOINT_MAGIC:
            raise CheckpointFormatError("magic", "not a checkpoint file")
        if parts[1] != str(CHECKPOINT_VERSION):
            raise CheckpointFormatError(
                "version", f"unsupported version {parts[1]}, expected {CHECKPOINT_VERSION}"
            )
        try:
            header_len = int(parts[2])
        except ValueError:
            raise CheckpointFormatError("header_length", f"not an integer: {parts[2]!r}") from None
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise CheckpointFormatError(
                "header", f"declares {header_len} bytes, got {len(header_bytes)}"
            )
        try:
            header = json.loads(header_bytes)
        except json.JSONDecodeError as exc:
            raise CheckpointFormatError("header", f"invalid JSON: {exc}") from None
        for key in ("config", "config_hash", "metadata", "params", "payload_bytes"):
            if key not in header:
                raise CheckpointFormatError(key, "missing from header")
        try:
            config = TcanConfig.from_dict(header["config"])
        except (TypeError, ValueError) as exc:
            raise CheckpointFormatError("config", str(exc)) from None
        if config_hash(config) != header["config_hash"]:
            raise CheckpointFormatError("config_hash", "does not match the stored config")
        if expected_config is not None and config_hash(expected_config) != header["config_hash"]:
            raise CheckpointCompatibilityError(
                "checkpoint was trained with a different config "
                f"(stored hash {header['config_hash'][:12]}..., "
                f"requested {config_hash(expected_config)[:12]}...)"
            )
        declared = header["payload_bytes"]
        if not isinstance(declared, int) or declared < 0:
            raise CheckpointFormatError("payload_bytes", f"not a byte count: {declared!r}")

        payload = fh.read(declared + 1)
        if len(payload) != declared:
            raise CheckpointFormatError(
                "payload", f"declares {declared} bytes, got {len(payload)}"
            )

    params: dict[str, Tensor] = {}
    for entry in header["params"]:
        try:
            name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointFormatError("params", f"bad manifest entry {entry!r}: {exc}") from None
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset < 0 or offset + nbytes > len(payload):
            raise CheckpointFormatError(
                name, f"array [{offset}, {offset + nbytes}) exceeds payload of {len(payload)} bytes"
            )
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        params[name] = Tensor(arr.reshape(shape).copy(), requires_grad=True)

    return params, config, header["metadata"]
