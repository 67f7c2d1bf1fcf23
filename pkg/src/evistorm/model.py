"""Spatiotemporal encoder-decoder for frame-sequence nowcasting.

The architecture is a compact axis-factorized attention transformer:
each input frame cell is embedded to d_model features, a sinusoidal
encoding of the temporal position is added, and a stack of blocks applies
single-head attention separately along the time, height, and width axes
(other axes batched), averages the three axis outputs, and follows with
the usual residual + layer-norm + feed-forward structure. A linear
decoder maps the last time step's features to the forecast frames: one
channel per lead for the deterministic head, four channels per lead for
the evidential head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import (
    Tensor,
    as_tensor,
    matmul,
    moveaxis,
    no_grad,
    reshape,
    softmax,
    sqrt,
    square,
    swap_last_axes,
    tanh,
)

HEADS = ("deterministic", "evidential")
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class ModelConfig:
    d_model: int = 32
    n_blocks: int = 2
    d_k: int = 16
    ffn_width: int = 64
    in_steps: int = 13
    out_steps: int = 12
    frame_h: int = 32
    frame_w: int = 32
    head: str = "deterministic"
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("d_model", "n_blocks", "d_k", "ffn_width", "in_steps",
                     "out_steps", "frame_h", "frame_w"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.d_model % 2 != 0:
            raise ConfigError("d_model must be even (sin/cos channel pairing)")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def out_channels(self) -> int:
        return 4 if self.head == "evidential" else 1


def positional_encoding(t_steps: int, height: int, width: int, d_model: int) -> np.ndarray:
    """Sinusoidal encoding of the temporal index, broadcast over space.

    pe[pos, :, :, 2i] = sin(pos / 10000^(2i/d_model)) and the matching
    cosine on odd channels; all entries lie in [-1, 1].
    """
    if d_model % 2 != 0:
        raise ConfigError("d_model must be even")
    pos = np.arange(t_steps, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d_model)
    pe = np.empty((t_steps, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return np.broadcast_to(pe[:, None, None, :], (t_steps, height, width, d_model)).copy()


def layer_norm(x: Tensor, eps: float = 1e-10) -> Tensor:
    """Normalize each feature vector (last axis) to mean 0, variance 1."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = square(centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(var + eps)


def gelu(x: Tensor) -> Tensor:
    """Smooth GELU (tanh form)."""
    return 0.5 * x * (tanh(_GELU_C * (x + 0.044715 * x * x * x)) + 1.0)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no generator given."""
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


def axis_attention(q: Tensor, k: Tensor, v: Tensor, axis: int, d_k: int) -> Tensor:
    """Scaled dot-product attention along one axis of a [T,H,W,d_k] volume.

    The remaining two volume axes are treated as batch. Output has the
    same layout as the inputs.
    """
    if not 0 <= axis <= 2:
        raise ShapeError(f"attention axis must be 0 (T), 1 (H) or 2 (W), got {axis}")
    qm = moveaxis(q, axis, 2) if axis != 2 else q
    km = moveaxis(k, axis, 2) if axis != 2 else k
    vm = moveaxis(v, axis, 2) if axis != 2 else v
    scores = matmul(qm, swap_last_axes(km)) * (1.0 / math.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    out = matmul(weights, vm)
    return moveaxis(out, 2, axis) if axis != 2 else out


class CuboidBlock:
    """Tri-axis attention + residual/norm + feed-forward + residual/norm."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, prefix: str):
        d, dk, f = config.d_model, config.d_k, config.ffn_width
        self.config = config
        self.params: dict[str, Tensor] = {
            f"{prefix}.wq": _glorot(rng, (d, dk)),
            f"{prefix}.wk": _glorot(rng, (d, dk)),
            f"{prefix}.wv": _glorot(rng, (d, dk)),
            f"{prefix}.wo": _glorot(rng, (dk, d)),
            f"{prefix}.bo": _zeros((d,)),
            f"{prefix}.w1": _glorot(rng, (d, f)),
            f"{prefix}.b1": _zeros((f,)),
            f"{prefix}.w2": _glorot(rng, (f, d)),
            f"{prefix}.b2": _zeros((d,)),
        }
        self._prefix = prefix

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self._prefix}.{name}"]

    def project_qkv(self, h: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        t, hh, ww, d = h.shape
        flat = reshape(h, (t * hh * ww, d))
        out_shape = (t, hh, ww, self.config.d_k)
        return (
            reshape(matmul(flat, self._p("wq")), out_shape),
            reshape(matmul(flat, self._p("wk")), out_shape),
            reshape(matmul(flat, self._p("wv")), out_shape),
        )

    def attention(self, h: Tensor, axis: int) -> Tensor:
        """Single-axis attention on freshly projected Q, K, V."""
        q, k, v = self.project_qkv(h)
        return axis_attention(q, k, v, axis, self.config.d_k)

    def mixed_attention(self, h: Tensor) -> Tensor:
        """Average of the per-axis attention outputs (one shared Q, K, V)."""
        q, k, v = self.project_qkv(h)
        d_k = self.config.d_k
        return (
            axis_attention(q, k, v, 0, d_k)
            + axis_attention(q, k, v, 1, d_k)
            + axis_attention(q, k, v, 2, d_k)
        ) * (1.0 / 3.0)

    def __call__(self, h: Tensor, dropout_active: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        cfg = self.config
        drop_rng = rng if dropout_active else None
        mixed = self.mixed_attention(h)
        t, hh, ww, _ = h.shape
        flat = reshape(mixed, (t * hh * ww, cfg.d_k))
        projected = reshape(matmul(flat, self._p("wo")), (t, hh, ww, cfg.d_model)) + self._p("bo")
        h1 = layer_norm(h + dropout(projected, cfg.dropout_rate, drop_rng))
        flat1 = reshape(h1, (t * hh * ww, cfg.d_model))
        hidden = gelu(matmul(flat1, self._p("w1")) + self._p("b1"))
        ffn_out = reshape(matmul(hidden, self._p("w2")), (t, hh, ww, cfg.d_model)) + self._p("b2")
        return layer_norm(h1 + dropout(ffn_out, cfg.dropout_rate, drop_rng))


class NowcastModel:
    """Embedding + positional encoding + attention blocks + linear decoder."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.params: dict[str, Tensor] = {
            "embed.w": _glorot(rng, (1, d)),
            "embed.b": _zeros((d,)),
        }
        self.blocks = [CuboidBlock(config, rng, f"block{i}") for i in range(config.n_blocks)]
        for block in self.blocks:
            self.params.update(block.params)
        out_width = config.out_channels * config.out_steps
        self.params["decode.w"] = _glorot(rng, (d, out_width))
        self.params["decode.b"] = _zeros((out_width,))
        self._pe = positional_encoding(config.in_steps, config.frame_h, config.frame_w, d)

    # -- pipeline pieces -------------------------------------------------
    def embed(self, frames) -> Tensor:
        """Per-cell affine map from scalar intensity to d_model features."""
        x = as_tensor(frames)
        t, hh, ww = x.shape
        flat = reshape(x, (t * hh * ww, 1))
        emb = matmul(flat, self.params["embed.w"]) + self.params["embed.b"]
        return reshape(emb, (t, hh, ww, self.config.d_model))

    def decode(self, h: Tensor) -> Tensor:
        """Project the final time step's features to the forecast frames.

        Returns [out_steps, H, W] for the deterministic head and
        [4, out_steps, H, W] (raw, unconstrained) for the evidential head.
        """
        cfg = self.config
        last = h[cfg.in_steps - 1]
        flat = reshape(last, (cfg.frame_h * cfg.frame_w, cfg.d_model))
        out = matmul(flat, self.params["decode.w"]) + self.params["decode.b"]
        grid = reshape(out, (cfg.frame_h, cfg.frame_w, cfg.out_channels, cfg.out_steps))
        chw = moveaxis(moveaxis(grid, 2, 0), 3, 1)  # -> [C, out_steps, H, W]
        return chw[0] if cfg.head == "deterministic" else chw

    def forward(self, frames, dropout_active: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Full pipeline on one [in_steps, H, W] sequence of values in [0,1]."""
        x = as_tensor(frames)
        cfg = self.config
        if x.shape != (cfg.in_steps, cfg.frame_h, cfg.frame_w):
            raise ShapeError(
                f"expected input shape {(cfg.in_steps, cfg.frame_h, cfg.frame_w)}, got {x.shape}"
            )
        h = self.embed(x) + Tensor(self._pe)
        for block in self.blocks:
            h = block(h, dropout_active=dropout_active, rng=rng)
        return self.decode(h)

    # -- inference conveniences -------------------------------------------
    def predict_frames(self, frames, dropout_active: bool = False,
                       rng: np.random.Generator | None = None) -> np.ndarray:
        """Deterministic-head forecast, clamped to [0, 1] (evaluation only)."""
        if self.config.head != "deterministic":
            raise ConfigError("predict_frames requires the deterministic head")
        with no_grad():
            out = self.forward(frames, dropout_active=dropout_active, rng=rng)
        return np.clip(out.data, 0.0, 1.0)

    def predict_raw_evidential(self, frames) -> Tensor:
        """Raw 4-channel head output (pass to evidential.constrain)."""
        if self.config.head != "evidential":
            raise ConfigError("predict_raw_evidential requires the evidential head")
        with no_grad():
            return self.forward(frames)

    # -- parameter plumbing -------------------------------------------------
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise ShapeError(f"parameter name mismatch: {sorted(missing)}")
        for name, value in arrays.items():
            if value.shape != self.params[name].shape:
                raise ShapeError(
                    f"array {name} has shape {value.shape}, expected {self.params[name].shape}"
                )
            self.params[name].data = np.array(value, dtype=np.float64)


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    fan_in, fan_out = shape[0], shape[-1]
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return Tensor(rng.normal(0.0, std, shape), requires_grad=True)


def _zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)
