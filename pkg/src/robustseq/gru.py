"""GRU cell, mean-1 multiplicative hidden-state noise, and the stacked
sequence forward pass.

Noise multiplies the whole convex-combination output of a step, so a
noisy step factors exactly as eps * plain_step. Inter-layer dropout uses
the same scaled-Bernoulli construction and is applied to each layer's
output on its way up (to the next layer, or to the prediction head for
the top layer); the recurrent connection itself is never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ValidationError

NOISE_KINDS = ("scaled_bernoulli", "gaussian")


@dataclass
class NoiseSpec:
    """Distribution of the multiplicative hidden-state noise.

    Both families have unit mean: scaled Bernoulli takes 0 with
    probability drop_prob and 1/(1-drop_prob) otherwise; Gaussian is
    1 + sigma * N(0, 1). Eval mode always yields all-ones.
    """

    kind: str = "scaled_bernoulli"
    drop_prob: float = 0.0
    sigma: float = 0.0
    mode: str = "train"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValidationError("drop_prob must lie in [0, 1)")
        if self.sigma < 0.0:
            raise ValidationError("sigma must be non-negative")
        if self.mode not in ("train", "eval"):
            raise ValidationError(f"unknown mode {self.mode!r}")


@dataclass
class GruParams:
    """One recurrent layer's trainable parameters."""

    W_z: np.ndarray  # (H, D_in)
    U_z: np.ndarray  # (H, H)
    b_z: np.ndarray  # (H,)
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        h, d_in = np.shape(self.W_z)
        for name in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            want = (h, d_in) if name.startswith("W") else (h, h) if name.startswith("U") else (h,)
            if arr.shape != want:
                raise ValidationError(f"{name} must have shape {want}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} contains non-finite entries")

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]


@dataclass
class ModelConfig:
    """Architecture and regularization settings for the stacked model."""

    input_size: int
    num_codes: int
    hidden_size: int = 64
    num_layers: int = 1
    interlayer_dropout: float = 0.3
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    imputation: str = "decay"  # "decay", or "mean" for the ablated model
    seed: int = 0

    def __post_init__(self):
        if self.input_size < 1 or self.num_codes < 1 or self.hidden_size < 1:
            raise ValidationError("sizes must be positive")
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if not 0.0 <= self.interlayer_dropout < 1.0:
            raise ValidationError("interlayer_dropout must lie in [0, 1)")
        if self.imputation not in ("decay", "mean"):
            raise ValidationError(f"unknown imputation mode {self.imputation!r}")
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)


def sample_noise(spec: NoiseSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one noise vector; every component has expectation 1."""
    if spec.mode == "eval":
        return np.ones(size)
    if spec.kind == "scaled_bernoulli":
        keep = rng.random(size) >= spec.drop_prob
        return keep / (1.0 - spec.drop_prob)
    return 1.0 + spec.sigma * rng.standard_normal(size)


def gru_step(params: GruParams, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """Single GRU update: convex combination of h_prev and the candidate."""
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    if x.shape != (params.input_size,) or h_prev.shape != (params.hidden_size,):
        raise ValidationError(
            f"expected x of length {params.input_size} and h_prev of length "
            f"{params.hidden_size}, got {x.shape} and {h_prev.shape}")
    z = expit(params.W_z @ x + params.U_z @ h_prev + params.b_z)
    r = expit(params.W_r @ x + params.U_r @ h_prev + params.b_r)
    h_cand = np.tanh(params.W_h @ x + params.U_h @ (r * h_prev) + params.b_h)
    return (1.0 - z) * h_prev + z * h_cand


def noisy_gru_step(params: GruParams, x: np.ndarray, h_prev: np.ndarray,
                   eps: np.ndarray) -> np.ndarray:
    """GRU update with multiplicative noise on the step output.

    Both terms of the convex combination share the noise factor, so this
    is exactly eps * gru_step(...).
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (params.hidden_size,):
        raise ValidationError(f"eps must have length {params.hidden_size}")
    return eps * gru_step(params, x, h_prev)


@dataclass
class SequenceNoise:
    """Pre-sampled per-step, per-layer noise for one sequence."""

    eps: np.ndarray   # (L, T, H) hidden-state noise
    drop: np.ndarray  # (L, T, H) inter-layer dropout masks

    @classmethod
    def ones(cls, num_layers: int, t_len: int, hidden: int) -> "SequenceNoise":
        shape = (num_layers, t_len, hidden)
        return cls(eps=np.ones(shape), drop=np.ones(shape))


def sample_sequence_noise(config: ModelConfig, t_len: int,
                          rng: np.random.Generator) -> SequenceNoise:
    """Sample all stochastic factors for one train-mode forward pass.

    Draw order is fixed for reproducibility: steps ascending, layers
    ascending, hidden-state noise before the dropout mask.
    """
    if config.noise.mode == "eval":
        return SequenceNoise.ones(config.num_layers, t_len, config.hidden_size)
    drop_spec = NoiseSpec(kind="scaled_bernoulli",
                          drop_prob=config.interlayer_dropout, mode="train")
    shape = (config.num_layers, t_len, config.hidden_size)
    eps = np.empty(shape)
    drop = np.empty(shape)
    for t in range(t_len):
        for layer in range(config.num_layers):
            eps[layer, t] = sample_noise(config.noise, config.hidden_size, rng)
            drop[layer, t] = sample_noise(drop_spec, config.hidden_size, rng)
    return SequenceNoise(eps=eps, drop=drop)


@dataclass
class LayerCache:
    """Everything a layer's backward pass needs."""

    xin: np.ndarray      # (T, D_in) input rows actually consumed
    h: np.ndarray        # (T+1, H), h[0] = 0
    z: np.ndarray        # (T, H)
    r: np.ndarray        # (T, H)
    h_cand: np.ndarray   # (T, H)
    dropped: np.ndarray  # (T, H) output after the inter-layer dropout mask


@dataclass
class ForwardCache:
    layers: list[LayerCache]
    noise: SequenceNoise
    top: np.ndarray  # (T, H) dropped top-layer hidden states (head input)

    def hidden_states(self, layer: int) -> np.ndarray:
        """Hidden trajectory h_1..h_T of one layer, shape (T, H)."""
        return self.layers[layer].h[1:]


def _check_layer_shapes(config: ModelConfig, layers: list[GruParams]) -> None:
    if len(layers) != config.num_layers:
        raise ValidationError(
            f"config expects {config.num_layers} layers, got {len(layers)}")
    for i, p in enumerate(layers):
        want_in = config.input_size if i == 0 else config.hidden_size
        if p.hidden_size != config.hidden_size or p.input_size != want_in:
            raise ValidationError(
                f"layer {i} has shape ({p.hidden_size}, {p.input_size}), "
                f"expected ({config.hidden_size}, {want_in})")


def forward_sequence(config: ModelConfig, layers: list[GruParams],
                     inputs: np.ndarray, rng: np.random.Generator | None = None,
                     noise: SequenceNoise | None = None) -> ForwardCache:
    """Run the stacked recurrence over one (already imputed) sequence.

    In train mode fresh noise is sampled from rng unless a pre-sampled
    SequenceNoise is supplied; eval mode is deterministic and ignores rng.
    Initial hidden state is zero for every layer.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != config.input_size:
        raise ValidationError(f"inputs must be (T, {config.input_size})")
    if not np.isfinite(inputs).all():
        raise ValidationError("inputs contain non-finite sentinel values")
    _check_layer_shapes(config, layers)
    t_len = inputs.shape[0]
    if noise is None:
        if config.noise.mode == "train":
            if rng is None:
                raise ValidationError("train-mode forward needs rng or pre-sampled noise")
            noise = sample_sequence_noise(config, t_len, rng)
        else:
            noise = SequenceNoise.ones(config.num_layers, t_len, config.hidden_size)
    elif noise.eps.shape != (config.num_layers, t_len, config.hidden_size):
        raise ValidationError("pre-sampled noise has the wrong shape")

    caches = []
    x = inputs
    for li, p in enumerate(layers):
        # input projections for all steps at once; the loop carries only
        # the recurrent terms
        px_z = x @ p.W_z.T + p.b_z
        px_r = x @ p.W_r.T + p.b_r
        px_h = x @ p.W_h.T + p.b_h
        h = np.zeros((t_len + 1, config.hidden_size))
        z = np.empty((t_len, config.hidden_size))
        r = np.empty((t_len, config.hidden_size))
        h_cand = np.empty((t_len, config.hidden_size))
        hp = h[0]
        for t in range(t_len):
            zt = expit(px_z[t] + p.U_z @ hp)
            rt = expit(px_r[t] + p.U_r @ hp)
            ct = np.tanh(px_h[t] + p.U_h @ (rt * hp))
            hp = ((1.0 - zt) * hp + zt * ct) * noise.eps[li, t]
            h[t + 1] = hp
            z[t], r[t], h_cand[t] = zt, rt, ct
        dropped = h[1:] * noise.drop[li]
        caches.append(LayerCache(xin=x, h=h, z=z, r=r, h_cand=h_cand,
                                 dropped=dropped))
        x = dropped
    return ForwardCache(layers=caches, noise=noise, top=x)
