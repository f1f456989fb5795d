"""Model assembly: fused-stack decoding, density regression, loss, and the
end-to-end forward pass, plus checkpoint serialization."""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .context import ContextParams, inject_context, local_temporal_context
from .errors import DataFormatError, HtrmError, UsageError
from .features import FeatureSequence, ScaleSet, build_scales
from .fusion import FusionParams, multiscale_fuse
from .tensor import Tensor, as_tensor, concat, matmul, power, relu, softmax
from .tensor_io import tensor_from_bytes, tensor_to_bytes
from .tssm import ProjectionHeads, RmdPolicy, dual_softmax_tssm, joint, random_matrix_drop, self_attention_tssm

_LN_EPS = 1e-8
ENCODER_HEADS = 4


@dataclass
class ModelConfig:
    """Shape-defining hyperparameters; stored in every checkpoint header."""

    frames: int = 64
    d: int = 512
    heads: int = 4
    half_window: int = 2
    drop_prob: float = 0.3
    use_dual_softmax: bool = True
    use_pos_embedding: bool = True

    def validate(self) -> None:
        if self.frames < 1 or self.d < 1:
            raise UsageError(f"bad model config: {self}")
        if self.heads < 1 or self.d % self.heads != 0:
            raise UsageError(f"head count {self.heads} must divide d={self.d}")
        if self.d % ENCODER_HEADS != 0:
            raise UsageError(f"d={self.d} must be divisible by the {ENCODER_HEADS} encoder heads")
        if self.half_window < 0 or not 0.0 <= self.drop_prob <= 1.0:
            raise UsageError(f"bad model config: {self}")


def _linear_init(rng, fan_in: int, shape) -> np.ndarray:
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, shape)


@dataclass
class EncoderLayerParams:
    """Input projection, one standard post-norm encoder layer, and optional
    learned position embeddings."""

    w_in: Tensor  # (T*C, d)
    b_in: Tensor  # (d,)
    pos: Tensor | None  # (T, d)
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    w_ff1: Tensor  # (d, 2d)
    b_ff1: Tensor
    w_ff2: Tensor  # (2d, d)
    b_ff2: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor

    @classmethod
    def create(cls, frames: int, channels: int, d: int, use_pos: bool, rng) -> "EncoderLayerParams":
        flat = frames * channels
        hidden = 2 * d

        def lin(fan_in, shape):
            return Tensor(_linear_init(rng, fan_in, shape), requires_grad=True)

        def zeros(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        return cls(
            w_in=lin(flat, (flat, d)),
            b_in=zeros(d),
            pos=zeros((frames, d)) if use_pos else None,
            w_q=lin(d, (d, d)),
            b_q=zeros(d),
            w_k=lin(d, (d, d)),
            b_k=zeros(d),
            w_v=lin(d, (d, d)),
            b_v=zeros(d),
            w_o=lin(d, (d, d)),
            b_o=zeros(d),
            ln1_gamma=Tensor(np.ones(d), requires_grad=True),
            ln1_beta=zeros(d),
            w_ff1=lin(d, (d, hidden)),
            b_ff1=zeros(hidden),
            w_ff2=lin(hidden, (hidden, d)),
            b_ff2=zeros(d),
            ln2_gamma=Tensor(np.ones(d), requires_grad=True),
            ln2_beta=zeros(d),
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = [("encoder.w_in", self.w_in), ("encoder.b_in", self.b_in)]
        if self.pos is not None:
            named.append(("encoder.pos", self.pos))
        named += [
            ("encoder.w_q", self.w_q),
            ("encoder.b_q", self.b_q),
            ("encoder.w_k", self.w_k),
            ("encoder.b_k", self.b_k),
            ("encoder.w_v", self.w_v),
            ("encoder.b_v", self.b_v),
            ("encoder.w_o", self.w_o),
            ("encoder.b_o", self.b_o),
            ("encoder.ln1_gamma", self.ln1_gamma),
            ("encoder.ln1_beta", self.ln1_beta),
            ("encoder.w_ff1", self.w_ff1),
            ("encoder.b_ff1", self.b_ff1),
            ("encoder.w_ff2", self.w_ff2),
            ("encoder.b_ff2", self.b_ff2),
            ("encoder.ln2_gamma", self.ln2_gamma),
            ("encoder.ln2_beta", self.ln2_beta),
        ]
        return named


@dataclass
class DensityHeadParams:
    """Two fully connected layers with a ReLU between, one scalar per token."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, d: int, rng) -> "DensityHeadParams":
        return cls(
            w1=Tensor(_linear_init(rng, d, (d, d)), requires_grad=True),
            b1=Tensor(np.zeros(d), requires_grad=True),
            w2=Tensor(_linear_init(rng, d, (d, 1)), requires_grad=True),
            b2=Tensor(np.zeros(1), requires_grad=True),
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            ("head.w1", self.w1),
            ("head.b1", self.b1),
            ("head.w2", self.w2),
            ("head.b2", self.b2),
        ]


@dataclass
class ModelParams:
    """The full trainable parameter collection."""

    config: ModelConfig
    heads: ProjectionHeads
    context: ContextParams
    fusion: FusionParams
    encoder: EncoderLayerParams
    density_head: DensityHeadParams

    def parameters(self) -> list[tuple[str, Tensor]]:
        return (
            self.heads.parameters()
            + self.context.parameters()
            + self.fusion.parameters()
            + self.encoder.parameters()
            + self.density_head.parameters()
        )

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.parameters()]


def init_model(config: ModelConfig, seed: int = 0, rng=None) -> ModelParams:
    config.validate()
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
    return ModelParams(
        config=config,
        heads=ProjectionHeads.create(config.d, config.heads, rng=rng),
        context=ContextParams.create(config.d, config.frames, config.half_window, rng=rng),
        fusion=FusionParams.create(channels=5, rng=rng),
        encoder=EncoderLayerParams.create(
            config.frames, 15, config.d, config.use_pos_embedding, rng
        ),
        density_head=DensityHeadParams.create(config.d, rng),
    )


def _layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    normed = centered * power(var + _LN_EPS, -0.5)
    return normed * gamma + beta


def decode(z, params: EncoderLayerParams) -> Tensor:
    """Flatten each row of the fused stack, project to width d, and run one
    post-norm transformer encoder layer over the T tokens."""
    z = as_tensor(z)
    if z.ndim != 3:
        raise UsageError(f"decoder expects a T x T x C stack, got {z.shape}")
    frames = z.shape[0]
    flat = z.reshape(frames, z.shape[1] * z.shape[2])
    if flat.shape[1] != params.w_in.shape[0]:
        raise UsageError(
            f"decoder input rows of {flat.shape[1]} values do not match the "
            f"{params.w_in.shape[0]}-input projection"
        )
    tokens = matmul(flat, params.w_in) + params.b_in
    if params.pos is not None:
        tokens = tokens + params.pos

    d = tokens.shape[1]
    dh = d // ENCODER_HEADS

    def split_heads(x):
        return x.reshape(frames, ENCODER_HEADS, dh).transpose(1, 0, 2)

    q = split_heads(matmul(tokens, params.w_q) + params.b_q)
    k = split_heads(matmul(tokens, params.w_k) + params.b_k)
    v = split_heads(matmul(tokens, params.w_v) + params.b_v)
    attn = softmax(matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh)), axis=2)
    mixed = matmul(attn, v).transpose(1, 0, 2).reshape(frames, d)
    attended = matmul(mixed, params.w_o) + params.b_o

    x = _layer_norm(tokens + attended, params.ln1_gamma, params.ln1_beta)
    ff = matmul(relu(matmul(x, params.w_ff1) + params.b_ff1), params.w_ff2) + params.b_ff2
    return _layer_norm(x + ff, params.ln2_gamma, params.ln2_beta)


def predict_density(o, params: DensityHeadParams) -> Tensor:
    """Per-token scalar density: d -> d -> 1 with a ReLU between."""
    o = as_tensor(o)
    if o.ndim != 2 or o.shape[1] != params.w1.shape[0]:
        raise UsageError(f"density head built for d={params.w1.shape[0]}, got {o.shape}")
    hidden = relu(matmul(o, params.w1) + params.b1)
    out = matmul(hidden, params.w2) + params.b2
    return out.reshape(o.shape[0])


def mse_loss(pred, truth) -> Tensor:
    """Squared error summed over frames per sample, averaged over samples."""
    if isinstance(pred, (list, tuple)):
        pred = concat([as_tensor(p).reshape(1, -1) for p in pred], axis=0)
    pred = as_tensor(pred)
    truth = np.asarray(truth.data if isinstance(truth, Tensor) else truth, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred.reshape(1, pred.shape[0])
    if truth.ndim == 1:
        truth = truth.reshape(1, -1)
    if pred.shape != truth.shape:
        raise UsageError(f"loss shapes differ: pred {pred.shape}, truth {truth.shape}")
    diff = pred - truth
    return (diff * diff).sum() * (1.0 / pred.shape[0])


@contextmanager
def _stage(name: str):
    try:
        yield
    except HtrmError as err:
        raise type(err)(f"[{name}] {err}") from err


def forward_full(scales: ScaleSet, model: ModelParams, rmd: RmdPolicy, capture: dict | None = None) -> Tensor:
    """Full pipeline: per-scale bi-modal stacks -> drop -> context -> fusion
    -> decode -> density. Deterministic whenever rmd.training is false."""
    stacks = []
    for label, seq in (("v1", scales.v1), ("v2", scales.v2), ("v3", scales.v3)):
        with _stage(f"tssm:{label}"):
            m = self_attention_tssm(seq, model.heads)
            if model.config.use_dual_softmax:
                m = joint(m, dual_softmax_tssm(seq, model.heads))
            m = random_matrix_drop(m, rmd)
        with _stage(f"context:{label}"):
            ctx = local_temporal_context(seq, model.context)
            stacks.append(inject_context(m, ctx))
    with _stage("fusion"):
        z = multiscale_fuse(*stacks, model.fusion)
    with _stage("decode"):
        o = decode(z, model.encoder)
    with _stage("density"):
        density = predict_density(o, model.density_head)
    if capture is not None:
        capture["stacks"] = [s.data.copy() for s in stacks]
        capture["fused"] = z.data.copy()
        capture["decoded"] = o.data.copy()
        capture["density"] = density.data.copy()
    return density


def predict_from_features(seq: FeatureSequence, model: ModelParams, rmd: RmdPolicy | None = None, capture: dict | None = None) -> Tensor:
    """Resample to the model's frame count, build scales, run the model."""
    from .features import sample_or_pad

    rmd = rmd or RmdPolicy(p=model.config.drop_prob, training=False)
    fitted = sample_or_pad(seq, model.config.frames)
    return forward_full(build_scales(fitted), model, rmd, capture=capture)


_CKPT_MAGIC = b"HTRMCKP"
_CKPT_VERSION = 1
_HEADER = struct.Struct("<7sBIIIIfBB")


def save_checkpoint(path, model: ModelParams) -> None:
    cfg = model.config
    blob = bytearray(
        _HEADER.pack(
            _CKPT_MAGIC,
            _CKPT_VERSION,
            cfg.frames,
            cfg.d,
            cfg.heads,
            cfg.half_window,
            cfg.drop_prob,
            int(cfg.use_dual_softmax),
            int(cfg.use_pos_embedding),
        )
    )
    named = model.parameters()
    blob += struct.pack("<I", len(named))
    for name, tensor in named:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded)) + encoded
        blob += tensor_to_bytes(tensor.data)
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> ModelParams:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DataFormatError(f"checkpoint truncated at offset {len(blob)}")
    magic, version, frames, d, heads, half_window, drop_prob, use_ds, use_pos = _HEADER.unpack_from(blob, 0)
    if magic != _CKPT_MAGIC:
        raise DataFormatError(f"bad checkpoint magic {magic!r} at offset 0")
    if version != _CKPT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    config = ModelConfig(
        frames=frames,
        d=d,
        heads=heads,
        half_window=half_window,
        drop_prob=float(drop_prob),
        use_dual_softmax=bool(use_ds),
        use_pos_embedding=bool(use_pos),
    )
    model = init_model(config, seed=0)
    offset = _HEADER.size
    if len(blob) < offset + 4:
        raise DataFormatError(f"checkpoint truncated at offset {offset}")
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    loaded = {}
    for _ in range(count):
        if len(blob) < offset + 2:
            raise DataFormatError(f"checkpoint truncated at offset {offset}")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        array, offset = tensor_from_bytes(blob, offset)
        loaded[name] = array
    for name, tensor in model.parameters():
        if name not in loaded:
            raise DataFormatError(f"checkpoint missing parameter {name}")
        array = loaded.pop(name)
        if array.shape != tensor.data.shape:
            raise DataFormatError(
                f"checkpoint parameter {name} has shape {array.shape}, "
                f"model expects {tensor.data.shape}"
            )
        tensor.data = array
    if loaded:
        raise DataFormatError(f"checkpoint carries unknown parameters: {sorted(loaded)}")
    return model
