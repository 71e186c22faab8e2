"""Masked-autoencoder vision transformer with exact reverse-mode gradients.

The model follows the asymmetric recipe: patchify the image, hide 80% of the
patches, run the encoder on the visible remainder only, then decode every
position (visible latents plus a shared learned mask token) back to pixel
space. Parameters live in one flat float64 array with a named layout, so
gradients, SGD, and checkpoints all operate on plain arrays.

Four ladder sizes (TOY-A through TOY-D) span a roughly 28x parameter range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import CorpusManifest, ImageRecord, MixtureSpec
from .errors import TrainingDiverged
from .seeding import derive_seed, rng_for

MASK_RATIO = 0.8
MLP_RATIO = 4


@dataclass(frozen=True)
class MaeModelConfig:
    patch_size: int
    embed_dim: int
    depth: int
    heads: int
    decoder_dim: int
    decoder_depth: int
    image_side: int
    channels: int = 1

    def __post_init__(self):
        for name in ("patch_size", "embed_dim", "depth", "heads", "decoder_dim", "decoder_depth", "image_side", "channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.image_side % self.patch_size != 0:
            raise ValueError(f"image_side {self.image_side} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.decoder_dim % self.heads != 0:
            raise ValueError(f"decoder_dim {self.decoder_dim} not divisible by heads {self.heads}")

    @property
    def grid_patches(self) -> int:
        return (self.image_side // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


def _transformer_block_layout(prefix: str, dim: int) -> list[tuple[str, tuple[int, ...]]]:
    hidden = MLP_RATIO * dim
    return [
        (f"{prefix}.ln1.g", (dim,)),
        (f"{prefix}.ln1.b", (dim,)),
        (f"{prefix}.attn.wq", (dim, dim)),
        (f"{prefix}.attn.bq", (dim,)),
        (f"{prefix}.attn.wk", (dim, dim)),
        (f"{prefix}.attn.bk", (dim,)),
        (f"{prefix}.attn.wv", (dim, dim)),
        (f"{prefix}.attn.bv", (dim,)),
        (f"{prefix}.attn.wo", (dim, dim)),
        (f"{prefix}.attn.bo", (dim,)),
        (f"{prefix}.ln2.g", (dim,)),
        (f"{prefix}.ln2.b", (dim,)),
        (f"{prefix}.mlp.w1", (dim, hidden)),
        (f"{prefix}.mlp.b1", (hidden,)),
        (f"{prefix}.mlp.w2", (hidden, dim)),
        (f"{prefix}.mlp.b2", (dim,)),
    ]


def build_layout(config: MaeModelConfig) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Named parameter shapes in storage order."""
    p = config.grid_patches
    e, d = config.embed_dim, config.decoder_dim
    layout: list[tuple[str, tuple[int, ...]]] = [
        ("patch_embed.w", (config.patch_dim, e)),
        ("patch_embed.b", (e,)),
        ("enc_pos", (p, e)),
    ]
    for i in range(config.depth):
        layout.extend(_transformer_block_layout(f"enc.{i}", e))
    layout.extend([("enc_norm.g", (e,)), ("enc_norm.b", (e,))])
    layout.extend([
        ("dec_embed.w", (e, d)),
        ("dec_embed.b", (d,)),
        ("mask_token", (1, d)),
        ("dec_pos", (p, d)),
    ])
    for i in range(config.decoder_depth):
        layout.extend(_transformer_block_layout(f"dec.{i}", d))
    layout.extend([
        ("dec_norm.g", (d,)),
        ("dec_norm.b", (d,)),
        ("head.w", (d, config.patch_dim)),
        ("head.b", (config.patch_dim,)),
    ])
    return tuple(layout)


def layout_size(layout) -> int:
    return int(sum(np.prod(shape, dtype=np.int64) for _, shape in layout))


class ParameterStore:
    """Flat float64 parameter array plus the named layout that indexes it."""

    def __init__(self, values: np.ndarray, layout, rng_seed: int):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.layout = tuple(layout)
        self.rng_seed = rng_seed
        self.offsets: dict[str, tuple[int, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape, dtype=np.int64))
            self.offsets[name] = (offset, tuple(shape))
            offset += size
        if offset != self.values.size:
            raise ValueError(f"layout covers {offset} values, array holds {self.values.size}")

    def __len__(self) -> int:
        return self.values.size

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.offsets[name]
        size = int(np.prod(shape, dtype=np.int64))
        return self.values[offset : offset + size].reshape(shape)

    def set_param(self, name: str, array) -> None:
        self.view(name)[...] = np.asarray(array, dtype=np.float64)

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.values.copy(), self.layout, self.rng_seed)


def parameter_count(config: MaeModelConfig) -> int:
    return layout_size(build_layout(config))


def init_params(config: MaeModelConfig, seed: int) -> ParameterStore:
    """Seeded initialization: uniform(-s, s) with s = sqrt(6/(fan_in+fan_out))
    for matrices (position tables and the mask token included), zeros for
    biases, ones/zeros for norm scales/shifts."""
    layout = build_layout(config)
    values = np.zeros(layout_size(layout), dtype=np.float64)
    store = ParameterStore(values, layout, rng_seed=seed)
    rng = np.random.default_rng(seed)
    for name, shape in layout:
        if name.endswith(".g"):
            store.view(name)[...] = 1.0
        elif len(shape) == 2:
            s = np.sqrt(6.0 / (shape[0] + shape[1]))
            store.view(name)[...] = rng.uniform(-s, s, size=shape)
        # 1D biases and shifts stay zero
    return store


@dataclass(frozen=True)
class SizeLadder:
    """The four model sizes, ordered small to large, at one image side."""

    entries: tuple[tuple[str, MaeModelConfig], ...]

    def __post_init__(self):
        counts = [parameter_count(cfg) for _, cfg in self.entries]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("ladder parameter counts are not strictly increasing")
        ratio = counts[-1] / counts[0]
        if not 25.0 <= ratio <= 31.0:
            raise ValueError(f"ladder span {ratio:.2f}x is outside [25, 31]")

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def by_name(self, name: str) -> MaeModelConfig:
        for entry_name, config in self.entries:
            if entry_name == name:
                return config
        raise KeyError(f"no ladder entry named {name!r}")

    def ratio(self) -> float:
        counts = [parameter_count(cfg) for _, cfg in self.entries]
        return counts[-1] / counts[0]


LADDER_NAMES = ("TOY-A", "TOY-B", "TOY-C", "TOY-D")

_LADDER_DIMS = {
    "TOY-A": dict(embed_dim=16, depth=1, heads=2, decoder_dim=16, decoder_depth=1),
    "TOY-B": dict(embed_dim=32, depth=1, heads=4, decoder_dim=16, decoder_depth=1),
    "TOY-C": dict(embed_dim=48, depth=2, heads=4, decoder_dim=32, decoder_depth=1),
    "TOY-D": dict(embed_dim=64, depth=4, heads=4, decoder_dim=48, decoder_depth=1),
}

LADDER_GRID = 8  # patches per image edge, so every resolution yields 64 tokens


def ladder_patch_size(image_side: int) -> int:
    if image_side % LADDER_GRID != 0:
        raise ValueError(f"image_side {image_side} must be divisible by {LADDER_GRID}")
    return image_side // LADDER_GRID


def size_ladder(image_side: int, channels: int = 1) -> SizeLadder:
    """The four sizes at one resolution; patch size scales with the side so
    the token grid stays 8x8 and resolution moves detail into each patch."""
    patch_size = ladder_patch_size(image_side)
    entries = tuple(
        (name, MaeModelConfig(patch_size=patch_size, image_side=image_side, channels=channels, **_LADDER_DIMS[name]))
        for name in LADDER_NAMES
    )
    return SizeLadder(entries=entries)


def patchify(pixels: np.ndarray, patch_size: int) -> np.ndarray:
    """Split an image into row-major square patches, each flattened row-major.

    Accepts (H, W) or (H, W, C); returns (n_patches, patch_size**2 * C).
    The inverse is `unpatchify`, and the round trip is bit-exact.
    """
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 2:
        px = px[:, :, None]
    if px.ndim != 3:
        raise ValueError("expected a (H, W) or (H, W, C) pixel grid")
    h, w, c = px.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"image {h}x{w} not divisible by patch_size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    tiles = px.reshape(gh, patch_size, gw, patch_size, c).transpose(0, 2, 1, 3, 4)
    return tiles.reshape(gh * gw, patch_size * patch_size * c)


def unpatchify(patches: np.ndarray, patch_size: int, height: int, width: int, channels: int = 1) -> np.ndarray:
    patches = np.asarray(patches, dtype=np.float64)
    gh, gw = height // patch_size, width // patch_size
    tiles = patches.reshape(gh, gw, patch_size, patch_size, channels).transpose(0, 2, 1, 3, 4)
    out = tiles.reshape(height, width, channels)
    return out[:, :, 0] if channels == 1 else out


@dataclass(frozen=True)
class MaskSet:
    """Sorted masked patch indices out of `total` grid positions."""

    masked: tuple[int, ...]
    total: int

    def __post_init__(self):
        object.__setattr__(self, "masked", tuple(sorted(int(i) for i in self.masked)))
        if len(set(self.masked)) != len(self.masked):
            raise ValueError("duplicate masked indices")
        if self.masked and (self.masked[0] < 0 or self.masked[-1] >= self.total):
            raise ValueError("masked indices outside [0, total)")

    @property
    def visible(self) -> tuple[int, ...]:
        hidden = set(self.masked)
        return tuple(i for i in range(self.total) if i not in hidden)


def mask_count(total_patches: int, mask_ratio: float = MASK_RATIO) -> int:
    """min(round(ratio * n), n - 1): at least one patch always stays visible."""
    return min(round(mask_ratio * total_patches), total_patches - 1)


def sample_mask(total_patches: int, mask_ratio: float = MASK_RATIO, seed: int = 0) -> MaskSet:
    if total_patches < 1:
        raise ValueError("total_patches must be >= 1")
    if not 0.0 <= mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must be in [0, 1), got {mask_ratio}")
    count = mask_count(total_patches, mask_ratio)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(total_patches)[:count]
    return MaskSet(masked=tuple(int(i) for i in chosen), total=total_patches)


# --------------------------------------------------------------------------
# Forward / backward graph construction
# --------------------------------------------------------------------------

def _params_to_tensors(store: ParameterStore) -> dict[str, Tensor]:
    return {name: Tensor(store.view(name), requires_grad=True) for name, _ in store.layout}


def _attention(x: Tensor, p: dict[str, Tensor], prefix: str, heads: int, dim: int) -> Tensor:
    b, n = x.shape[0], x.shape[1]
    hd = dim // heads
    scale = 1.0 / np.sqrt(hd)

    def split_heads(t: Tensor) -> Tensor:
        return ad.swapaxes(ad.reshape(t, (b, n, heads, hd)), 1, 2)

    q = split_heads(x @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"])
    k = split_heads(x @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"])
    v = split_heads(x @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"])
    scores = ad.mul(q @ ad.swapaxes(k, -1, -2), scale)
    ctx = ad.softmax(scores) @ v
    merged = ad.reshape(ad.swapaxes(ctx, 1, 2), (b, n, dim))
    return merged @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]


def _block(x: Tensor, p: dict[str, Tensor], prefix: str, heads: int, dim: int) -> Tensor:
    h = ad.layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    x = x + _attention(h, p, f"{prefix}.attn", heads, dim)
    h = ad.layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    m = ad.gelu(h @ p[f"{prefix}.mlp.w1"] + p[f"{prefix}.mlp.b1"]) @ p[f"{prefix}.mlp.w2"] + p[f"{prefix}.mlp.b2"]
    return x + m


def _selection_matrix(indices: np.ndarray, total: int) -> np.ndarray:
    """(B, K, total) one-hot rows selecting `indices` along the token axis."""
    b, k = indices.shape
    sel = np.zeros((b, k, total), dtype=np.float64)
    sel[np.arange(b)[:, None], np.arange(k)[None, :], indices] = 1.0
    return sel


def _encode(p: dict[str, Tensor], config: MaeModelConfig, patches_batch: np.ndarray,
            visible_idx: np.ndarray | None = None) -> Tensor:
    """Encoder over visible tokens; `visible_idx` None means all patches."""
    batch = patches_batch.shape[0]
    total = config.grid_patches
    if visible_idx is None:
        tok = Tensor(patches_batch) @ p["patch_embed.w"] + p["patch_embed.b"]
        tok = tok + p["enc_pos"]
    else:
        gathered = patches_batch[np.arange(batch)[:, None], visible_idx]
        tok = Tensor(gathered) @ p["patch_embed.w"] + p["patch_embed.b"]
        tok = tok + Tensor(_selection_matrix(visible_idx, total)) @ p["enc_pos"]
    for i in range(config.depth):
        tok = _block(tok, p, f"enc.{i}", config.heads, config.embed_dim)
    return ad.layer_norm(tok, p["enc_norm.g"], p["enc_norm.b"])


def _decode(p: dict[str, Tensor], config: MaeModelConfig, latents: Tensor,
            visible_idx: np.ndarray, masked_flags: np.ndarray) -> Tensor:
    """Decoder over all positions: visible latents scattered in place, the
    shared mask token everywhere else, plus decoder position embeddings."""
    total = config.grid_patches
    z = latents @ p["dec_embed.w"] + p["dec_embed.b"]
    scatter = np.swapaxes(_selection_matrix(visible_idx, total), 1, 2)
    full = Tensor(scatter) @ z
    full = full + ad.mul(Tensor(masked_flags[:, :, None]), p["mask_token"])
    full = full + p["dec_pos"]
    for i in range(config.decoder_depth):
        full = _block(full, p, f"dec.{i}", config.heads, config.decoder_dim)
    full = ad.layer_norm(full, p["dec_norm.g"], p["dec_norm.b"])
    return full @ p["head.w"] + p["head.b"]


def _batch_indices(masks: list[MaskSet], total: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-image visible indices; all masks must hide the same count."""
    counts = {len(m.masked) for m in masks}
    if len(counts) != 1:
        raise ValueError("masks in a batch must hide the same number of patches")
    if any(m.total != total for m in masks):
        raise ValueError("mask total does not match the patch grid")
    visible_idx = np.array([m.visible for m in masks], dtype=np.int64)
    flags = np.zeros((len(masks), total), dtype=np.float64)
    for row, m in enumerate(masks):
        flags[row, list(m.masked)] = 1.0
    return visible_idx, flags


def _forward_graph(p: dict[str, Tensor], config: MaeModelConfig,
                   patches_batch: np.ndarray, masks: list[MaskSet]) -> tuple[Tensor, Tensor]:
    visible_idx, flags = _batch_indices(masks, config.grid_patches)
    latents = _encode(p, config, patches_batch, visible_idx)
    recon = _decode(p, config, latents, visible_idx, flags)
    return recon, latents


def _check_patch_shape(config: MaeModelConfig, patches: np.ndarray) -> None:
    if patches.shape[-2] != config.grid_patches or patches.shape[-1] != config.patch_dim:
        raise ValueError(
            f"patch array {patches.shape[-2:]} does not match the "
            f"{config.grid_patches}x{config.patch_dim} grid of the config"
        )


def forward(params: ParameterStore, config: MaeModelConfig,
            patches: np.ndarray, mask: MaskSet) -> tuple[np.ndarray, np.ndarray]:
    """Run one image through the masked autoencoder.

    Returns (reconstruction, latents): a pixel-space prediction for every
    patch, and the encoder output for each visible patch.
    """
    patches = np.asarray(patches, dtype=np.float64)
    _check_patch_shape(config, patches)
    p = _params_to_tensors(params)
    recon, latents = _forward_graph(p, config, patches[None, :, :], [mask])
    return recon.data[0], latents.data[0]


def mae_loss(reconstruction: np.ndarray, target_patches: np.ndarray, mask: MaskSet) -> float:
    """Mean over masked patches of the mean squared pixel error."""
    if not mask.masked:
        raise ValueError("loss is undefined for an empty mask")
    idx = list(mask.masked)
    diff = np.asarray(reconstruction, dtype=np.float64)[idx] - np.asarray(target_patches, dtype=np.float64)[idx]
    return float(np.mean(diff**2))


def _masked_loss_graph(recon: Tensor, targets: np.ndarray, masks: list[MaskSet]) -> Tensor:
    masked_idx = np.array([m.masked for m in masks], dtype=np.int64)
    if masked_idx.shape[1] == 0:
        raise ValueError("loss is undefined for an empty mask")
    batch, total = recon.shape[0], recon.shape[1]
    sel = Tensor(_selection_matrix(masked_idx, total))
    picked = sel @ recon
    target_masked = targets[np.arange(batch)[:, None], masked_idx]
    diff = picked - Tensor(target_masked)
    return ad.mul(ad.tsum(ad.mul(diff, diff)), 1.0 / diff.data.size)


def _collect_gradient(p: dict[str, Tensor], store: ParameterStore) -> np.ndarray:
    grad = np.zeros(len(store), dtype=np.float64)
    for name, shape in store.layout:
        offset, _ = store.offsets[name]
        size = int(np.prod(shape, dtype=np.int64))
        g = p[name].grad
        if g is not None:
            grad[offset : offset + size] = g.ravel()
    return grad


def gradient(params: ParameterStore, config: MaeModelConfig,
             patches: np.ndarray, mask: MaskSet) -> np.ndarray:
    """Exact derivative of the masked reconstruction loss, flat layout."""
    patches = np.asarray(patches, dtype=np.float64)
    _check_patch_shape(config, patches)
    p = _params_to_tensors(params)
    recon, _ = _forward_graph(p, config, patches[None, :, :], [mask])
    loss = _masked_loss_graph(recon, patches[None, :, :], [mask])
    loss.backward()
    return _collect_gradient(p, params)


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def train(params: ParameterStore, config: MaeModelConfig, manifest: CorpusManifest,
          schedule: TrainSchedule) -> tuple[ParameterStore, list[float]]:
    """Minibatch training over seeded shuffles; returns new params and the
    per-epoch mean loss trace.

    Steps are Adam-style (bias-corrected first/second moments at a fixed
    learning rate): the gradient scale spans two orders of magnitude between
    the reconstruction head and the encoder attention weights, and a raw
    fixed step that moves the head leaves the encoder frozen. The update is
    still a pure function of the seeds.

    Each record keeps one mask for the whole run (keyed on the schedule seed
    and the record id), so the loss trace is exactly constant when the
    learning rate is zero. A non-finite batch loss aborts with the epoch and
    batch named.
    """
    if manifest.image_side() != config.image_side:
        raise ValueError(
            f"manifest images are {manifest.image_side()}px, config expects {config.image_side}px"
        )
    n = len(manifest.records)
    patches_all = np.stack([patchify(r.pixels, config.patch_size) for r in manifest.records])
    masks_all = [
        sample_mask(config.grid_patches, MASK_RATIO, derive_seed(schedule.seed, "mask", r.id))
        for r in manifest.records
    ]

    store = params.copy()
    moment1 = np.zeros(len(store), dtype=np.float64)
    moment2 = np.zeros(len(store), dtype=np.float64)
    step = 0
    trace: list[float] = []
    for epoch in range(schedule.epochs):
        order = rng_for(schedule.seed, "shuffle", epoch).permutation(n)
        epoch_losses = np.zeros(n, dtype=np.float64)
        for start in range(0, n, schedule.batch_size):
            chunk = order[start : start + schedule.batch_size]
            batch_patches = patches_all[chunk]
            batch_masks = [masks_all[i] for i in chunk]
            p = _params_to_tensors(store)
            recon, _ = _forward_graph(p, config, batch_patches, batch_masks)
            loss = _masked_loss_graph(recon, batch_patches, batch_masks)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start // schedule.batch_size}"
                )
            for j, i in enumerate(chunk):
                epoch_losses[i] = mae_loss(recon.data[j], batch_patches[j], batch_masks[j])
            loss.backward()
            grad = _collect_gradient(p, store)
            step += 1
            moment1 = ADAM_BETA1 * moment1 + (1.0 - ADAM_BETA1) * grad
            moment2 = ADAM_BETA2 * moment2 + (1.0 - ADAM_BETA2) * grad * grad
            m_hat = moment1 / (1.0 - ADAM_BETA1**step)
            v_hat = moment2 / (1.0 - ADAM_BETA2**step)
            store.values -= schedule.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        trace.append(float(epoch_losses.mean()))
    return store, trace


def encode_features(params: ParameterStore, config: MaeModelConfig,
                    pixel_stack: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Mean-pooled encoder latents with every patch visible, one row per image."""
    if not np.all(np.isfinite(params.values)):
        raise ValueError("parameter store contains non-finite values")
    stack = np.asarray(pixel_stack, dtype=np.float64)
    feats = []
    for start in range(0, stack.shape[0], batch_size):
        batch = stack[start : start + batch_size]
        patches = np.stack([patchify(img, config.patch_size) for img in batch])
        _check_patch_shape(config, patches)
        p = _params_to_tensors(params)
        latents = _encode(p, config, patches)
        feats.append(latents.data.mean(axis=1))
    return np.concatenate(feats, axis=0)


# --------------------------------------------------------------------------
# Checkpoint and loss-trace persistence
# --------------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: ParameterStore, config: MaeModelConfig) -> None:
    """One JSON header line, then the flat little-endian float64 array."""
    header = {"config": asdict(config), "rng_seed": params.rng_seed, "n_params": len(params)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ParameterStore, MaeModelConfig]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    config = MaeModelConfig(**header["config"])
    if payload.size != header["n_params"]:
        raise ValueError(f"checkpoint holds {payload.size} params, header says {header['n_params']}")
    return ParameterStore(payload.copy(), build_layout(config), header["rng_seed"]), config


def save_loss_trace(path: str | Path, trace: list[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, value in enumerate(trace):
            fh.write(f"{epoch},{value!r}\n")


def load_loss_trace(path: str | Path) -> list[float]:
    trace = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            line = line.strip()
            if line:
                trace.append(float(line.split(",")[1]))
    return trace


# --------------------------------------------------------------------------
# Estimator facade
# --------------------------------------------------------------------------

class MaskedAutoencoder(BaseEstimator, TransformerMixin):
    """Self-supervised featurizer: `fit` pretrains on unlabeled images,
    `transform` returns mean-pooled encoder features.

    X may be an image stack of shape (n, side, side), a flat (n, side*side)
    array, or a `CorpusManifest`. Labels are ignored.
    """

    def __init__(self, model_name: str = "TOY-A", epochs: int = 8,
                 batch_size: int = 32, learning_rate: float = 0.01, seed: int = 0):
        self.model_name = model_name
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def _as_stack(self, X) -> np.ndarray:
        if isinstance(X, CorpusManifest):
            return np.stack([r.pixels.astype(np.float64) for r in X.records])
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 2:
            side = int(round(np.sqrt(arr.shape[1])))
            if side * side != arr.shape[1]:
                raise ValueError(f"cannot reshape rows of length {arr.shape[1]} into square images")
            arr = arr.reshape(arr.shape[0], side, side)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError("expected (n, side, side) images")
        return arr

    def fit(self, X, y=None):
        stack = self._as_stack(X)
        side = stack.shape[1]
        ladder = size_ladder(side)
        self.config_ = ladder.by_name(self.model_name)
        manifest = _stack_to_manifest(stack)
        store = init_params(self.config_, derive_seed(self.seed, "init"))
        schedule = TrainSchedule(self.epochs, self.batch_size, self.learning_rate,
                                 derive_seed(self.seed, "train"))
        self.params_, self.loss_trace_ = train(store, self.config_, manifest, schedule)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise RuntimeError("MaskedAutoencoder is not fitted")
        stack = self._as_stack(X)
        if stack.shape[1] != self.config_.image_side:
            raise ValueError(
                f"images are {stack.shape[1]}px, model was fitted at {self.config_.image_side}px"
            )
        return encode_features(self.params_, self.config_, stack)


def _stack_to_manifest(stack: np.ndarray) -> CorpusManifest:
    clipped = np.clip(stack, 0.0, 1.0)
    side = stack.shape[1]
    records = tuple(
        ImageRecord(id=f"arr-{i:06d}", source="SYNTHETIC-0", width=side, height=side,
                    pixels=clipped[i].astype(np.float32))
        for i in range(stack.shape[0])
    )
    return CorpusManifest(records=records, mixture=MixtureSpec({"SYNTHETIC-0": 1.0}), class_count=0)
