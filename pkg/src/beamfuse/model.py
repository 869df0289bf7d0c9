"""Missing-modality-robust multimodal beam prediction network.

Pipeline: per-modality encoders -> token embedding -> learnable placeholder
substitution for missing modalities -> 2D/temporal sinusoidal position
embeddings -> token reweighting gate -> (training only) masked
modality-specific self-attention stack and class-former alignment ->
masked fusion cross-attention driven by a learnable fusion token block ->
prediction head over the beam codebook.

Attention masks carry the missing-modality logic: the specific mask is
block-diagonal over modality segments regardless of availability, while the
fusion mask hides every unavailable modality's key columns from the fusion
queries. Masked positions receive exactly zero attention weight, so the raw
content of a missing modality can never reach the prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import encoders, ops
from .encoders import MODALITIES
from .params import ParamStore, fan_in_uniform, gaussian
from .tensor import Tensor, concat, where


@dataclass
class ModelConfig:
    channels: int = 64
    heads: int = 8
    pool_v: int = 4
    pool_h: int = 4
    specific_layers: int = 2
    fusion_layers: int = 1
    ffn_mult: int = 4
    head_mult: int = 4
    dropout: float = 0.1
    embed_hidden: int = 64
    vector_hidden: int = 64
    image_widths: tuple[int, ...] = (16, 32, 64, 64)
    grid_widths: tuple[int, ...] = (16, 32, 64)
    window: int = 5
    codebook: int = 64
    use_posemb: bool = True
    use_gate: bool = True
    use_cma: bool = True
    cma_include_missing: bool = True

    def __post_init__(self):
        if self.channels % self.heads:
            raise ValueError(
                f"channels {self.channels} not divisible by heads {self.heads}")
        if self.channels % 4:
            raise ValueError(
                f"channels {self.channels} must be a multiple of 4 for the "
                "split sinusoidal embeddings")
        if self.image_widths[-1] != self.channels or \
                self.grid_widths[-1] != self.channels:
            raise ValueError(
                "encoder stage widths must end at the model channel width")
        if self.window < 2:
            raise ValueError(f"window {self.window} must be >= 2")
        if self.specific_layers < 1 or self.fusion_layers < 1:
            raise ValueError("specific_layers and fusion_layers must be >= 1")

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelConfig":
        return cls(
            channels=cfg["model.channels"],
            heads=cfg["model.heads"],
            pool_v=cfg["model.pool_v"],
            pool_h=cfg["model.pool_h"],
            specific_layers=cfg["model.specific_layers"],
            fusion_layers=cfg["model.fusion_layers"],
            ffn_mult=cfg["model.ffn_mult"],
            head_mult=cfg["model.head_mult"],
            dropout=cfg["model.dropout"],
            embed_hidden=cfg["model.embed_hidden"],
            vector_hidden=cfg["model.vector_hidden"],
            image_widths=tuple(cfg["model.image_widths"]),
            grid_widths=tuple(cfg["model.grid_widths"]),
            window=cfg["scene.window"],
            codebook=cfg["scene.codebook"],
            use_posemb=cfg["model.use_posemb"],
            use_gate=cfg["model.use_gate"],
            use_cma=cfg["model.use_cma"],
            cma_include_missing=cfg["model.cma_include_missing"],
        )

    def spans(self) -> dict[str, int]:
        g = self.pool_v * self.pool_h
        return {"image": g, "lidar": g, "radar": g,
                "beam": self.window - 1, "gps": 2}

    def modality_tokens(self) -> int:
        return 3 * self.pool_v * self.pool_h + self.window + 1

    def total_tokens(self) -> int:
        # modality tokens plus the mirrored fusion token block
        return 2 * self.modality_tokens()


@dataclass
class TokenLayout:
    segments: list[tuple[str, slice]]
    total: int

    @classmethod
    def build(cls, mc: ModelConfig) -> "TokenLayout":
        segs = []
        start = 0
        for name in MODALITIES:
            span = mc.spans()[name]
            segs.append((name, slice(start, start + span)))
            start += span
        return cls(segs, start)

    def span(self, name: str) -> slice:
        for seg_name, sl in self.segments:
            if seg_name == name:
                return sl
        raise KeyError(name)


@dataclass
class ForwardOutput:
    logits: Tensor                      # (B, K)
    fusion: Tensor                      # (B, T, C) fusion block output
    gate_l2: Optional[Tensor] = None    # scalar, training with gate
    gate: Optional[Tensor] = None       # (B, T, 1) sigmoid activations
    class_tokens: Optional[dict[str, Tensor]] = None  # per-branch (B, C)
    fusion_class: Optional[Tensor] = None             # (B, C)
    anchor_mask: Optional[np.ndarray] = None          # (B, 5) anchors used


# ----------------------------------------------------------------------
# positional embeddings

def sinusoid_table(positions: int, dim: int, scale: float = 10000.0) -> np.ndarray:
    """PE[k, 2i] = sin(k / scale^(2i/dim)), PE[k, 2i+1] = cos(same)."""
    if dim % 2:
        raise ValueError(f"embedding dim {dim} must be even")
    k = np.arange(positions)[:, None].astype(np.float64)
    i = np.arange(dim // 2)[None, :].astype(np.float64)
    angle = k / np.power(scale, 2.0 * i / dim)
    pe = np.zeros((positions, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def positional_table(mc: ModelConfig) -> np.ndarray:
    """(T, C) additive embedding: split 2D for grid modalities, temporal
    for beam history and GPS tokens."""
    c = mc.channels
    half = c // 2
    rows = sinusoid_table(mc.pool_v, half)
    cols = sinusoid_table(mc.pool_h, half)
    grid = np.zeros((mc.pool_v * mc.pool_h, c))
    for r in range(mc.pool_v):
        for cc in range(mc.pool_h):
            grid[r * mc.pool_h + cc, :half] = rows[r]
            grid[r * mc.pool_h + cc, half:] = cols[cc]
    beam = sinusoid_table(mc.window - 1, c)
    gps = sinusoid_table(2, c)
    return np.concatenate([grid, grid, grid, beam, gps], axis=0)


# ----------------------------------------------------------------------
# masks

def build_masks(avail: np.ndarray, mc: ModelConfig,
                layout: TokenLayout) -> tuple[np.ndarray, np.ndarray]:
    """Specific-block and fusion-block attention masks.

    avail is (B, 5) over (image, lidar, radar, beam, gps). Returns the
    block-diagonal specific mask (T, T), shared across the batch, and the
    fusion mask (B, 1, 1, 2T): available-modality columns and all
    fusion-token columns are 1, missing-modality columns 0.
    """
    avail = np.asarray(avail)
    if avail.ndim == 1:
        avail = avail[None, :]
    if avail.shape[1] != len(MODALITIES):
        raise ValueError(f"availability must have 5 flags, got {avail.shape}")
    if (avail.sum(axis=1) == 0).any():
        bad = int(np.argwhere(avail.sum(axis=1) == 0)[0, 0])
        raise ValueError(f"sample {bad}: all modalities unavailable")
    t = layout.total
    specific = np.zeros((t, t))
    for _, sl in layout.segments:
        specific[sl, sl] = 1.0
    b = avail.shape[0]
    fusion = np.ones((b, 1, 1, 2 * t))
    for i, (_, sl) in enumerate(layout.segments):
        fusion[:, 0, 0, sl] = avail[:, i, None]
    return specific, fusion


# ----------------------------------------------------------------------
# parameter construction

def build_params(mc: ModelConfig, rng: np.random.Generator,
                 dtype=np.float32) -> ParamStore:
    store = ParamStore(dtype=dtype)
    c = mc.channels
    for name in encoders.GRID_MODALITIES:
        widths = list(mc.image_widths if name == "image" else mc.grid_widths)
        encoders.init_grid_encoder(
            store, f"enc/{name}", encoders.GRID_INPUT_CHANNELS[name],
            widths, rng)
    for name in encoders.VECTOR_MODALITIES:
        encoders.init_vector_encoder(
            store, f"enc/{name}", encoders.VECTOR_INPUT_DIMS[name],
            mc.vector_hidden, c, rng)
    for name in encoders.GRID_MODALITIES:
        store.add(f"embed/{name}/fc0/w", fan_in_uniform(rng, (c, mc.embed_hidden)))
        store.add(f"embed/{name}/fc0/b", np.zeros(mc.embed_hidden))
        store.add(f"embed/{name}/fc1/w", fan_in_uniform(rng, (mc.embed_hidden, c)))
        store.add(f"embed/{name}/fc1/b", np.zeros(c))
    store.add("gate/fc0/w", fan_in_uniform(rng, (c, c)))
    store.add("gate/fc0/b", np.zeros(c))
    store.add("gate/fc1/w", fan_in_uniform(rng, (c, 1)))
    # start with open gates (sigmoid ~ 0.88) so the reweighting penalty
    # cannot shut every token off before the task gradient arrives
    store.add("gate/fc1/b", np.full(1, 2.0))
    spans = mc.spans()
    for name in MODALITIES:
        store.add(f"placeholder/{name}", gaussian(rng, (spans[name], c)))
    store.add("fusion_token", gaussian(rng, (mc.modality_tokens(), c)))

    def add_block(prefix: str):
        for proj in ("wq", "wk", "wv", "wo"):
            store.add(f"{prefix}/attn/{proj}", fan_in_uniform(rng, (c, c)))
        store.add(f"{prefix}/ln1/g", np.ones(c))
        store.add(f"{prefix}/ln1/s", np.zeros(c))
        hidden = mc.ffn_mult * c
        store.add(f"{prefix}/ffn/fc0/w", fan_in_uniform(rng, (c, hidden)))
        store.add(f"{prefix}/ffn/fc0/b", np.zeros(hidden))
        store.add(f"{prefix}/ffn/fc1/w", fan_in_uniform(rng, (hidden, c)))
        store.add(f"{prefix}/ffn/fc1/b", np.zeros(c))
        store.add(f"{prefix}/ln2/g", np.ones(c))
        store.add(f"{prefix}/ln2/s", np.zeros(c))

    for layer in range(mc.specific_layers):
        add_block(f"spec/{layer}")
    for layer in range(mc.fusion_layers):
        add_block(f"fus/{layer}")

    for proj in ("wq", "wk", "wv"):
        store.add(f"cma/{proj}", fan_in_uniform(rng, (c, c)))
    for name in MODALITIES:
        store.add(f"cma/query/{name}", gaussian(rng, (1, c)))
    store.add("cma/query/fusion", gaussian(rng, (1, c)))

    store.add("head/fc0/w", fan_in_uniform(rng, (c, mc.head_mult * c)))
    store.add("head/fc0/b", np.zeros(mc.head_mult * c))
    store.add("head/fc1/w", fan_in_uniform(rng, (mc.head_mult * c, mc.codebook)))
    store.add("head/fc1/b", np.zeros(mc.codebook))
    return store


# ----------------------------------------------------------------------

class BeamFuseModel:
    """Holds config, parameters and the forward pipeline."""

    def __init__(self, mc: ModelConfig, params: ParamStore):
        self.mc = mc
        self.params = params
        self.layout = TokenLayout.build(mc)
        self._pos = positional_table(mc).astype(params.dtype)

    @classmethod
    def build(cls, mc: ModelConfig, rng: np.random.Generator,
              dtype=np.float32) -> "BeamFuseModel":
        return cls(mc, build_params(mc, rng, dtype))

    # -- stages ---------------------------------------------------------
    def tokenize(self, feats: dict[str, Tensor],
                 avail: np.ndarray) -> list[Tensor]:
        """Per-modality token blocks (B, span, C), fixed modality order.

        Modalities absent for the whole batch skip their encoder; the
        placeholder substitution overwrites those rows anyway.
        """
        mc = self.mc
        p = self.params
        b = feats["gps"].shape[0]
        out = []
        for i, name in enumerate(MODALITIES):
            span = mc.spans()[name]
            if not avail[:, i].any():
                out.append(Tensor(np.zeros((b, span, mc.channels),
                                           dtype=p.dtype)))
                continue
            if name in encoders.GRID_MODALITIES:
                widths = list(mc.image_widths if name == "image"
                              else mc.grid_widths)
                enc = encoders.grid_encode(feats[name], p, f"enc/{name}",
                                           widths, (mc.pool_v, mc.pool_h))
                flat = enc.reshape(b, mc.channels, span).transpose(0, 2, 1)
                h = ops.gelu(ops.affine(flat, p[f"embed/{name}/fc0/w"],
                                        p[f"embed/{name}/fc0/b"]))
                tok = ops.affine(h, p[f"embed/{name}/fc1/w"],
                                 p[f"embed/{name}/fc1/b"])
            else:
                x = feats[name]
                if name == "beam":
                    x = x.reshape(b, mc.window - 1, 1)
                tok = encoders.vector_encode(x, p, f"enc/{name}")
            out.append(tok)
        return out

    def substitute_missing(self, tokens: list[Tensor],
                           avail: np.ndarray) -> Tensor:
        """Overwrite missing modalities' spans with their placeholder block."""
        p = self.params
        parts = []
        for i, name in enumerate(MODALITIES):
            cond = avail[:, i].astype(bool)[:, None, None]
            parts.append(where(cond, tokens[i], p[f"placeholder/{name}"]))
        return concat(parts, axis=1)

    def positional_embed(self, seq: Tensor) -> Tensor:
        if not self.mc.use_posemb:
            return seq
        return seq + Tensor(self._pos)

    def apply_gate(self, seq: Tensor) -> tuple[Tensor, Tensor]:
        """Reweight each token by the sigmoid of a shared MLP logit."""
        p = self.params
        h = ops.gelu(ops.affine(seq, p["gate/fc0/w"], p["gate/fc0/b"]))
        logit = ops.affine(h, p["gate/fc1/w"], p["gate/fc1/b"])
        g = ops.sigmoid(logit)
        return seq * g, g

    def _attention(self, prefix: str, q_in: Tensor, kv_in: Tensor,
                   mask: np.ndarray, training: bool,
                   rng: Optional[np.random.Generator]) -> Tensor:
        mc = self.mc
        p = self.params
        b, tq, c = q_in.shape
        tk = kv_in.shape[1]
        dk = c // mc.heads
        q = (q_in @ p[f"{prefix}/attn/wq"]).reshape(b, tq, mc.heads, dk)
        k = (kv_in @ p[f"{prefix}/attn/wk"]).reshape(b, tk, mc.heads, dk)
        v = (kv_in @ p[f"{prefix}/attn/wv"]).reshape(b, tk, mc.heads, dk)
        q = q.transpose(0, 2, 1, 3)
        k = k.transpose(0, 2, 3, 1)
        v = v.transpose(0, 2, 1, 3)
        scores = (q @ k) * (1.0 / math.sqrt(dk))
        weights = ops.masked_softmax(scores, mask)
        weights = ops.dropout(weights, mc.dropout, rng, training)
        ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(b, tq, c)
        return ctx @ p[f"{prefix}/attn/wo"]

    def _block(self, prefix: str, q_in: Tensor, kv_in: Tensor,
               mask: np.ndarray, training: bool,
               rng: Optional[np.random.Generator]) -> tuple[Tensor, Tensor]:
        """One attention block; returns (output, pre-FFN representation)."""
        p = self.params
        attn = self._attention(prefix, q_in, kv_in, mask, training, rng)
        z1 = ops.layer_norm(attn + q_in, p[f"{prefix}/ln1/g"],
                            p[f"{prefix}/ln1/s"])
        h = ops.gelu(ops.affine(z1, p[f"{prefix}/ffn/fc0/w"],
                                p[f"{prefix}/ffn/fc0/b"]))
        h = ops.dropout(h, self.mc.dropout, rng, training)
        f = ops.affine(h, p[f"{prefix}/ffn/fc1/w"], p[f"{prefix}/ffn/fc1/b"])
        out = ops.layer_norm(f + z1, p[f"{prefix}/ln2/g"],
                             p[f"{prefix}/ln2/s"])
        return out, z1

    def modality_specific_stack(self, seq: Tensor, specific_mask: np.ndarray,
                                training: bool,
                                rng: Optional[np.random.Generator]
                                ) -> tuple[Tensor, Tensor]:
        z = seq
        z1 = seq
        for layer in range(self.mc.specific_layers):
            z, z1 = self._block(f"spec/{layer}", z, z, specific_mask,
                                training, rng)
        return z, z1

    def fusion_stack(self, seq: Tensor, fusion_mask: np.ndarray,
                     training: bool, rng: Optional[np.random.Generator]
                     ) -> tuple[Tensor, Tensor]:
        """Fusion tokens query the full sequence [modality tokens, fusion]."""
        p = self.params
        b = seq.shape[0]
        # expand the (T, C) token block across the batch
        fus = p["fusion_token"] + Tensor(
            np.zeros((b, 1, 1), dtype=self.params.dtype))
        if self.mc.use_posemb:
            fus = fus + Tensor(self._pos.astype(self.params.dtype))
        z1 = fus
        for layer in range(self.mc.fusion_layers):
            kv = concat([seq, fus], axis=1)
            fus, z1 = self._block(f"fus/{layer}", fus, kv, fusion_mask,
                                  training, rng)
        return fus, z1

    def cma_forward(self, spec_z1: Tensor, fusion_z1: Tensor,
                    training: bool) -> tuple[dict[str, Tensor], Tensor]:
        """Class-former: one class query per branch cross-attends its tokens."""
        if not training:
            raise RuntimeError("class-former runs in training mode only")
        out = {}
        for name, sl in self.layout.segments:
            out[name] = self._class_attend(f"cma/query/{name}", spec_z1[:, sl])
        fusion_cls = self._class_attend("cma/query/fusion", fusion_z1)
        return out, fusion_cls

    def _class_attend(self, query_path: str, tokens: Tensor) -> Tensor:
        p = self.params
        c = self.mc.channels
        q = p[query_path] @ p["cma/wq"]                     # (1, C)
        k = tokens @ p["cma/wk"]                            # (B, S, C)
        v = tokens @ p["cma/wv"]
        scores = (k @ q.transpose(1, 0)) * (1.0 / math.sqrt(c))  # (B, S, 1)
        w = ops.softmax(scores.transpose(0, 2, 1), axis=-1)      # (B, 1, S)
        return (w @ v).reshape(tokens.shape[0], c)

    def head(self, fusion_out: Tensor) -> Tensor:
        p = self.params
        pooled = fusion_out.mean(axis=1)
        h = ops.gelu(ops.affine(pooled, p["head/fc0/w"], p["head/fc0/b"]))
        return ops.affine(h, p["head/fc1/w"], p["head/fc1/b"])

    # -- full pipeline ---------------------------------------------------
    def forward(self, feats: dict[str, np.ndarray], avail: np.ndarray,
                training: bool = False,
                rng: Optional[np.random.Generator] = None) -> ForwardOutput:
        """Run the network on a batch of preprocessed features.

        feats holds per-modality arrays: image (B,3,H,W), lidar (B,1,V,H),
        radar (B,2,G,S), beam (B,W-1), gps (B,2,2). avail is (B,5) in the
        fixed modality order.
        """
        mc = self.mc
        avail = np.asarray(avail)
        if avail.ndim == 1:
            avail = avail[None, :]
        specific_mask, fusion_mask = build_masks(avail, mc, self.layout)
        dtype = self.params.dtype
        tfeats = {k: Tensor(np.asarray(v, dtype=dtype)) for k, v in feats.items()}
        if training and mc.dropout > 0 and rng is None:
            raise ValueError("training forward with dropout needs an rng stream")

        tokens = self.tokenize(tfeats, avail)
        seq = self.substitute_missing(tokens, avail)
        seq = self.positional_embed(seq)
        gate_l2 = None
        gate = None
        if mc.use_gate:
            seq, gate = self.apply_gate(seq)
            gate_l2 = (gate * gate).mean()

        class_tokens = None
        fusion_cls = None
        spec_z1 = None
        if training and mc.use_cma:
            _, spec_z1 = self.modality_specific_stack(
                seq, specific_mask, training, rng)
        fusion_out, fusion_z1 = self.fusion_stack(
            seq, fusion_mask, training, rng)
        if training and mc.use_cma:
            class_tokens, fusion_cls = self.cma_forward(
                spec_z1, fusion_z1, training)
        logits = self.head(fusion_out)

        anchor_mask = None
        if class_tokens is not None:
            anchor_mask = (np.ones_like(avail) if mc.cma_include_missing
                           else avail.copy())
        return ForwardOutput(logits=logits, fusion=fusion_out,
                             gate_l2=gate_l2, gate=gate,
                             class_tokens=class_tokens,
                             fusion_class=fusion_cls,
                             anchor_mask=anchor_mask)
