"""Networks: glyph/style encoders, text fusion, style generator, discriminator.

Channel ladder of the generator (``base`` = bottleneck width)::

    block1  base      H/32
    block2  base/2    H/16
    block3  base/4    H/8
    block4  base/8    H/4
    block5  base/16   H/2
    block6  base/16   H      -> 3 x H x W

The glyph encoder mirrors this ladder in reverse so that every U-net skip
has the channel count of the generator block it feeds.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import torch
from torch import nn
from torch.nn import functional as F

N_BLOCKS = 6
ALIGN = 32


@dataclass
class GenConfig:
    base_channels: int = 128
    attn_blocks: tuple = (4, 5)
    image_align: int = ALIGN
    style_dim: int = 512
    text_dim: int = 64
    d_k: int | None = None  # attention width; defaults to the block's channels
    encoder_depths: tuple = (3, 4, 6, 3)
    style_width: int = 16
    disc_width: int = 16
    style_downsample: int = 1  # avg-pool factor applied to the poster before the style encoder
    use_text: bool = True

    def __post_init__(self):
        self.attn_blocks = tuple(sorted(set(self.attn_blocks)))
        self.encoder_depths = tuple(self.encoder_depths)
        if not set(self.attn_blocks) <= {2, 3, 4, 5}:
            raise ValueError(f"attn_blocks must be a subset of {{2,3,4,5}}, got {self.attn_blocks}")
        if self.base_channels % 16 or self.base_channels < 16:
            raise ValueError("base_channels must be a positive multiple of 16")
        if len(self.encoder_depths) != 4:
            raise ValueError("encoder_depths needs one entry per encoder stage (4)")

    @classmethod
    def toy(cls, **kw):
        """Desk-scale preset: one residual block per encoder stage, pooled style input."""
        base = dict(base_channels=128, style_dim=128, encoder_depths=(1, 1, 1, 1),
                    style_width=8, disc_width=16, style_downsample=2)
        base.update(kw)
        return cls(**base)

    def channels(self, block):
        """Output channels of generator block 1..6."""
        return self.base_channels >> (min(block, 5) - 1)

    def to_dict(self):
        d = asdict(self)
        d["attn_blocks"] = list(self.attn_blocks)
        d["encoder_depths"] = list(self.encoder_depths)
        return d

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class StyleState:
    s: torch.Tensor  # (B, S) background style
    z0_proj: torch.Tensor  # (B, S) projected sentence token
    w: list = field(default_factory=list)  # per modulated conv, each (B, S)

    @property
    def s_fused(self):
        return self.s + self.z0_proj


# ----------------------------------------------------------------------------
# building blocks


def lrelu(x):
    return F.leaky_relu(x, 0.2) * math.sqrt(2.0)


def upsample2x(x):
    # bilinear x2 with half-pixel centres is the separable [1,3,3,1]/4
    # upsample-then-blur FIR of the style-based generator family
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class ModulatedConv2d(nn.Module):
    """Conv whose weights are scaled per-sample by an affine map of a style vector."""

    def __init__(self, in_ch, out_ch, kernel, style_dim, demodulate=True):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.demodulate = demodulate
        # plain fan-in init (no runtime equalized-lr scaling) so that the
        # conventional Adam step size applies directly
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel) / math.sqrt(in_ch * kernel * kernel))
        self.affine = nn.Linear(style_dim, in_ch)
        nn.init.normal_(self.affine.weight, std=1.0 / math.sqrt(style_dim))
        nn.init.ones_(self.affine.bias)

    def forward(self, x, w):
        B, C, H, W = x.shape
        style = self.affine(w).view(B, 1, C, 1, 1)
        weight = self.weight.unsqueeze(0) * style
        if self.demodulate:
            weight = weight * torch.rsqrt(weight.pow(2).sum([2, 3, 4], keepdim=True) + 1e-8)
        weight = weight.view(B * self.out_ch, C, self.kernel, self.kernel)
        out = F.conv2d(x.reshape(1, B * C, H, W), weight, padding=self.kernel // 2, groups=B)
        return out.view(B, self.out_ch, H, W)


class StyleConv(nn.Module):
    def __init__(self, in_ch, out_ch, style_dim):
        super().__init__()
        self.conv = ModulatedConv2d(in_ch, out_ch, 3, style_dim)
        self.bias = nn.Parameter(torch.zeros(1, out_ch, 1, 1))

    def forward(self, x, w):
        return lrelu(self.conv(x, w) + self.bias)


class ToRGB(nn.Module):
    def __init__(self, in_ch, style_dim):
        super().__init__()
        self.conv = ModulatedConv2d(in_ch, 3, 1, style_dim, demodulate=False)
        self.bias = nn.Parameter(torch.zeros(1, 3, 1, 1))

    def forward(self, x, w, skip=None):
        out = self.conv(x, w) + self.bias
        if skip is not None:
            out = out + upsample2x(skip)
        return out


class ResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1)
        self.short = None
        if stride != 1 or in_ch != out_ch:
            self.short = nn.Conv2d(in_ch, out_ch, 1, stride)

    def forward(self, x):
        y = self.conv2(F.leaky_relu(self.conv1(x), 0.2))
        s = x if self.short is None else self.short(x)
        return F.leaky_relu(s + y, 0.2) / math.sqrt(2.0)


def _stage(in_ch, out_ch, depth, stride):
    return nn.Sequential(ResBlock(in_ch, out_ch, stride), *[ResBlock(out_ch, out_ch) for _ in range(depth - 1)])


def check_aligned(t, align=ALIGN, name="input"):
    H, W = t.shape[-2:]
    if H % align or W % align:
        raise ValueError(f"{name} spatial size {(H, W)} is not a multiple of {align}")


# ----------------------------------------------------------------------------
# encoders


class GlyphEncoder(nn.Module):
    """Residual glyph encoder; four stages like ResNet-34, width mirrored to the generator."""

    def __init__(self, cfg):
        super().__init__()
        ch = [cfg.channels(b) for b in (5, 4, 3, 2, 1)]  # at 1/2, 1/4, 1/8, 1/16, 1/32
        self.stem = nn.Sequential(nn.Conv2d(1, ch[0], 3, 2, 1), nn.LeakyReLU(0.2))
        self.stages = nn.ModuleList(
            _stage(ch[i], ch[i + 1], cfg.encoder_depths[i], 2) for i in range(4)
        )

    def forward(self, glyph):
        check_aligned(glyph, name="glyph")
        x = self.stem(glyph)
        feats = [x]
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        # skips ordered by generator use: 1/16, 1/8, 1/4, 1/2
        return feats[-1], feats[-2::-1]


class StyleEncoder(nn.Module):
    """Encodes poster background + position mask (4 channels) to a style vector."""

    def __init__(self, cfg):
        super().__init__()
        w = cfg.style_width
        self.downsample = cfg.style_downsample
        self.stem = nn.Sequential(
            nn.Conv2d(4, w, 7, 2, 3), nn.LeakyReLU(0.2), nn.MaxPool2d(3, 2, 1)
        )
        widths = [w, w, 2 * w, 4 * w, 8 * w]
        strides = [1, 2, 2, 2]
        self.stages = nn.Sequential(
            *[_stage(widths[i], widths[i + 1], cfg.encoder_depths[i], strides[i]) for i in range(4)]
        )
        self.head = nn.Linear(8 * w, cfg.style_dim)

    def forward(self, bg, pos_mask):
        if bg.shape[-2:] != pos_mask.shape[-2:] or bg.shape[0] != pos_mask.shape[0]:
            raise ValueError(f"background {tuple(bg.shape)} and mask {tuple(pos_mask.shape)} disagree")
        x = torch.cat([bg, pos_mask], dim=1)
        if self.downsample > 1:
            x = F.avg_pool2d(x, self.downsample, ceil_mode=True)
        x = self.stages(self.stem(x))
        return self.head(x.mean(dim=(2, 3)))


class MappingNetwork(nn.Module):
    """Two-layer MLP from the fused style vector to one w per modulated conv."""

    def __init__(self, style_dim, n_styles):
        super().__init__()
        self.n_styles, self.style_dim = n_styles, style_dim
        self.fc1 = nn.Linear(style_dim, style_dim)
        self.fc2 = nn.Linear(style_dim, n_styles * style_dim)

    def forward(self, s):
        h = F.leaky_relu(self.fc1(s), 0.2)
        return list(self.fc2(h).view(-1, self.n_styles, self.style_dim).unbind(1))


# ----------------------------------------------------------------------------
# semantic-aware cross-attention


def cross_attention(x, tokens, w_v, w_t, w_out, mask=None, return_weights=False):
    """Visual tokens attend to text tokens with a residual query path.

    x: (B, C2, H, W); tokens: (B, N, C1); w_v: (C2, dk); w_t: (C1, dk);
    w_out: (dk, C2); mask: (B, N) bool, False = padding token.
    Returns the attended map with the shape of ``x``.
    """
    B, C2, H, W = x.shape
    zv = x.flatten(2).transpose(1, 2)  # (B, HW, C2)
    q = zv @ w_v
    k = tokens @ w_t
    logits = q @ k.transpose(1, 2) / math.sqrt(w_v.shape[1])
    if mask is not None:
        logits = logits.masked_fill(~mask[:, None, :], float("-inf"))
    attn = torch.softmax(logits, dim=-1)
    z = attn @ k + q
    out = (z @ w_out).transpose(1, 2).reshape(B, C2, H, W)
    return (out, attn) if return_weights else out


class CrossAttention(nn.Module):
    def __init__(self, vis_dim, text_dim, d_k=None):
        super().__init__()
        d_k = d_k or vis_dim
        self.w_v = nn.Parameter(torch.randn(vis_dim, d_k) / math.sqrt(vis_dim))
        self.w_t = nn.Parameter(torch.randn(text_dim, d_k) / math.sqrt(text_dim))
        self.w_out = nn.Parameter(torch.randn(d_k, vis_dim) / math.sqrt(d_k))

    def forward(self, x, tokens, mask=None):
        return cross_attention(x, tokens, self.w_v, self.w_t, self.w_out, mask)


# ----------------------------------------------------------------------------
# generator


class GenBlock(nn.Module):
    def __init__(self, in_ch, out_ch, extra_ch, style_dim, attn=None):
        super().__init__()
        self.attn = attn
        self.fuse = nn.Conv2d(in_ch + extra_ch, out_ch, 1)
        self.conv1 = StyleConv(out_ch, out_ch, style_dim)
        self.conv2 = StyleConv(out_ch, out_ch, style_dim)
        self.to_rgb = ToRGB(out_ch, style_dim)


class Generator(nn.Module):
    n_styles = 3 * N_BLOCKS

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        S, base = cfg.style_dim, cfg.base_channels
        self.conv_in = nn.Conv2d(base, base, 3, 1, 1)
        self.b1_conv1 = StyleConv(base, base, S)
        self.b1_conv2 = StyleConv(base, base, S)
        self.b1_rgb = ToRGB(base, S)
        blocks = []
        for b in range(2, N_BLOCKS + 1):
            cin, cout = cfg.channels(b - 1), cfg.channels(b)
            attn = None
            if b in cfg.attn_blocks and cfg.use_text:
                attn = CrossAttention(cin, cfg.text_dim, cfg.d_k)
            # blocks 2-5 take a glyph skip of the output width; block 6 takes
            # the local background plus the full-resolution glyph raster
            extra = cout if b < N_BLOCKS else 4
            blocks.append(GenBlock(cin, cout, extra, S, attn))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, bottleneck, skips, ws, tokens=None, token_mask=None, local_bg=None, glyph=None):
        if len(ws) != self.n_styles:
            raise ValueError(f"expected {self.n_styles} style vectors, got {len(ws)}")
        if len(skips) != N_BLOCKS - 2:
            raise ValueError(f"expected {N_BLOCKS - 2} skips, got {len(skips)}")
        B, C, h, w = bottleneck.shape
        H, W = h * ALIGN, w * ALIGN
        if C != self.cfg.base_channels:
            raise ValueError(f"bottleneck has {C} channels, expected {self.cfg.base_channels}")
        if local_bg is None or tuple(local_bg.shape) != (B, 3, H, W):
            got = None if local_bg is None else tuple(local_bg.shape)
            raise ValueError(f"local background must be {(B, 3, H, W)}, got {got}")

        x = self.conv_in(bottleneck)
        x = self.b1_conv1(x, ws[0])
        x = self.b1_conv2(x, ws[1])
        rgb = self.b1_rgb(x, ws[2])
        for i, blk in enumerate(self.blocks):
            b = i + 2
            if blk.attn is not None:
                x = blk.attn(x, tokens, token_mask)
            x = upsample2x(x)
            extra = skips[i] if b < N_BLOCKS else torch.cat([local_bg, self._full_res_glyph(glyph, local_bg)], 1)
            if extra.shape[-2:] != x.shape[-2:]:
                raise ValueError(f"block {b}: extra input {tuple(extra.shape)} vs features {tuple(x.shape)}")
            x = blk.fuse(torch.cat([x, extra], dim=1))
            x = blk.conv1(x, ws[3 * i + 3])
            x = blk.conv2(x, ws[3 * i + 4])
            rgb = blk.to_rgb(x, ws[3 * i + 5], rgb)
        return torch.tanh(rgb)

    @staticmethod
    def _full_res_glyph(glyph, local_bg):
        if glyph is None:
            return torch.zeros_like(local_bg[:, :1])
        if glyph.shape[-2:] != local_bg.shape[-2:]:
            raise ValueError(f"glyph {tuple(glyph.shape)} vs local background {tuple(local_bg.shape)}")
        return glyph


class Discriminator(nn.Module):
    """Strided conv stack over (image, local background); one logit per item."""

    def __init__(self, cfg):
        super().__init__()
        d = cfg.disc_width
        widths = [6, d, 2 * d, 4 * d, 8 * d, 8 * d]
        layers = []
        for i in range(5):
            layers += [nn.Conv2d(widths[i], widths[i + 1], 3, 2, 1), nn.LeakyReLU(0.2)]
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(8 * d, 1)

    def forward(self, img, local_bg):
        if img.shape != local_bg.shape:
            raise ValueError(f"image {tuple(img.shape)} and local background {tuple(local_bg.shape)} disagree")
        return self.head(self.body(torch.cat([img, local_bg], dim=1)).mean(dim=(2, 3))).squeeze(1)


# ----------------------------------------------------------------------------
# full model


class TextPainter(nn.Module):
    """Glyph + background (+ text tokens) -> recolored text image."""

    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg or GenConfig()
        self.glyph_encoder = GlyphEncoder(self.cfg)
        self.style_encoder = StyleEncoder(self.cfg)
        self.sentence_proj = nn.Linear(self.cfg.text_dim, self.cfg.style_dim, bias=False) if self.cfg.use_text else None
        self.mapping = MappingNetwork(self.cfg.style_dim, Generator.n_styles)
        self.generator = Generator(self.cfg)

    def fuse_sentence(self, s, z0):
        if self.sentence_proj is None:
            return s
        return s + self.sentence_proj(z0)

    def style_state(self, backgrounds, pos_mask, z0=None):
        s = self.style_encoder(backgrounds, pos_mask)
        if self.sentence_proj is None or z0 is None:
            z0_proj = torch.zeros_like(s)
        else:
            z0_proj = self.sentence_proj(z0)
        state = StyleState(s=s, z0_proj=z0_proj)
        state.w = self.mapping(state.s_fused)
        return state

    def forward(self, glyph, backgrounds, pos_mask, local_bg, tokens=None, token_mask=None):
        if not self.cfg.use_text:
            tokens = token_mask = None
        elif tokens is None:
            raise ValueError("text tokens required when use_text is set")
        z0 = tokens[:, 0] if tokens is not None else None
        bottleneck, skips = self.glyph_encoder(glyph)
        state = self.style_state(backgrounds, pos_mask, z0)
        return self.generator(bottleneck, skips, state.w, tokens, token_mask, local_bg, glyph)

    def forward_batch(self, batch, text_encoder=None):
        tokens = mask = None
        if self.cfg.use_text:
            from .textsem import encode_text, pad_bundles

            tokens, mask = pad_bundles([encode_text(c, text_encoder) for c in batch.contents])
            tokens = tokens.to(batch.glyph.dtype)
        return self(batch.glyph, batch.backgrounds, batch.pos_mask, batch.local_bg, tokens, mask)
