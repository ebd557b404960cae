"""Differentiable building blocks shared by the contour and image generators.

Layouts are written in the ``K{k}D{d}S{s}C{c}`` layer grammar, joined by
`` - ``. Besides conv layers a layout may contain ``resize`` (2x nearest
upsampling), ``concat`` (join the refine branches) and a trailing
``(contextual attention)`` marker on a conv layer.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import AttentionError, ConfigError, ContractError

COARSE_LAYOUT = (
    "K5S1C48 - K3S2C96 - K3S1C96 - K3S2C192 - K3S1C192 - K3S1C192 - "
    "K3D2S1C192 - K3D4S1C192 - K3D8S1C192 - K3D16S1C192 - K3S1C192 - K3S1C192 - "
    "resize - K3S1C96 - K3S1C96 - resize - K3S1C48 - K3S1C24 - K3S1C3"
)
REFINE_BRANCH1_LAYOUT = (
    "K5S1C48 - K3S2C96 - K3S1C96 - K3S2C192 - K3S1C192 - K3S1C192 - K3D2S1C192 - K3D4S1C192"
)
REFINE_BRANCH2_LAYOUT = (
    "K5S1C48 - K3S2C96 - K3S1C96 - K3S2C192 - K3S1C192 - "
    "K3S1C192 (contextual attention) - K3S1C192 - K3S1C192"
)
REFINE_DECODER_LAYOUT = (
    "concat - K3S1C192 - K3S1C192 - resize - K3S1C96 - K3S1C96 - resize - K3S1C48 - K3S1C24 - K3S1C3"
)

_CONV_RE = re.compile(r"^K(\d+)(?:D(\d+))?S(\d+)C(\d+)$")
_ATTN_RE = re.compile(r"\s*\(contextual attention\)\s*$")


@dataclass(frozen=True)
class LayerSpec:
    kernel: int = 3
    dilation: int = 1
    stride: int = 1
    channels: int = 0
    activation: str = "elu"
    attention: bool = False
    resize: bool = False
    concat: bool = False

    @property
    def is_conv(self):
        return not (self.resize or self.concat)


def parse_layer_spec(token: str) -> LayerSpec:
    token = token.strip()
    if token.startswith("resize"):
        return LayerSpec(resize=True)
    if token == "concat":
        return LayerSpec(concat=True)
    attention = bool(_ATTN_RE.search(token))
    token = _ATTN_RE.sub("", token)
    m = _CONV_RE.match(token)
    if not m:
        raise ConfigError(f"cannot parse layer spec {token!r}")
    k, d, s, c = int(m[1]), int(m[2] or 1), int(m[3]), int(m[4])
    if k % 2 == 0 or s not in (1, 2) or d < 1 or c < 1:
        raise ConfigError(f"invalid layer spec {token!r}: need odd K, S in {{1,2}}, D >= 1, C >= 1")
    return LayerSpec(kernel=k, dilation=d, stride=s, channels=c, attention=attention)


def parse_layout(layout) -> list[LayerSpec]:
    tokens = layout.split(" - ") if isinstance(layout, str) else list(layout)
    return [parse_layer_spec(t) for t in tokens]


def _scaled(channels, width):
    return max(1, int(round(channels * width)))


# ---------------------------------------------------------------------------
# gated convolution

class GatedConv2d(nn.Module):
    """``elu(conv_feature(x)) * sigmoid(conv_gate(x))`` with 'same' padding.

    The two branches hold separate parameters but run as one convolution.
    """

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, dilation=1, activation="elu"):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.stride, self.dilation = stride, dilation
        self.padding = dilation * (kernel_size - 1) // 2
        self.activation = activation
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size * kernel_size
        # He init for the ELU branch, doubled because the gate starts near 0.5;
        # keeps activation scale roughly constant through deep stacks.
        self.feature_weight = nn.Parameter(torch.randn(shape) * (2 * math.sqrt(2.0 / fan_in)))
        self.feature_bias = nn.Parameter(torch.zeros(out_channels))
        self.gate_weight = nn.Parameter(torch.randn(shape) / math.sqrt(fan_in))
        self.gate_bias = nn.Parameter(torch.zeros(out_channels))

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ContractError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        weight = torch.cat([self.feature_weight, self.gate_weight])
        bias = torch.cat([self.feature_bias, self.gate_bias])
        feature, gate = F.conv2d(x, weight, bias, self.stride, self.padding, self.dilation).chunk(2, dim=1)
        if self.activation == "elu":
            feature = F.elu(feature)
        return feature * torch.sigmoid(gate)


def gated_conv(x, feature_weight, feature_bias, gate_weight, gate_bias, stride=1, dilation=1):
    """Functional form of :class:`GatedConv2d`."""
    padding = dilation * (feature_weight.shape[-1] - 1) // 2
    feature = F.conv2d(x, feature_weight, feature_bias, stride, padding, dilation)
    gate = F.conv2d(x, gate_weight, gate_bias, stride, padding, dilation)
    return F.elu(feature) * torch.sigmoid(gate)


# ---------------------------------------------------------------------------
# contextual attention

def valid_key_mask(hole, patch=3):
    """(B, H*W) bool: patch centred here lies inside the image and avoids the hole."""
    pad = patch // 2
    ones = torch.ones_like(hole[:, :1])
    inside = F.unfold(ones, patch, padding=pad).sum(1) == patch * patch
    clear = F.unfold(hole[:, :1], patch, padding=pad).sum(1) == 0
    return inside & clear


def contextual_attention(fg, bg, hole, patch=3, softmax_scale=10.0, eps=1e-8,
                         return_weights=False, passthrough_empty=False):
    """Reconstruct ``fg`` from background patches of ``bg`` weighted by cosine similarity.

    Keys are ``patch x patch`` windows of ``bg`` that lie fully inside the image
    and contain no hole pixel. Every query window of ``fg`` attends to the keys
    through ``softmax(softmax_scale * cos)``; the weighted key windows are
    pasted back and overlapping contributions averaged.

    ``hole`` must have the spatial size of the features. A sample without any
    valid key raises :class:`AttentionError`, unless ``passthrough_empty`` is
    set, in which case that sample's ``fg`` is returned unchanged.
    """
    if fg.shape != bg.shape:
        raise ContractError(f"fg/bg shape mismatch {tuple(fg.shape)} vs {tuple(bg.shape)}")
    b, c, h, w = fg.shape
    if hole.shape[-2:] != (h, w):
        raise ContractError("hole must match the feature resolution")
    pad = patch // 2
    valid = valid_key_mask(hole.to(fg.dtype), patch)
    empty = ~valid.any(dim=1)
    if empty.any():
        if not passthrough_empty:
            raise AttentionError("no fully valid background patch to attend to")
        valid = valid | empty[:, None]

    queries = F.unfold(fg, patch, padding=pad)  # (B, C*p*p, L)
    keys = F.unfold(bg, patch, padding=pad)
    qn = queries / queries.norm(dim=1, keepdim=True).clamp_min(eps)
    kn = keys / keys.norm(dim=1, keepdim=True).clamp_min(eps)
    scores = torch.einsum("bdq,bdk->bqk", qn, kn) * softmax_scale
    scores = scores.masked_fill(~valid[:, None, :], float("-inf"))
    weights = torch.softmax(scores, dim=-1)

    pasted = torch.einsum("bqk,bdk->bdq", weights, keys)
    out = F.fold(pasted, (h, w), patch, padding=pad)
    count = F.fold(torch.ones_like(pasted[:1, :patch * patch]), (h, w), patch, padding=pad)
    out = out / count
    if empty.any():
        out = torch.where(empty[:, None, None, None], fg, out)
    return (out, weights) if return_weights else out


def downsample_hole(hole, size):
    """Shrink a hole mask so any missing pixel marks its whole cell as missing."""
    if hole.shape[-2:] == tuple(size):
        return hole
    return F.adaptive_max_pool2d(hole, size)


class ContextualAttention(nn.Module):
    def __init__(self, patch=3, softmax_scale=10.0):
        super().__init__()
        self.patch = patch
        self.softmax_scale = softmax_scale

    def forward(self, x, hole):
        small = downsample_hole(hole, x.shape[-2:])
        return contextual_attention(x, x, small, self.patch, self.softmax_scale, passthrough_empty=True)


# ---------------------------------------------------------------------------
# spectral normalization

def spectral_normalize(weight, u, v=None, n_power_iterations=1, eps=1e-12):
    """Divide ``weight`` by its top singular value estimated by power iteration.

    ``weight`` is flattened to ``(out_channels, -1)``. ``u`` and ``v`` are the
    persistent singular-vector estimates; the updated pair is returned so the
    caller can store it. Returns ``(normalized_weight, u, v, sigma)``.
    """
    mat = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        if v is None:
            v = F.normalize(mat.t() @ u, dim=0, eps=eps)
        for _ in range(n_power_iterations):
            v_new = F.normalize(mat.t() @ u, dim=0, eps=eps)
            u_new = F.normalize(mat @ v_new, dim=0, eps=eps)
            if u_new.abs().sum() == 0:
                break
            u, v = u_new, v_new
    # u, v are constants for autograd; clone so later in-place buffer updates
    # cannot invalidate a saved graph.
    sigma = torch.dot(u.clone(), mat @ v.clone()).clamp_min(eps)
    return weight / sigma, u, v, sigma


class SNConv2d(nn.Module):
    """Conv2d whose kernel is spectrally normalized on every forward pass.

    In training mode each call runs one power-iteration step on the stored
    ``u``/``v`` unless ``update=False``; in eval mode the stored vectors are
    used as is.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, eps=1e-12):
        super().__init__()
        conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride, padding)
        self.weight_orig = nn.Parameter(conv.weight.detach().clone())
        self.bias = nn.Parameter(conv.bias.detach().clone())
        self.stride, self.padding, self.eps = stride, padding, eps
        u = F.normalize(torch.randn(out_channels), dim=0)
        v = F.normalize(self.weight_orig.detach().reshape(out_channels, -1).t() @ u, dim=0)
        self.register_buffer("u", u)
        self.register_buffer("v", v)

    @property
    def in_channels(self):
        return self.weight_orig.shape[1]

    def normalized_weight(self, update=True):
        n_iter = 1 if (self.training and update) else 0
        weight, u, v, _ = spectral_normalize(self.weight_orig, self.u, self.v, n_iter, self.eps)
        if n_iter:
            with torch.no_grad():
                self.u.copy_(u)
                self.v.copy_(v)
        return weight

    def forward(self, x, update=True):
        return F.conv2d(x, self.normalized_weight(update), self.bias, self.stride, self.padding)


class PatchDiscriminator(nn.Module):
    """Fully convolutional spectral-norm discriminator emitting a raw score map."""

    def __init__(self, in_channels, base_channels=64, width=1.0, n_layers=4, kernel_size=5):
        super().__init__()
        self.in_channels = in_channels
        chans = [_scaled(base_channels * min(2 ** i, 4), width) for i in range(n_layers - 1)] + [1]
        layers, prev = [], in_channels
        for c in chans:
            layers.append(SNConv2d(prev, c, kernel_size, stride=2, padding=kernel_size // 2))
            prev = c
        self.layers = nn.ModuleList(layers)

    def forward(self, x, update_sn=True):
        if x.shape[1] != self.in_channels:
            raise ContractError(f"discriminator expects {self.in_channels} channels, got {x.shape[1]}")
        for i, layer in enumerate(self.layers):
            x = layer(x, update=update_sn)
            if i < len(self.layers) - 1:
                x = F.leaky_relu(x, 0.2)
        return x


# ---------------------------------------------------------------------------
# generator stacks

class GatedStack(nn.Module):
    """Sequence of gated convs built from a layout string.

    The last conv of a stack with ``out_channels`` set is a plain conv head
    whose channel count replaces the layout's.
    """

    def __init__(self, layout, in_channels, width=1.0, out_channels=None, softmax_scale=10.0):
        super().__init__()
        specs = [s for s in parse_layout(layout) if not s.concat]
        last_conv = max(i for i, s in enumerate(specs) if s.is_conv)
        self.specs = specs
        self.layers = nn.ModuleList()
        self.attention = nn.ModuleDict()
        prev = in_channels
        for i, spec in enumerate(specs):
            if spec.resize:
                self.layers.append(nn.Identity())
                continue
            if out_channels is not None and i == last_conv:
                layer = nn.Conv2d(prev, out_channels, spec.kernel, spec.stride,
                                  spec.dilation * (spec.kernel - 1) // 2, spec.dilation)
                prev = out_channels
            else:
                c = _scaled(spec.channels, width)
                layer = GatedConv2d(prev, c, spec.kernel, spec.stride, spec.dilation)
                prev = c
            self.layers.append(layer)
            if spec.attention:
                self.attention[str(i)] = ContextualAttention(3, softmax_scale)
        self.out_channels = prev

    def forward(self, x, hole=None):
        for i, (spec, layer) in enumerate(zip(self.specs, self.layers)):
            if spec.resize:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
                continue
            x = layer(x)
            if spec.attention:
                x = self.attention[str(i)](x, hole)
        return x


class RefineNet(nn.Module):
    """Two-branch encoder (plain + contextual attention) and a shared decoder."""

    def __init__(self, in_channels, out_channels, width=1.0, softmax_scale=10.0):
        super().__init__()
        self.branch1 = GatedStack(REFINE_BRANCH1_LAYOUT, in_channels, width)
        self.branch2 = GatedStack(REFINE_BRANCH2_LAYOUT, in_channels, width, softmax_scale=softmax_scale)
        self.decoder = GatedStack(REFINE_DECODER_LAYOUT, self.branch1.out_channels + self.branch2.out_channels,
                                  width, out_channels=out_channels)

    def forward(self, x, hole):
        return self.decoder(torch.cat([self.branch1(x), self.branch2(x, hole)], dim=1))


def first_layer_prefixes(generator_prefix=""):
    """Parameter-name prefixes of the layers that read the raw network input."""
    return tuple(generator_prefix + p for p in ("coarse.layers.0.", "refine.branch1.layers.0.",
                                                "refine.branch2.layers.0."))
