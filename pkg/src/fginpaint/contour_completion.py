"""Contour completion: coarse/refine contour generator, focal content loss, hinge losses.

Tensors follow torch layout: images ``(B, 3, H, W)``, contours and holes
``(B, 1, H, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ContractError
from .nnblocks import COARSE_LAYOUT, GatedStack, PatchDiscriminator, RefineNet


class ContourGenOutput(NamedTuple):
    coarse: torch.Tensor
    refined: torch.Tensor


@dataclass(frozen=True)
class ContourLossConfig:
    lam: float = 5.0
    bce_clamp_eps: float = 1e-6
    adversarial_weight: float = 0.0

    def validate(self):
        if self.lam <= 0:
            raise ConfigError("lambda must be > 0")
        if not 0 < self.bce_clamp_eps < 0.5:
            raise ConfigError("bce_clamp_eps must lie in (0, 0.5)")


def _check_shapes(*tensors):
    b, _, h, w = tensors[0].shape
    for t in tensors[1:]:
        if t.shape[0] != b or t.shape[-2:] != (h, w):
            raise ContractError(f"shape mismatch: {tuple(tensors[0].shape)} vs {tuple(t.shape)}")


class ContourGenerator(nn.Module):
    """Coarse network on (image, contour, hole); refine network on (coarse, hole).

    The coarse contour is composited with the known contour and detached before
    the refine stage, so refine-stage losses (including the adversarial one)
    never reach the coarse parameters.
    """

    in_channels = 5

    def __init__(self, width=0.25, softmax_scale=10.0):
        super().__init__()
        self.coarse = GatedStack(COARSE_LAYOUT, self.in_channels, width, out_channels=1)
        self.refine = RefineNet(2, 1, width, softmax_scale)

    def forward(self, image_in, contour_in, hole):
        _check_shapes(image_in, contour_in, hole)
        coarse = torch.sigmoid(self.coarse(torch.cat([image_in, contour_in, hole], dim=1)))
        merged = hole * coarse.detach() + (1 - hole) * contour_in
        refined = torch.sigmoid(self.refine(torch.cat([merged, hole], dim=1), hole))
        return ContourGenOutput(coarse, refined)


def contour_forward(generator, image_in, contour_in, hole):
    return generator(image_in, contour_in, hole)


def make_contour_discriminator(width=0.25, base_channels=64, n_layers=4):
    """PatchGAN judging (image, contour) pairs: 3 + 1 input channels."""
    return PatchDiscriminator(4, base_channels, width, n_layers)


def focal_contour_loss(pred, gt, hole, cfg: ContourLossConfig = ContourLossConfig()):
    """Hole-weighted BCE modulated by (pred - gt)^2, averaged over all pixels."""
    if not torch.all((gt == 0) | (gt == 1)):
        raise ContractError("ground-truth contour must be binary")
    if pred.shape != gt.shape or hole.shape != gt.shape:
        raise ContractError(f"shape mismatch {tuple(pred.shape)}, {tuple(gt.shape)}, {tuple(hole.shape)}")
    eps = cfg.bce_clamp_eps
    # clamped value, identity gradient: a saturated sigmoid can still recover
    p = pred + (pred.clamp(eps, 1 - eps) - pred).detach()
    bce = -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p))
    weight = cfg.lam * hole + (1 - hole)
    return (weight * (p - gt) ** 2 * bce).mean()


def contour_content_loss(out: ContourGenOutput, gt, hole, cfg: ContourLossConfig = ContourLossConfig()):
    return focal_contour_loss(out.coarse, gt, hole, cfg) + focal_contour_loss(out.refined, gt, hole, cfg)


def hinge_d_loss(d_real, d_fake):
    if d_real.shape != d_fake.shape:
        raise ContractError("real/fake score maps differ in shape")
    return F.relu(1 - d_real).mean() + F.relu(1 + d_fake).mean()


def hinge_g_loss(d_fake):
    return -d_fake.mean()


def contour_d_loss(d_real, d_fake):
    return hinge_d_loss(d_real, d_fake)


def contour_g_adv_loss(d_fake):
    return hinge_g_loss(d_fake)


def contour_pair(image, contour):
    """Discriminator input: the contour conditioned on the ground-truth image."""
    return torch.cat([image, contour], dim=1)


def pixel_bce(pred, gt, eps=1e-6):
    """Mean per-pixel binary cross-entropy, used as a convergence measure."""
    p = pred.clamp(eps, 1 - eps)
    return -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p)).mean()
