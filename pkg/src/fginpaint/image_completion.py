"""Image completion guided by a completed contour at both the coarse and refine stage."""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .contour_completion import _check_shapes, hinge_d_loss, hinge_g_loss
from .errors import ContractError
from .nnblocks import COARSE_LAYOUT, GatedStack, PatchDiscriminator, RefineNet


class ImageGenOutput(NamedTuple):
    """Coarse and refined images, already mapped from the tanh range to [0, 1]."""

    coarse: torch.Tensor
    refined: torch.Tensor


def composite(output, image_in, hole):
    """Generated pixels inside the hole, known pixels everywhere else."""
    if output.shape != image_in.shape:
        raise ContractError(f"shape mismatch {tuple(output.shape)} vs {tuple(image_in.shape)}")
    return hole * output + (1 - hole) * image_in


class ImageGenerator(nn.Module):
    """Coarse/refine image generator.

    With ``use_contour`` the contour map is concatenated to the input of both
    stages (image 3 + contour 1 + hole 1 channels); without it the inputs are
    image and hole only, as used for contour-free pretraining.
    """

    def __init__(self, use_contour=True, width=0.25, softmax_scale=10.0):
        super().__init__()
        self.use_contour = use_contour
        self.in_channels = 5 if use_contour else 4
        self.coarse = GatedStack(COARSE_LAYOUT, self.in_channels, width, out_channels=3)
        self.refine = RefineNet(self.in_channels, 3, width, softmax_scale)

    def _inputs(self, image, contour, hole):
        if self.use_contour:
            if contour is None:
                raise ContractError("this generator is contour-guided; a contour is required")
            return torch.cat([image, contour, hole], dim=1)
        return torch.cat([image, hole], dim=1)

    def forward(self, image_in, contour, hole):
        _check_shapes(image_in, hole, *([contour] if contour is not None else []))
        coarse = (torch.tanh(self.coarse(self._inputs(image_in, contour, hole))) + 1) / 2
        merged = composite(coarse.detach(), image_in, hole)
        refined = (torch.tanh(self.refine(self._inputs(merged, contour, hole), hole)) + 1) / 2
        return ImageGenOutput(coarse, refined)


def image_forward(generator, image_in, contour, hole):
    return generator(image_in, contour, hole)


def make_image_discriminator(width=0.25, base_channels=64, n_layers=4):
    """PatchGAN judging (image, hole) pairs: 3 + 1 input channels."""
    return PatchDiscriminator(4, base_channels, width, n_layers)


def image_content_loss(out: ImageGenOutput, gt):
    """Mean over pixels and channels of |coarse - gt| + |refined - gt|."""
    if out.coarse.shape != gt.shape or out.refined.shape != gt.shape:
        raise ContractError("outputs and ground truth differ in shape")
    return ((out.coarse - gt).abs() + (out.refined - gt).abs()).mean()


def image_adv_losses(d_real, d_fake):
    """Returns ``(d_loss, g_loss)`` for the refined output's score maps."""
    return hinge_d_loss(d_real, d_fake), hinge_g_loss(d_fake)


def image_pair(image, hole):
    return torch.cat([image, hole], dim=1)
