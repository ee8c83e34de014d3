"""Stochastic two-view augmentation.

Every random draw comes from an explicit ``torch.Generator`` so a pair is a
pure function of (image, generator state, policy). The transforms themselves
are torchvision's functional v2 ops on float images in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torchvision.transforms.v2 import functional as TF

from .contracts.experiment import AugmentationPolicy
from .errors import DataError


@dataclass
class ViewPair:
    """Two augmented views of the same source samples, row-aligned."""

    view1: torch.Tensor
    view2: torch.Tensor
    source: torch.Tensor | None = None

    def __len__(self) -> int:
        return int(self.view1.shape[0]) if self.view1.ndim == 4 else 1

    def to(self, device: torch.device | str) -> ViewPair:
        return ViewPair(self.view1.to(device), self.view2.to(device), self.source)


def _uniform(generator: torch.Generator, low: float, high: float) -> float:
    return low + (high - low) * float(torch.rand(1, generator=generator))


def _coin(generator: torch.Generator, p: float) -> bool:
    if p <= 0.0:
        return False
    return float(torch.rand(1, generator=generator)) < p


def _crop_box(
    height: int, width: int, policy: AugmentationPolicy, generator: torch.Generator
) -> tuple[int, int, int, int]:
    area = height * width
    log_ratio = (math.log(policy.crop_ratio[0]), math.log(policy.crop_ratio[1]))
    for _ in range(10):
        target_area = area * _uniform(generator, *policy.crop_scale)
        aspect = math.exp(_uniform(generator, *log_ratio))
        w = int(round(math.sqrt(target_area * aspect)))
        h = int(round(math.sqrt(target_area / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(torch.randint(0, height - h + 1, (1,), generator=generator))
            left = int(torch.randint(0, width - w + 1, (1,), generator=generator))
            return top, left, h, w
    # central crop fallback
    in_ratio = width / height
    if in_ratio < policy.crop_ratio[0]:
        w, h = width, int(round(width / policy.crop_ratio[0]))
    elif in_ratio > policy.crop_ratio[1]:
        h, w = height, int(round(height * policy.crop_ratio[1]))
    else:
        w, h = width, height
    return (height - h) // 2, (width - w) // 2, h, w


def _color_jitter(
    image: torch.Tensor, policy: AugmentationPolicy, generator: torch.Generator
) -> torch.Tensor:
    brightness = _uniform(generator, max(0.0, 1 - policy.brightness), 1 + policy.brightness)
    contrast = _uniform(generator, max(0.0, 1 - policy.contrast), 1 + policy.contrast)
    saturation = _uniform(generator, max(0.0, 1 - policy.saturation), 1 + policy.saturation)
    hue = _uniform(generator, -policy.hue, policy.hue)
    for op in torch.randperm(4, generator=generator).tolist():
        if op == 0 and policy.brightness:
            image = TF.adjust_brightness(image, brightness)
        elif op == 1 and policy.contrast:
            image = TF.adjust_contrast(image, contrast)
        elif op == 2 and policy.saturation:
            image = TF.adjust_saturation(image, saturation)
        elif op == 3 and policy.hue:
            image = TF.adjust_hue(image, hue)
    return image


def augment_view(
    image: torch.Tensor, generator: torch.Generator, policy: AugmentationPolicy
) -> torch.Tensor:
    """One draw of the policy applied to a single (C, H, W) image."""
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DataError(
            "expected a (C, H, W) image with 1 or 3 channels",
            details={"shape": list(image.shape)},
        )
    _, height, width = image.shape
    view = image
    if _coin(generator, policy.crop_p):
        top, left, h, w = _crop_box(height, width, policy, generator)
        view = TF.resized_crop(view, top, left, h, w, [height, width], antialias=True)
    if _coin(generator, policy.flip_p):
        view = TF.horizontal_flip(view)
    if view.shape[0] == 3 and _coin(generator, policy.jitter_p):
        view = _color_jitter(view, policy, generator)
    if view.shape[0] == 3 and _coin(generator, policy.grayscale_p):
        view = TF.rgb_to_grayscale(view, num_output_channels=3)
    if _coin(generator, policy.resolved_blur_p(min(height, width))):
        kernel = max(3, int(0.1 * min(height, width)) // 2 * 2 + 1)
        sigma = _uniform(generator, *policy.blur_sigma)
        view = TF.gaussian_blur(view, [kernel, kernel], [sigma, sigma])
    if _coin(generator, policy.solarize_p):
        view = TF.solarize(view, threshold=0.5)
    return view.clamp(0.0, 1.0) if view is not image else view


def augment_pair(
    image: torch.Tensor, generator: torch.Generator, policy: AugmentationPolicy
) -> ViewPair:
    """Two independent policy draws of *image*; deterministic in the generator state."""
    return ViewPair(
        view1=augment_view(image, generator, policy),
        view2=augment_view(image, generator, policy),
    )


def augment_batch(
    images: torch.Tensor,
    generator: torch.Generator,
    policy: AugmentationPolicy,
    source: torch.Tensor | None = None,
) -> ViewPair:
    """Augment each row of an (N, C, H, W) batch into a row-aligned pair."""
    if images.ndim != 4:
        raise DataError("expected an (N, C, H, W) batch", details={"shape": list(images.shape)})
    pairs = [augment_pair(image, generator, policy) for image in images]
    return ViewPair(
        view1=torch.stack([p.view1 for p in pairs]),
        view2=torch.stack([p.view2 for p in pairs]),
        source=source,
    )


def augment_single(
    images: torch.Tensor, generator: torch.Generator, policy: AugmentationPolicy
) -> torch.Tensor:
    """One augmented view per row, for supervised classifier fitting."""
    return torch.stack([augment_view(image, generator, policy) for image in images])
