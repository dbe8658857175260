"""Generator and discriminator architectures for the unpaired translator.

Defaults follow the published residual encoder-decoder generator (9 residual
blocks at 256x256) and the 70x70 patch-based discriminator. Both factories
scale down cleanly (fewer channels / blocks) for desk-scale experiments and
tests.
"""

from __future__ import annotations

import torch
import torch.nn as nn

# Two stride-2 stages in the encoder; inputs must be divisible by this.
DOWNSAMPLE_FACTOR = 4
MIN_INPUT_SIZE = 8


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def build_generator(base_channels: int = 64,
                    n_res_blocks: int = 9) -> nn.Module:
    """Residual encoder-decoder mapping 3-channel images in [-1, 1] to the
    same shape and range."""
    c = base_channels
    layers: list[nn.Module] = [
        nn.ReflectionPad2d(3),
        nn.Conv2d(3, c, kernel_size=7),
        nn.InstanceNorm2d(c),
        nn.ReLU(inplace=True),
        nn.Conv2d(c, 2 * c, kernel_size=3, stride=2, padding=1),
        nn.InstanceNorm2d(2 * c),
        nn.ReLU(inplace=True),
        nn.Conv2d(2 * c, 4 * c, kernel_size=3, stride=2, padding=1),
        nn.InstanceNorm2d(4 * c),
        nn.ReLU(inplace=True),
    ]
    layers += [ResidualBlock(4 * c) for _ in range(n_res_blocks)]
    layers += [
        nn.ConvTranspose2d(4 * c, 2 * c, kernel_size=3, stride=2,
                           padding=1, output_padding=1),
        nn.InstanceNorm2d(2 * c),
        nn.ReLU(inplace=True),
        nn.ConvTranspose2d(2 * c, c, kernel_size=3, stride=2,
                           padding=1, output_padding=1),
        nn.InstanceNorm2d(c),
        nn.ReLU(inplace=True),
        nn.ReflectionPad2d(3),
        nn.Conv2d(c, 3, kernel_size=7),
        nn.Tanh(),
    ]
    return nn.Sequential(*layers)


def build_discriminator(base_channels: int = 64,
                        n_layers: int = 3) -> nn.Module:
    """Patch-based classifier scoring overlapping receptive fields (70x70
    at the default depth)."""
    c = base_channels
    layers: list[nn.Module] = [
        nn.Conv2d(3, c, kernel_size=4, stride=2, padding=1),
        nn.LeakyReLU(0.2, inplace=True),
    ]
    mult = 1
    for i in range(1, n_layers):
        prev, mult = mult, min(2 ** i, 8)
        layers += [
            nn.Conv2d(c * prev, c * mult, kernel_size=4, stride=2, padding=1),
            nn.InstanceNorm2d(c * mult),
            nn.LeakyReLU(0.2, inplace=True),
        ]
    prev, mult = mult, min(2 ** n_layers, 8)
    layers += [
        nn.Conv2d(c * prev, c * mult, kernel_size=4, stride=1, padding=1),
        nn.InstanceNorm2d(c * mult),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(c * mult, 1, kernel_size=4, stride=1, padding=1),
    ]
    return nn.Sequential(*layers)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Gaussian(0, std) initialization of all conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def check_generator_input(height: int, width: int) -> None:
    """Raise if the generator cannot reproduce this spatial size exactly."""
    if height % DOWNSAMPLE_FACTOR or width % DOWNSAMPLE_FACTOR:
        raise ValueError(
            f"input {height}x{width} not divisible by {DOWNSAMPLE_FACTOR}; "
            "tile the image to a compatible size"
        )
    if min(height, width) < MIN_INPUT_SIZE:
        raise ValueError(
            f"input {height}x{width} smaller than the minimum "
            f"{MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}"
        )


def images_to_tensor(images, device=None) -> torch.Tensor:
    """uint8 (N, H, W, 3) or list of (H, W, 3) -> float32 NCHW in [-1, 1]."""
    import numpy as np

    arr = np.stack(images) if isinstance(images, (list, tuple)) else \
        np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"expected (N, H, W, 3) images, got {arr.shape}")
    tensor = torch.from_numpy(arr.astype("float32") / 127.5 - 1.0)
    tensor = tensor.permute(0, 3, 1, 2).contiguous()
    return tensor.to(device) if device is not None else tensor


def tensor_to_images(tensor: torch.Tensor):
    """float NCHW in [-1, 1] -> uint8 (N, H, W, 3)."""
    import numpy as np

    arr = tensor.detach().cpu().permute(0, 2, 3, 1).numpy()
    arr = (arr + 1.0) * 127.5
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)
