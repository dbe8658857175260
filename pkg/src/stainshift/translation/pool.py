"""Replay buffer of generated images for discriminator updates.

Feeding the discriminator a history of fakes rather than only the latest
batch damps oscillation. Each incoming image either passes through or swaps
with a stored one (50/50), matching the published behavior.
"""

from __future__ import annotations

import numpy as np
import torch


class ImagePool:
    def __init__(self, size: int, rng: np.random.Generator):
        if size < 0:
            raise ValueError("pool size must be >= 0")
        self.size = size
        self.rng = rng
        self.images: list[torch.Tensor] = []

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.size == 0:
            return batch
        out = []
        for image in batch:
            image = image.unsqueeze(0)
            if len(self.images) < self.size:
                self.images.append(image.clone())
                out.append(image)
            elif self.rng.random() < 0.5:
                idx = int(self.rng.integers(0, self.size))
                out.append(self.images[idx].clone())
                self.images[idx] = image.clone()
            else:
                out.append(image)
        return torch.cat(out, dim=0)
