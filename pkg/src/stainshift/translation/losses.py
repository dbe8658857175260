"""Loss functions for unpaired translation training.

The numpy entry points (`cycle_loss`, `adversarial_loss`) are the public
metric forms used on 8-bit images and raw score arrays; the torch helpers
assemble the same quantities differentiably inside the training loop.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..validation import check_raster, check_same_shape


def cycle_loss(original, reconstructed) -> float:
    """Mean absolute difference between two images, scaled to [0, 1]."""
    a = check_raster(original, "original")
    b = check_raster(reconstructed, "reconstructed")
    check_same_shape(a, b, "original", "reconstructed")
    return float(np.mean(np.abs(a.astype(np.float64)
                                - b.astype(np.float64))) / 255.0)


def adversarial_loss(discriminator_scores, target_is_real: bool) -> float:
    """Least-squares adversarial loss: mean squared deviation of the scores
    from the target (1 for real, 0 for fake)."""
    scores = np.asarray(discriminator_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("scores must be non-empty")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    target = 1.0 if target_is_real else 0.0
    return float(np.mean((scores - target) ** 2))


def lsgan_loss(scores: torch.Tensor, target_is_real: bool) -> torch.Tensor:
    target = torch.ones_like(scores) if target_is_real \
        else torch.zeros_like(scores)
    return F.mse_loss(scores, target)


def generator_losses(gen_a2b, gen_b2a, disc_a, disc_b,
                     real_a: torch.Tensor, real_b: torch.Tensor,
                     cycle_weight: float, identity_weight: float):
    """All generator-side loss terms plus the detached fakes for the
    discriminator step.

    total = adv(A->B) + adv(B->A) + cycle_weight * (cycle_A + cycle_B)
            + identity_weight * identity
    """
    fake_b = gen_a2b(real_a)
    rec_a = gen_b2a(fake_b)
    fake_a = gen_b2a(real_b)
    rec_b = gen_a2b(fake_a)

    adv_a2b = lsgan_loss(disc_b(fake_b), True)
    adv_b2a = lsgan_loss(disc_a(fake_a), True)
    cyc_a = F.l1_loss(rec_a, real_a)
    cyc_b = F.l1_loss(rec_b, real_b)
    identity = torch.zeros((), dtype=real_a.dtype, device=real_a.device)
    if identity_weight > 0:
        identity = (F.l1_loss(gen_a2b(real_b), real_b)
                    + F.l1_loss(gen_b2a(real_a), real_a))

    total = (adv_a2b + adv_b2a
             + cycle_weight * (cyc_a + cyc_b)
             + identity_weight * identity)
    terms = {
        "adversarial_a2b": adv_a2b,
        "adversarial_b2a": adv_b2a,
        "cycle_a": cyc_a,
        "cycle_b": cyc_b,
        "identity": identity,
        "total_generator": total,
    }
    return terms, fake_a.detach(), fake_b.detach()


def discriminator_loss(disc, real: torch.Tensor,
                       fake: torch.Tensor) -> torch.Tensor:
    """Half-weighted real/fake least-squares discriminator objective."""
    return 0.5 * (lsgan_loss(disc(real), True)
                  + lsgan_loss(disc(fake), False))
