"""Unpaired IHC -> H&E translator: two generators, two discriminators,
adversarial + cycle-consistency + identity objectives.

`CycleGanTranslator` is an sklearn-style estimator: construct with
hyperparameters, `fit(patches_a, patches_b)` on unpaired patch sets,
`translate`/`transform` to produce virtual H&E. Training state round-trips
through framework-independent checkpoint archives.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator

from ..errors import DataError, TrainingDivergedError
from ..validation import check_rgb
from .checkpoint import TranslationCheckpoint
from .losses import discriminator_loss, generator_losses
from .networks import (build_discriminator, build_generator,
                       check_generator_input, images_to_tensor, init_weights,
                       tensor_to_images)
from .pool import ImagePool

LOSS_FIELDS = ("adversarial_a2b", "adversarial_b2a", "cycle_a", "cycle_b",
               "identity", "total_generator", "total_discriminator")


@dataclass(frozen=True)
class LossReport:
    """Per-batch (or per-epoch aggregate) loss terms, all non-negative."""

    adversarial_a2b: float
    adversarial_b2a: float
    cycle_a: float
    cycle_b: float
    identity: float
    total_generator: float
    total_discriminator: float

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def mean(cls, reports: list["LossReport"]) -> "LossReport":
        if not reports:
            raise ValueError("cannot aggregate zero reports")
        return cls(**{
            f: float(np.mean([getattr(r, f) for r in reports]))
            for f in LOSS_FIELDS
        })


@dataclass(frozen=True)
class TranslationConfig:
    """Training configuration; defaults reproduce the reference recipe
    (256x256 patches, batch size 10, 30 epochs, LSGAN with cycle weight 10
    and identity weight 5, lr 2e-4 decaying over the second half)."""

    patch_size: int = 256
    batch_size: int = 10
    epochs: int = 30
    learning_rate: float = 2e-4
    cycle_weight: float = 10.0
    identity_weight: float = 5.0
    seed: int = 0
    base_channels: int = 64
    n_res_blocks: int = 9
    buffer_size: int = 50
    deterministic: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        # The discriminator's three stride-2 stages need >= 32 px to keep a
        # spatial extent; the generator alone would accept >= 8.
        if self.patch_size % 4 != 0 or self.patch_size < 32:
            raise ValueError("patch_size must be a multiple of 4 and >= 32")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.cycle_weight < 0 or self.identity_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.base_channels < 1 or self.n_res_blocks < 0:
            raise ValueError("invalid generator architecture")
        if self.buffer_size < 0 or self.checkpoint_every < 0:
            raise ValueError("buffer_size/checkpoint_every must be >= 0")

    @classmethod
    def from_dict(cls, values: dict) -> "TranslationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown translation config keys: "
                             f"{sorted(unknown)}")
        return cls(**values)


class CycleGanTranslator(BaseEstimator):
    """Trainable IHC -> H&E image translator.

    Parameters mirror `TranslationConfig`. After `fit` (or `initialize`),
    `translate` maps a single uint8 RGB image to a same-size virtual H&E
    image; `transform` maps a sequence.
    """

    def __init__(self, patch_size: int = 256, batch_size: int = 10,
                 epochs: int = 30, learning_rate: float = 2e-4,
                 cycle_weight: float = 10.0, identity_weight: float = 5.0,
                 seed: int = 0, base_channels: int = 64,
                 n_res_blocks: int = 9, buffer_size: int = 50,
                 deterministic: bool = False, checkpoint_every: int = 0,
                 checkpoint_dir: str | None = None,
                 history_csv: str | None = None):
        self.patch_size = patch_size
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.cycle_weight = cycle_weight
        self.identity_weight = identity_weight
        self.seed = seed
        self.base_channels = base_channels
        self.n_res_blocks = n_res_blocks
        self.buffer_size = buffer_size
        self.deterministic = deterministic
        self.checkpoint_every = checkpoint_every
        self.checkpoint_dir = checkpoint_dir
        self.history_csv = history_csv

    # -- setup ------------------------------------------------------------

    def config(self) -> TranslationConfig:
        return TranslationConfig(**{
            f.name: getattr(self, f.name) for f in fields(TranslationConfig)
        })

    def initialize(self) -> "CycleGanTranslator":
        """Build seeded networks and optimizers without training."""
        self.config()  # validate hyperparameters
        if self.deterministic:
            torch.use_deterministic_algorithms(True)
        torch.manual_seed(self.seed)
        self._rng = np.random.default_rng(self.seed)
        self.gen_a2b_ = build_generator(self.base_channels, self.n_res_blocks)
        self.gen_b2a_ = build_generator(self.base_channels, self.n_res_blocks)
        self.disc_a_ = build_discriminator(min(self.base_channels, 64))
        self.disc_b_ = build_discriminator(min(self.base_channels, 64))
        for net in (self.gen_a2b_, self.gen_b2a_, self.disc_a_, self.disc_b_):
            init_weights(net)
        self._opt_g = torch.optim.Adam(
            itertools.chain(self.gen_a2b_.parameters(),
                            self.gen_b2a_.parameters()),
            lr=self.learning_rate, betas=(0.5, 0.999))
        self._opt_d = torch.optim.Adam(
            itertools.chain(self.disc_a_.parameters(),
                            self.disc_b_.parameters()),
            lr=self.learning_rate, betas=(0.5, 0.999))
        self._pool_a = ImagePool(self.buffer_size, self._rng)
        self._pool_b = ImagePool(self.buffer_size, self._rng)
        self.history_ = []
        self.step_history_ = []
        self.epoch_ = 0
        return self

    def _check_initialized(self):
        if not hasattr(self, "gen_a2b_"):
            raise RuntimeError(
                "translator not initialized; call fit(), initialize(), or "
                "from_checkpoint() first")

    def _lr_factor(self, epoch: int) -> float:
        """Constant for the first half of training, linear decay after."""
        decay_epochs = self.epochs // 2
        start = self.epochs - decay_epochs
        if decay_epochs == 0 or epoch < start:
            return 1.0
        return (self.epochs - epoch) / (decay_epochs + 1)

    def _set_lr(self, epoch: int):
        lr = self.learning_rate * self._lr_factor(epoch)
        for opt in (self._opt_g, self._opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    # -- training ---------------------------------------------------------

    def train_step(self, real_a: torch.Tensor,
                   real_b: torch.Tensor) -> LossReport:
        """One alternating generator/discriminator update on a batch pair
        of [-1, 1] NCHW tensors."""
        self._check_initialized()
        terms, fake_a, fake_b = generator_losses(
            self.gen_a2b_, self.gen_b2a_, self.disc_a_, self.disc_b_,
            real_a, real_b, self.cycle_weight, self.identity_weight)
        self._opt_g.zero_grad()
        terms["total_generator"].backward()
        self._opt_g.step()

        loss_d = (discriminator_loss(self.disc_a_, real_a,
                                     self._pool_a.query(fake_a))
                  + discriminator_loss(self.disc_b_, real_b,
                                       self._pool_b.query(fake_b)))
        self._opt_d.zero_grad()
        loss_d.backward()
        self._opt_d.step()

        values = {k: float(v.detach()) for k, v in terms.items()}
        values["total_discriminator"] = float(loss_d.detach())
        report = LossReport(**values)
        if not all(math.isfinite(v) for v in values.values()):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {self.epoch_}: {values}")
        self.step_history_.append(report)
        return report

    def train_epoch(self, batches) -> LossReport:
        """Run one epoch over an iterable of (batch_a, batch_b) pairs.

        Batches may be uint8 image stacks or prepared tensors. Raises on an
        empty iterable; returns the field-wise mean LossReport.
        """
        self._check_initialized()
        reports = []
        for i, (batch_a, batch_b) in enumerate(batches):
            if not torch.is_tensor(batch_a):
                batch_a = images_to_tensor(batch_a)
            if not torch.is_tensor(batch_b):
                batch_b = images_to_tensor(batch_b)
            try:
                reports.append(self.train_step(batch_a, batch_b))
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"{exc} (batch {i})") from None
        if not reports:
            raise ValueError("train_epoch requires at least one batch")
        return LossReport.mean(reports)

    def _epoch_batches(self, tensors_a: torch.Tensor,
                       tensors_b: torch.Tensor):
        """Unpaired batch stream covering the larger domain once."""
        n_a, n_b = tensors_a.shape[0], tensors_b.shape[0]
        steps = math.ceil(max(n_a, n_b) / self.batch_size)
        need = steps * self.batch_size

        def ordering(n: int) -> np.ndarray:
            reps = [self._rng.permutation(n)
                    for _ in range(math.ceil(need / n))]
            return np.concatenate(reps)[:need]

        order_a, order_b = ordering(n_a), ordering(n_b)
        for s in range(steps):
            sl = slice(s * self.batch_size, (s + 1) * self.batch_size)
            yield tensors_a[order_a[sl]], tensors_b[order_b[sl]]

    def _prepare_domain(self, patches, name: str) -> torch.Tensor:
        if len(patches) == 0:
            raise ValueError(f"domain {name} is empty")
        arr = np.stack([check_rgb(p, f"{name} patch") for p in patches])
        if arr.shape[1] != self.patch_size or arr.shape[2] != self.patch_size:
            raise ValueError(
                f"{name} patches are {arr.shape[1]}x{arr.shape[2]}, "
                f"expected {self.patch_size}x{self.patch_size}")
        return images_to_tensor(arr)

    def fit(self, patches_a, patches_b):
        """Train on unpaired uint8 patch collections (domain A = IHC,
        domain B = H&E)."""
        self.initialize()
        tensors_a = self._prepare_domain(patches_a, "A")
        tensors_b = self._prepare_domain(patches_b, "B")
        for epoch in range(self.epochs):
            self._set_lr(epoch)
            report = self.train_epoch(
                self._epoch_batches(tensors_a, tensors_b))
            self.epoch_ = epoch + 1
            self.history_.append(report)
            if self.history_csv:
                self._append_history_csv(epoch + 1, report)
            if (self.checkpoint_every and self.checkpoint_dir
                    and (epoch + 1) % self.checkpoint_every == 0
                    and epoch + 1 < self.epochs):
                self.to_checkpoint().save(
                    Path(self.checkpoint_dir) / f"epoch_{epoch + 1:04d}.zip")
        return self

    def _append_history_csv(self, epoch: int, report: LossReport):
        path = Path(self.history_csv)
        os.makedirs(path.parent, exist_ok=True)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(("epoch",) + LOSS_FIELDS)
            writer.writerow([epoch] + [getattr(report, f)
                                       for f in LOSS_FIELDS])

    # -- inference ----------------------------------------------------------

    def translate(self, image) -> np.ndarray:
        """Map one uint8 RGB image to the target stain; same height, width,
        and channel count.

        Reentrant: no module state is mutated, so a loaded translator can
        serve multiple threads.
        """
        self._check_initialized()
        rgb = check_rgb(image)
        check_generator_input(*rgb.shape[:2])
        with torch.no_grad():
            out = self.gen_a2b_(images_to_tensor(rgb))
        return tensor_to_images(out)[0]

    def transform(self, images) -> list[np.ndarray]:
        return [self.translate(img) for img in images]

    # -- persistence --------------------------------------------------------

    _COMPONENTS = ("gen_a2b", "gen_b2a", "disc_a", "disc_b")

    def to_checkpoint(self) -> TranslationCheckpoint:
        self._check_initialized()
        params = {}
        for comp in self._COMPONENTS:
            net = getattr(self, comp + "_")
            for name, tensor in net.state_dict().items():
                params[f"{comp}.{name}"] = \
                    tensor.detach().cpu().numpy().astype("<f4")
        return TranslationCheckpoint(
            params=params,
            config=asdict(self.config()),
            epoch=self.epoch_,
            loss_history=[r.as_dict() for r in self.history_],
        )

    @classmethod
    def from_checkpoint(cls, source) -> "CycleGanTranslator":
        """Rebuild a translator from a checkpoint object or archive path."""
        ckpt = source if isinstance(source, TranslationCheckpoint) \
            else TranslationCheckpoint.load(source)
        config = TranslationConfig.from_dict(ckpt.config)
        est = cls(**config.__dict__)
        est.initialize()
        for comp in cls._COMPONENTS:
            net = getattr(est, comp + "_")
            prefix = comp + "."
            state = {
                name[len(prefix):]: torch.from_numpy(arr.copy())
                for name, arr in ckpt.params.items()
                if name.startswith(prefix)
            }
            net.load_state_dict(state)
        est.epoch_ = ckpt.epoch
        est.history_ = [LossReport(**h) for h in ckpt.loss_history]
        return est


def train(config: TranslationConfig, manifest_a, manifest_b,
          checkpoint_dir=None, history_csv=None) -> TranslationCheckpoint:
    """Train a translator from two dataset manifests and return the final
    checkpoint. Intermediate checkpoints are written every
    `config.checkpoint_every` epochs when a directory is given."""
    patches_a = manifest_a.load_patches()
    patches_b = manifest_b.load_patches()
    est = CycleGanTranslator(
        **config.__dict__,
        checkpoint_dir=str(checkpoint_dir) if checkpoint_dir else None,
        history_csv=str(history_csv) if history_csv else None,
    )
    if config.epochs == 0:
        est.initialize()
        if len(patches_a) == 0 or len(patches_b) == 0:
            raise DataError("both domains must contain patches")
    else:
        est.fit(patches_a, patches_b)
    return est.to_checkpoint()


def translate_tiled(translator: CycleGanTranslator, image,
                    tile_size: int = 256, overlap: int = 32) -> np.ndarray:
    """Translate an image of arbitrary size by tiling to generator-compatible
    squares and averaging the stitched overlaps."""
    from ..imaging import extract_patch, plan_tiles, stitch_tiles

    rgb = check_rgb(image)
    h, w = rgb.shape[:2]
    if h % 4 == 0 and w % 4 == 0 and min(h, w) >= 8 \
            and max(h, w) <= tile_size:
        return translator.translate(rgb)
    effective = min(tile_size, 4 * (min(h, w) // 4))
    if effective < 8:
        raise DataError(f"image {h}x{w} too small to translate")
    plan = plan_tiles(h, w, effective, min(overlap, effective - 1))
    tiles = [translator.translate(extract_patch(rgb, spec))
             for spec in plan.tiles]
    return stitch_tiles(plan, tiles)
