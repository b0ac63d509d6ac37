"""Feature-space contrastive augmentation and symmetric label noise."""

import logging
from dataclasses import dataclass

import numpy as np

from ._typing import BoolArray, FloatArray, IntArray
from .errors import TooFewClassesError

logger = logging.getLogger(__name__)

# Stream tags keep weak and strong draws of one sample independent.
WEAK_STREAM = 0
STRONG_STREAM = 1


@dataclass(frozen=True)
class AugmentPolicy:
    """Jitter scales of the weak and strong views and the strong masking fraction."""

    weak_sigma: float = 0.0
    strong_sigma: float = 0.0
    strong_mask_frac: float = 0.25

    def __post_init__(self) -> None:
        if self.weak_sigma < 0 or self.strong_sigma < 0:
            raise ValueError("augmentation scales must be nonnegative")
        if self.strong_sigma < self.weak_sigma:
            raise ValueError(f"strong_sigma ({self.strong_sigma}) must be at least weak_sigma ({self.weak_sigma})")
        if not 0.0 <= self.strong_mask_frac < 1.0:
            raise ValueError(f"strong_mask_frac must lie in [0, 1), got {self.strong_mask_frac}")

    @classmethod
    def from_features(
        cls, features: FloatArray, weak_scale: float = 0.05, strong_factor: float = 3.0, strong_mask_frac: float = 0.25
    ) -> "AugmentPolicy":
        """Policy whose weak jitter is ``weak_scale`` times the mean feature norm."""
        mean_norm = float(np.mean(np.sqrt(np.sum(np.asarray(features) ** 2, axis=1)))) if len(features) else 0.0
        weak = weak_scale * mean_norm
        return cls(weak_sigma=weak, strong_sigma=strong_factor * weak, strong_mask_frac=strong_mask_frac)


@dataclass(frozen=True)
class NoiseSpec:
    """Fraction of labels to flip and the seed of the flip."""

    ratio: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"noise ratio must lie in [0, 1], got {self.ratio}")


def sample_stream(global_seed: int, sample_index: int, epoch: int, tag: int) -> np.random.Generator:
    """Generator that depends only on ``(global_seed, sample_index, epoch, tag)``."""
    return np.random.default_rng(np.random.SeedSequence([global_seed, sample_index, epoch, tag]))


def weak_augment(x: FloatArray, policy: AugmentPolicy, rng: np.random.Generator) -> FloatArray:
    """``x`` plus isotropic Gaussian jitter of scale ``weak_sigma``."""
    x = np.asarray(x, dtype=np.float64)
    if policy.weak_sigma == 0.0:
        return x.copy()
    return np.asarray(x + rng.normal(0.0, policy.weak_sigma, size=x.shape))


def strong_augment(x: FloatArray, policy: AugmentPolicy, rng: np.random.Generator) -> FloatArray:
    """Jitter of scale ``strong_sigma``, then ``floor(frac * d)`` random coordinates zeroed."""
    out = np.array(x, dtype=np.float64, copy=True)
    if policy.strong_sigma > 0.0:
        out = out + rng.normal(0.0, policy.strong_sigma, size=out.shape)
    n_mask = int(np.floor(policy.strong_mask_frac * out.shape[-1]))
    if n_mask > 0:
        out[rng.choice(out.shape[-1], size=n_mask, replace=False)] = 0.0
    return out


def augment_pair(x: FloatArray, policy: AugmentPolicy, global_seed: int, sample_index: int, epoch: int) -> tuple[FloatArray, FloatArray]:
    """Weak and strong view of one sample, from its own deterministic streams."""
    weak = weak_augment(x, policy, sample_stream(global_seed, sample_index, epoch, WEAK_STREAM))
    strong = strong_augment(x, policy, sample_stream(global_seed, sample_index, epoch, STRONG_STREAM))
    return weak, strong


def flip_count(n: int, ratio: float) -> int:
    return int(round(ratio * n))


def inject_label_noise(labels: IntArray | list[int], num_classes: int, spec: NoiseSpec) -> tuple[IntArray, BoolArray]:
    """Flip ``round(ratio * n)`` labels to a uniformly drawn different class.

    Returns
    -------
    tuple[IntArray, BoolArray]
        The noisy labels and the mask of flipped positions (diagnostics only).

    Raises
    ------
    TooFewClassesError
        If ``num_classes < 2`` while ``ratio > 0``.
    """
    y = np.array(labels, dtype=np.int64, copy=True)
    mask = np.zeros(y.shape[0], dtype=bool)
    if spec.ratio == 0.0:
        return y, mask
    if num_classes < 2:
        raise TooFewClassesError(f"cannot flip labels with {num_classes} class(es)")
    rng = np.random.default_rng(spec.seed)
    k = flip_count(y.shape[0], spec.ratio)
    chosen = rng.choice(y.shape[0], size=k, replace=False)
    shift = rng.integers(1, num_classes, size=k)
    y[chosen] = (y[chosen] + shift) % num_classes
    mask[chosen] = True
    logger.info(f"flipped {k} of {y.shape[0]} labels (ratio {spec.ratio})")
    return y, mask
