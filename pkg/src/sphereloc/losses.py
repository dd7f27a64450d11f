"""Training objectives as pure functions over feature vectors and scores.

Nothing here owns parameters or gradients; each loss maps concrete inputs to
one float so external trainers (and the test suite) can verify values
directly. Descriptor arguments accept either PlaceDescriptor instances or
plain vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, ShapeMismatchError
from .sphere import SphericalImage

PROB_EPSILON = 1e-7


def _vector(value) -> np.ndarray:
    array = np.asarray(getattr(value, "values", value), dtype=np.float64)
    if array.ndim != 1:
        raise ShapeMismatchError("expected a 1-D feature vector")
    return array


def euclidean(a, b) -> float:
    """Default metric between two descriptors or vectors."""
    va, vb = _vector(a), _vector(b)
    if va.shape != vb.shape:
        raise ShapeMismatchError(f"vector shapes differ: {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


Metric = Callable[[object, object], float]


@dataclass(frozen=True, eq=False)
class FeaturePair:
    """A geometric feature vector and a condition feature vector."""

    z_g: np.ndarray
    z_c: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "z_g", _vector(self.z_g))
        object.__setattr__(self, "z_c", _vector(self.z_c))
        if self.z_g.shape != self.z_c.shape:
            raise ShapeMismatchError("feature vectors must share one shape")
        if np.linalg.norm(self.z_g) == 0.0 or np.linalg.norm(self.z_c) == 0.0:
            raise DegenerateInputError("zero feature vector has no direction")


@dataclass(frozen=True, eq=False)
class TripletTuple:
    """Anchor descriptor with rotated variants, positives and negatives."""

    anchor: object
    rotated: Sequence = ()
    positives: Sequence = ()
    negatives: Sequence = ()

    def __post_init__(self) -> None:
        if len(self.positives) == 0 or len(self.negatives) == 0:
            raise InvalidInputError("positives and negatives must be non-empty")


@dataclass(frozen=True)
class LossParams:
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda3: float = 1.0

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise InvalidInputError("margins must be non-negative")


@dataclass(frozen=True, eq=False)
class GanBatch:
    """Discriminator probabilities for real and generated samples,
    clamped into (0, 1) by PROB_EPSILON at construction."""

    d_real: np.ndarray
    d_fake: np.ndarray

    def __post_init__(self) -> None:
        real = np.asarray(self.d_real, dtype=np.float64).reshape(-1)
        fake = np.asarray(self.d_fake, dtype=np.float64).reshape(-1)
        if real.size == 0 or fake.size == 0:
            raise InvalidInputError("batch must contain real and fake scores")
        if not (np.all(np.isfinite(real)) and np.all(np.isfinite(fake))):
            raise InvalidInputError("scores must be finite")
        object.__setattr__(self, "d_real", np.clip(real, PROB_EPSILON, 1.0 - PROB_EPSILON))
        object.__setattr__(self, "d_fake", np.clip(fake, PROB_EPSILON, 1.0 - PROB_EPSILON))


def orth_loss(pair: FeaturePair, absolute: bool = False) -> float:
    """1 - cos(z_g, z_c) in [0, 2]; with absolute=True, |cos| instead, which
    is zero exactly when the features are orthogonal."""
    cos = float(
        pair.z_g @ pair.z_c / (np.linalg.norm(pair.z_g) * np.linalg.norm(pair.z_c))
    )
    cos = max(-1.0, min(1.0, cos))
    return abs(cos) if absolute else 1.0 - cos


def gan_loss(batch: GanBatch) -> float:
    """mean log D(real) + mean log(1 - D(fake)); 0 only for a perfect
    discriminator, increasingly negative as it is fooled."""
    return float(np.mean(np.log(batch.d_real)) + np.mean(np.log(1.0 - batch.d_fake)))


def recon_loss(x: SphericalImage, x_hat: SphericalImage) -> float:
    """Mean absolute per-sample difference between two views."""
    if x.data.shape != x_hat.data.shape:
        raise ShapeMismatchError(
            f"view shapes differ: {x.data.shape} vs {x_hat.data.shape}"
        )
    return float(np.mean(np.abs(x.data - x_hat.data)))


def cdtm_loss(gan: float, orth: float, recon: float) -> float:
    """Unweighted sum of the three domain-transfer terms."""
    total = float(gan) + float(orth) + float(recon)
    if not np.isfinite(total):
        raise InvalidInputError("loss terms must be finite")
    return total


def _hinge(value: float) -> float:
    return max(0.0, value)


def _hardest_pair(anchor, positives, negatives, margin: float, metric: Metric) -> float:
    worst = 0.0
    for pos in positives:
        d_pos = metric(anchor, pos)
        for neg in negatives:
            worst = max(worst, _hinge(margin + d_pos - metric(anchor, neg)))
    return worst


def individual_loss(t: TripletTuple, p: LossParams | None = None,
                    metric: Metric = euclidean) -> float:
    """Hardest-pair hinge around the anchor (margin lambda1) plus the same
    around each rotated variant (margin lambda2); an empty rotated set
    contributes zero."""
    p = p or LossParams()
    total = _hardest_pair(t.anchor, t.positives, t.negatives, p.lambda1, metric)
    rotated_term = 0.0
    for rot in t.rotated:
        rotated_term = max(
            rotated_term,
            _hardest_pair(rot, t.positives, t.negatives, p.lambda2, metric),
        )
    return total + rotated_term


def cross_domain_loss(t: TripletTuple, p: LossParams | None = None,
                      metric: Metric = euclidean) -> float:
    """Hardest-pair hinge with margin lambda3: anchor from one domain,
    positives and negatives from the other."""
    p = p or LossParams()
    return _hardest_pair(t.anchor, t.positives, t.negatives, p.lambda3, metric)


def pem_loss(lv: float, ls: float, lc: float) -> float:
    """Unweighted sum of the two per-domain triplet losses and the
    cross-domain term."""
    total = float(lv) + float(ls) + float(lc)
    if not np.isfinite(total):
        raise InvalidInputError("loss terms must be finite")
    return total
