"""Similarity and hyperbolic-geometry kernels.

Scalar kernels (``cosine_sim``, ``poincare_distance``, ``exp_map``,
``embedding_similarity``) operate on single vectors and validate their inputs.
``similarity_matrix`` / ``similarity_backward`` are the batched forms used by
the losses, the class statistics and retrieval; they return exactly symmetric
matrices and carry what the backward pass needs.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._typing import FloatArray
from .errors import DimensionMismatchError, NonFiniteInputError, OutsideBallError, ZeroVectorError

logger = logging.getLogger(__name__)

NORM_FLOOR = 1e-12
BALL_GUARD = 1e-9
# exp_map outputs are projected to this radius when the printed form overshoots.
BALL_MAX_NORM = 1.0 - 1e-5
_SERIES_CUTOFF = 1e-4
_Z_FLOOR = 1e-30

ExpMapForm = Literal["scaled", "standard"]
DistanceTransform = Literal["exp", "negative"]


@dataclass(frozen=True)
class SimilarityKind:
    """Which similarity the embedding space uses.

    Parameters
    ----------
    name : {"cosine", "poincare"}
        ``cosine`` is plain cosine similarity. ``poincare`` maps embeddings onto
        the ball with ``exp_map`` and scores pairs by a decreasing function of
        their geodesic distance.
    curvature : float
        Ball curvature ``tau``; only used by ``poincare``.
    exp_map_form : {"scaled", "standard"}
        ``scaled`` keeps the ``1 / (1 + 2 tau |v|^2)`` factor, ``standard`` is the
        textbook map from the origin.
    distance_transform : {"exp", "negative"}
        ``exp`` scores ``exp(-d)`` in ``(0, 1]``; ``negative`` scores ``-d``.
    """

    name: Literal["cosine", "poincare"] = "cosine"
    curvature: float = 1.0
    exp_map_form: ExpMapForm = "scaled"
    distance_transform: DistanceTransform = "exp"

    def __post_init__(self) -> None:
        if self.name == "poincare" and not self.curvature > 0:
            raise ValueError(f"poincare similarity needs a positive curvature, got {self.curvature}")

    @classmethod
    def cosine(cls) -> "SimilarityKind":
        return cls(name="cosine")

    @classmethod
    def poincare(
        cls, curvature: float = 1.0, exp_map_form: ExpMapForm = "scaled", distance_transform: DistanceTransform = "exp"
    ) -> "SimilarityKind":
        return cls(name="poincare", curvature=curvature, exp_map_form=exp_map_form, distance_transform=distance_transform)

    @property
    def is_hyperbolic(self) -> bool:
        return self.name == "poincare"

    @property
    def label(self) -> str:
        """Short name used in metrics rows."""
        return self.name


def _as_vector(x: FloatArray | list[float] | tuple[float, ...], what: str) -> FloatArray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatchError(f"{what} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{what} contains NaN or infinity")
    return arr


def _same_dim(u: FloatArray, v: FloatArray) -> None:
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")


def cosine_sim(u: FloatArray | list[float], v: FloatArray | list[float]) -> float:
    """Cosine similarity of two vectors, clamped to ``[-1, 1]``.

    Raises
    ------
    ZeroVectorError
        If either norm is below ``1e-12``.
    DimensionMismatchError
        If the vectors differ in length.
    """
    a = _as_vector(u, "u")
    b = _as_vector(v, "v")
    _same_dim(a, b)
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, value))


def _ball_norm_check(p: FloatArray, what: str) -> float:
    sq = float(np.dot(p, p))
    if np.sqrt(sq) >= 1.0 - BALL_GUARD:
        raise OutsideBallError(f"{what} has norm {np.sqrt(sq):.12f}, outside the unit ball")
    return sq


def poincare_distance(u: FloatArray | list[float], v: FloatArray | list[float]) -> float:
    """Geodesic distance between two points of the unit Poincaré ball.

    Evaluated as ``2 asinh(sqrt(z))`` with ``z = |u - v|^2 / ((1 - |u|^2)(1 - |v|^2))``,
    which equals ``acosh(1 + 2 z)`` and keeps full precision for nearby points.

    Raises
    ------
    OutsideBallError
        If either norm is at least ``1 - 1e-9``.
    """
    a = _as_vector(u, "u")
    b = _as_vector(v, "v")
    _same_dim(a, b)
    sq_a = _ball_norm_check(a, "u")
    sq_b = _ball_norm_check(b, "v")
    diff = a - b
    delta = float(np.dot(diff, diff))
    z = delta / ((1.0 - sq_a) * (1.0 - sq_b))
    return float(2.0 * np.arcsinh(np.sqrt(z)))


@dataclass
class _ExpMapCache:
    x: FloatArray
    norms: FloatArray
    scale: FloatArray
    scale_slope: FloatArray  # g'(n) / n
    pre: FloatArray
    projected: FloatArray  # bool mask stored as float for arithmetic


def _exp_map_rows(x: FloatArray, tau: float, form: ExpMapForm) -> tuple[FloatArray, _ExpMapCache]:
    """Row-wise exp map ``x -> x * g(|x|)`` followed by projection into the ball."""
    s = np.sqrt(tau)
    norms = np.sqrt(np.sum(x * x, axis=1))
    y = s * norms
    t = np.tanh(y)
    tiny = y < _SERIES_CUTOFF
    safe_y = np.where(tiny, 1.0, y)
    h = np.where(tiny, 1.0 - y * y / 3.0, t / safe_y)
    # h'(n) / n, with the series form near the origin to avoid cancellation
    safe_n = np.where(tiny, 1.0, norms)
    h_slope = np.where(tiny, s * s * (-2.0 / 3.0 + 8.0 * y * y / 15.0), (y * (1.0 - t * t) - t) / (safe_y * safe_n * safe_n))
    if form == "scaled":
        k = 1.0 / (1.0 + 2.0 * t * t)
        # k'(n) / n = -4 s^2 (t / y) (1 - t^2) / (1 + 2 t^2)^2
        k_slope = -4.0 * s * s * h * (1.0 - t * t) * k * k
        scale = h * k
        scale_slope = h_slope * k + h * k_slope
    else:
        scale = h
        scale_slope = h_slope
    pre = x * scale[:, None]
    pre_norms = np.sqrt(np.sum(pre * pre, axis=1))
    projected = pre_norms > BALL_MAX_NORM
    out = pre.copy()
    if np.any(projected):
        logger.debug(f"exp_map projected {int(projected.sum())} point(s) back inside the ball")
        out[projected] = pre[projected] * (BALL_MAX_NORM / pre_norms[projected])[:, None]
    cache = _ExpMapCache(x=x, norms=norms, scale=scale, scale_slope=scale_slope, pre=pre, projected=projected.astype(np.float64))
    return out, cache


def _exp_map_rows_backward(cache: _ExpMapCache, grad_out: FloatArray) -> FloatArray:
    grad_pre = grad_out.copy()
    if np.any(cache.projected > 0):
        idx = cache.projected > 0
        pre = cache.pre[idx]
        r = np.sqrt(np.sum(pre * pre, axis=1))
        unit = pre / r[:, None]
        g = grad_out[idx]
        radial = np.sum(unit * g, axis=1)
        grad_pre[idx] = (BALL_MAX_NORM / r)[:, None] * (g - unit * radial[:, None])
    x = cache.x
    along = np.sum(x * grad_pre, axis=1)
    return cache.scale[:, None] * grad_pre + x * (cache.scale_slope * along)[:, None]


def exp_map(x: FloatArray | list[float], tau: float, form: ExpMapForm = "scaled") -> FloatArray:
    """Map a Euclidean vector onto the Poincaré ball.

    ``v = tanh(sqrt(tau) |x|) x / (sqrt(tau) |x|)``; the ``scaled`` form returns
    ``v / (1 + 2 tau |v|^2)``, the ``standard`` form returns ``v``. The zero
    vector maps to the origin. Results beyond radius ``1 - 1e-5`` are projected
    radially back inside the ball.
    """
    if not tau > 0:
        raise ValueError(f"curvature must be positive, got {tau}")
    arr = _as_vector(x, "x")
    out, _ = _exp_map_rows(arr[None, :], tau, form)
    return np.asarray(out[0])


def embedding_similarity(u: FloatArray | list[float], v: FloatArray | list[float], kind: SimilarityKind) -> float:
    """Similarity of two embeddings under ``kind``."""
    if kind.name == "cosine":
        return cosine_sim(u, v)
    pu = exp_map(u, kind.curvature, kind.exp_map_form)
    pv = exp_map(v, kind.curvature, kind.exp_map_form)
    _same_dim(pu, pv)
    d = poincare_distance(pu, pv)
    if kind.distance_transform == "negative":
        return -d
    return float(np.exp(-d))


@dataclass
class SimilarityCache:
    """Intermediates of ``similarity_matrix`` needed by ``similarity_backward``."""

    kind: SimilarityKind
    sim: FloatArray
    unit: FloatArray | None = None
    norms: FloatArray | None = None
    live: np.ndarray | None = None
    exp_cache: _ExpMapCache | None = None
    points: FloatArray | None = None
    margins_to_boundary: FloatArray | None = None
    sq_dist: FloatArray | None = None
    z: FloatArray | None = None


def _pairwise_sq_dist(p: FloatArray) -> FloatArray:
    n = p.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = p - p[i]
        out[i] = np.sum(diff * diff, axis=1)
    return out


def similarity_matrix(embeddings: FloatArray, kind: SimilarityKind) -> tuple[FloatArray, SimilarityCache]:
    """All-pairs similarity of the rows of ``embeddings``.

    In batch form a vanishing cosine embedding scores zero against everything
    instead of raising, so a dead unit cannot abort training.

    Returns
    -------
    tuple[FloatArray, SimilarityCache]
        The exactly symmetric ``n x n`` matrix and the backward cache.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionMismatchError(f"embeddings must be 2-d, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInputError("embeddings contain NaN or infinity")

    if kind.name == "cosine":
        raw = np.sqrt(np.sum(z * z, axis=1))
        live = raw > NORM_FLOOR
        norms = np.where(live, raw, 1.0)
        # rows at the origin score 0 against everything and receive no gradient
        unit = np.where(live[:, None], z / norms[:, None], 0.0)
        gram = unit @ unit.T
        sim = np.clip(0.5 * (gram + gram.T), -1.0, 1.0)
        return sim, SimilarityCache(kind=kind, sim=sim, unit=unit, norms=norms, live=live)

    points, exp_cache = _exp_map_rows(z, kind.curvature, kind.exp_map_form)
    sq = np.sum(points * points, axis=1)
    if np.any(np.sqrt(sq) >= 1.0 - BALL_GUARD):
        raise OutsideBallError("an embedding left the unit ball")
    boundary = 1.0 - sq
    sq_dist = _pairwise_sq_dist(points)
    zmat = sq_dist / (boundary[:, None] * boundary[None, :])
    dist = 2.0 * np.arcsinh(np.sqrt(zmat))
    sim = -dist if kind.distance_transform == "negative" else np.exp(-dist)
    cache = SimilarityCache(
        kind=kind, sim=sim, exp_cache=exp_cache, points=points, margins_to_boundary=boundary, sq_dist=sq_dist, z=zmat
    )
    return sim, cache


def similarity_backward(cache: SimilarityCache, grad_sim: FloatArray) -> FloatArray:
    """Gradient of a scalar loss w.r.t. the embeddings, given ``dL/dS``.

    Diagonal entries of ``grad_sim`` are ignored: self-similarity is constant.
    """
    g = np.array(grad_sim, dtype=np.float64, copy=True)
    np.fill_diagonal(g, 0.0)

    if cache.kind.name == "cosine":
        assert cache.unit is not None and cache.norms is not None and cache.live is not None
        unit = cache.unit
        grad_unit = (g + g.T) @ unit
        radial = np.sum(grad_unit * unit, axis=1)
        grad = (grad_unit - unit * radial[:, None]) / cache.norms[:, None]
        return np.asarray(np.where(cache.live[:, None], grad, 0.0))

    assert cache.points is not None and cache.margins_to_boundary is not None
    assert cache.sq_dist is not None and cache.z is not None and cache.exp_cache is not None
    if cache.kind.distance_transform == "negative":
        grad_dist = -g
    else:
        grad_dist = -g * cache.sim
    zmat = cache.z
    active = zmat > _Z_FLOOR
    safe_z = np.where(active, zmat, 1.0)
    ddist_dz = np.where(active, 1.0 / (np.sqrt(safe_z) * np.sqrt(1.0 + safe_z)), 0.0)
    w = grad_dist * ddist_dz
    w_sym = w + w.T
    p = cache.points
    a = cache.margins_to_boundary
    coeff = w_sym * 2.0 / (a[:, None] * a[None, :])
    grad_points = p * coeff.sum(axis=1)[:, None] - coeff @ p + p * (np.sum(coeff * cache.sq_dist, axis=1) / a)[:, None]
    return _exp_map_rows_backward(cache.exp_cache, grad_points)
