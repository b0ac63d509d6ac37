"""Feed-forward embedding network with an explicit reverse pass."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .._typing import FloatArray
from ..errors import DimensionMismatchError, MissingCacheError, NonFiniteInputError

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = 128
DEFAULT_OUTPUT = 32
# small positive bias keeps rectifier units, and so embeddings, off exact zero at start
BIAS_INIT = 0.01

LayerGrads = list[tuple[FloatArray, FloatArray]]


@dataclass
class _ForwardCache:
    inputs: list[FloatArray]
    pre_activations: list[FloatArray]


class MlpModel:
    """Affine layers with a rectifier between consecutive layers.

    ``layers[k]`` is ``(W, b)`` with ``W`` of shape ``(in, out)``; the last layer
    has no rectifier.
    """

    def __init__(self, layers: Sequence[tuple[FloatArray, FloatArray]]) -> None:
        if not layers:
            raise DimensionMismatchError("a model needs at least one layer")
        self.layers: list[tuple[FloatArray, FloatArray]] = []
        for k, (w, b) in enumerate(layers):
            w = np.array(w, dtype=np.float64, copy=True)
            b = np.array(b, dtype=np.float64, copy=True)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatchError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if self.layers and self.layers[-1][0].shape[1] != w.shape[0]:
                raise DimensionMismatchError(f"layer {k} expects {w.shape[0]} inputs, previous layer emits {self.layers[-1][0].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteInputError(f"layer {k} has non-finite parameters")
            self.layers.append((w, b))
        self._cache: _ForwardCache | None = None

    @classmethod
    def initialize(cls, widths: Sequence[int], seed: int) -> "MlpModel":
        """He-initialised weights and ``BIAS_INIT`` biases for the given layer widths."""
        if len(widths) < 2 or min(widths) < 1:
            raise DimensionMismatchError(f"widths must list at least input and output sizes, got {list(widths)}")
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            layers.append((w, np.full(fan_out, BIAS_INIT)))
        return cls(layers)

    @classmethod
    def default(cls, input_dim: int, seed: int) -> "MlpModel":
        return cls.initialize([input_dim, DEFAULT_HIDDEN, DEFAULT_OUTPUT], seed)

    @property
    def input_dim(self) -> int:
        return int(self.layers[0][0].shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1][0].shape[1])

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *(int(w.shape[1]) for w, _ in self.layers)]

    def parameters(self) -> list[FloatArray]:
        """Flat ``[W0, b0, W1, b1, ...]`` view of the parameters."""
        return [p for layer in self.layers for p in layer]

    def set_parameters(self, params: Sequence[FloatArray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise DimensionMismatchError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        self.layers = [(np.asarray(params[2 * k]), np.asarray(params[2 * k + 1])) for k in range(len(self.layers))]
        self._cache = None

    def copy(self) -> "MlpModel":
        return MlpModel(self.layers)

    def _run(self, features: FloatArray, keep: bool) -> FloatArray:
        h = np.asarray(features, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionMismatchError(f"model expects (n, {self.input_dim}) inputs, got {h.shape}")
        inputs: list[FloatArray] = []
        pre: list[FloatArray] = []
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            inputs.append(h)
            a = h @ w + b
            pre.append(a)
            h = a if k == last else np.maximum(a, 0.0)
        self._cache = _ForwardCache(inputs, pre) if keep else None
        return h

    def forward(self, features: FloatArray) -> FloatArray:
        """Embeddings of ``features``; keeps the activations for ``backward``."""
        return self._run(features, keep=True)

    def embed(self, features: FloatArray) -> FloatArray:
        """Evaluation-mode forward pass; nothing is cached."""
        return self._run(features, keep=False)

    def backward(self, upstream: FloatArray) -> LayerGrads:
        """Parameter gradients given ``dL/d(embedding)`` for the cached forward pass.

        Raises
        ------
        MissingCacheError
            If no training-mode forward pass precedes the call.
        """
        if self._cache is None:
            raise MissingCacheError("backward called without a cached forward pass")
        g = np.asarray(upstream, dtype=np.float64)
        expected = self._cache.pre_activations[-1].shape
        if g.shape != expected:
            raise DimensionMismatchError(f"upstream gradient {g.shape} does not match output {expected}")
        grads: LayerGrads = []
        for k in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[k]
            grads.append((self._cache.inputs[k].T @ g, g.sum(axis=0)))
            if k > 0:
                g = (g @ w.T) * (self._cache.pre_activations[k - 1] > 0.0)
        grads.reverse()
        return grads
