"""Black-box victims and exact query accounting.

The only thing an attack ever learns from a victim is a ``VictimResponse``:
the top-1 label and its probability. Logits, margins and non-top-1
probabilities never leave this module. All queries flow through a
``QuerySession`` so that the counter equals the number of victim forward
evaluations exactly; fooling-rate and median-query statistics are only
meaningful under that accounting.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import requests

from .errors import QueryBudgetExceeded, RemoteUnavailable, ShapeMismatch
from .tensors import VideoTensor

__all__ = [
    "VictimResponse",
    "QuerySession",
    "LinearSoftmaxVictim",
    "FrameObliviousVictim",
    "RemoteVictim",
]


@dataclass(frozen=True)
class VictimResponse:
    """Top-1 class id and its probability; the entire observable output."""

    label: int
    probability: float


class QuerySession:
    """Single-consumer query stream against one victim.

    The counter increases by exactly 1 per successful classification and
    never decreases. An optional absolute budget cap makes the session raise
    ``QueryBudgetExceeded`` instead of issuing a query past the cap. Purpose
    tags (outermost wins) support per-phase query breakdowns when logging is
    enabled.
    """

    def __init__(self, victim, *, log_purposes: bool = False):
        self._victim = victim
        self._count = 0
        self._budget = None
        self._purpose = None
        self.purpose_log: list[str] | None = [] if log_purposes else None

    @property
    def victim(self):
        return self._victim

    @property
    def count(self) -> int:
        return self._count

    def query(self, x: VideoTensor) -> VictimResponse:
        if self._budget is not None and self._count >= self._budget:
            raise QueryBudgetExceeded(f"query budget of {self._budget} reached")
        response = self._victim.classify(x)
        self._count += 1
        if self.purpose_log is not None:
            self.purpose_log.append(self._purpose or "untagged")
        return response

    def reset_count(self) -> None:
        self._count = 0

    @contextmanager
    def budget(self, cap: int | None):
        """Cap the absolute session count inside the block. ``None`` is a no-op."""
        previous = self._budget
        self._budget = cap if cap is not None else previous
        try:
            yield self
        finally:
            self._budget = previous

    @contextmanager
    def purpose(self, tag: str):
        """Tag queries issued inside the block; an already-active tag wins."""
        if self._purpose is not None:
            yield self
            return
        self._purpose = tag
        try:
            yield self
        finally:
            self._purpose = None


def _top1_probability(scores: np.ndarray, temperature: float, index: int) -> float:
    z = scores / temperature
    z = z - z.max()
    e = np.exp(z)
    return float(e[index] / e.sum())


class LinearSoftmaxVictim:
    """K-way linear classifier with analytic hyperplane boundaries.

    Prediction is ``argmax_k <w_k, x> + b_k`` (ties to the lowest class id);
    the reported probability is a softmax over the scores at a configurable
    temperature. A desk-scale stand-in for real video models whose decision
    boundaries are known in closed form.
    """

    def __init__(self, weights, biases, temperature: float = 1.0):
        w = np.asarray(weights, dtype=np.float64)
        b = np.asarray(biases, dtype=np.float64)
        if w.ndim != 5:
            raise ShapeMismatch(f"weights must be (classes, t, w, h, c), got shape {w.shape}")
        if w.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"biases shape {b.shape} does not match {w.shape[0]} classes")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self._weights = w
        self._flat = np.ascontiguousarray(w.reshape(w.shape[0], -1))
        self._biases = b
        self._temperature = float(temperature)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self._weights.shape[1:]

    @property
    def classes(self) -> int:
        return self._weights.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def biases(self) -> np.ndarray:
        return self._biases

    @property
    def temperature(self) -> float:
        return self._temperature

    def classify(self, x: VideoTensor) -> VictimResponse:
        if x.dims != self.dims:
            raise ShapeMismatch(f"victim expects dims {self.dims}, got {x.dims}")
        scores = self._flat @ x.data.ravel() + self._biases
        label = int(np.argmax(scores))
        return VictimResponse(label, _top1_probability(scores, self._temperature, label))

    @classmethod
    def random(cls, dims, classes: int = 2, seed: int = 0, temperature: float = 1.0,
               weight_scale: float | None = None) -> "LinearSoftmaxVictim":
        """Seeded random victim; weights scaled so 0-255 inputs give O(1) scores."""
        dims = tuple(dims)
        n = int(np.prod(dims))
        if weight_scale is None:
            weight_scale = 1.0 / (255.0 * np.sqrt(n))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        weights = rng.standard_normal((classes, *dims)) * weight_scale
        biases = rng.standard_normal(classes) * 0.1
        return cls(weights, biases, temperature)

    @classmethod
    def mean_threshold(cls, dims, level: float = 100.0, temperature: float = 1.0) -> "LinearSoftmaxVictim":
        """Two-class victim answering 1 iff the mean pixel exceeds ``level``."""
        dims = tuple(dims)
        n = int(np.prod(dims))
        weights = np.stack([np.zeros(dims), np.full(dims, 1.0 / n)])
        biases = np.array([0.0, -float(level)])
        return cls(weights, biases, temperature)


class FrameObliviousVictim:
    """Wrapper that zeroes a fixed set of frames before classification.

    By construction the output is invariant to any change confined to the
    ignored frames, which makes it an oracle for temporal pruning: those
    frames can always be dropped from a perturbation without consequence.
    """

    def __init__(self, inner, ignored_frames):
        frames = tuple(sorted(set(int(t) for t in ignored_frames)))
        t = inner.dims[0]
        for f in frames:
            if not 0 <= f < t:
                raise ValueError(f"ignored frame {f} outside [0, {t})")
        self._inner = inner
        self._ignored = frames

    @property
    def dims(self):
        return self._inner.dims

    @property
    def ignored_frames(self) -> tuple[int, ...]:
        return self._ignored

    @property
    def inner(self):
        return self._inner

    def classify(self, x: VideoTensor) -> VictimResponse:
        if x.dims != self.dims:
            raise ShapeMismatch(f"victim expects dims {self.dims}, got {x.dims}")
        data = x.data.copy()
        data[list(self._ignored)] = 0.0
        return self._inner.classify(VideoTensor._wrap(data))


class RemoteVictim:
    """HTTP client for a victim served elsewhere.

    One POST to ``/v1/classify`` per classification. Transport failures and
    5xx responses are fatal (``RemoteUnavailable``); the attack must abort
    rather than retry, because silent retries would corrupt query statistics.
    A session counts one query per successful response and zero per failure.
    """

    def __init__(self, url: str, dims=None, timeout: float = 10.0):
        self._url = url.rstrip("/") + "/v1/classify"
        self._dims = tuple(dims) if dims is not None else None
        self._timeout = timeout
        self._http = requests.Session()

    @property
    def dims(self):
        return self._dims

    def classify(self, x: VideoTensor) -> VictimResponse:
        if self._dims is not None and x.dims != self._dims:
            raise ShapeMismatch(f"victim expects dims {self._dims}, got {x.dims}")
        t, w, h, c = x.dims
        payload = {"t": t, "w": w, "h": h, "c": c, "data": x.data.ravel().tolist()}
        try:
            resp = self._http.post(self._url, json=payload, timeout=self._timeout)
        except requests.RequestException as exc:
            raise RemoteUnavailable(f"transport failure: {exc}") from exc
        if resp.status_code == 422:
            raise ShapeMismatch(f"remote victim rejected dims: {resp.text.strip()}")
        if resp.status_code != 200:
            raise RemoteUnavailable(f"remote victim returned HTTP {resp.status_code}")
        try:
            body = resp.json()
            return VictimResponse(int(body["label"]), float(body["probability"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteUnavailable(f"malformed response body: {exc}") from exc
