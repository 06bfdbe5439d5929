# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""A small trainable decision function.

Windows are mean-pooled to ``pool x pool x 4`` features; a softmax layer
predicts the walk/stop action and a sigmoid layer scores the angle buckets.
It is trained by plain gradient descent on the oracle's labels.
"""

import math
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.special import expit, softmax
from skimage.measure import block_reduce

from mapinfer.exceptions import DataError, DivergenceError, UsageError
from mapinfer.geograph import RandomSource, as_generator
from mapinfer.logging import get_logger
from mapinfer.oracle import (
    LabelSettings,
    OracleState,
    TrainingExample,
    decode_array,
    dynamic_training_session,
    encode_array,
    loss,
    loss_gradient,
)
from mapinfer.raster import RasterGrid
from mapinfer.tracer import DecisionInput, DecisionOutput, Region, SearchState

logger = get_logger("toy")

WEIGHTS_VERSION = 1


class ToyWeights(BaseModel):
    """Serialized weights; arrays are base64 little-endian float64."""

    model_config = ConfigDict(extra="forbid")

    version: int = WEIGHTS_VERSION
    a: int = Field(gt=0)
    pool: int = Field(gt=0)
    action: str
    angle: str


class ToyDecider:
    """Linear softmax/sigmoid model over pooled window features."""

    needs_window = True

    def __init__(self, a: int = 64, pool: int = 16, rng: RandomSource = 0) -> None:
        if a < 1 or pool < 1:
            raise UsageError("a and pool must be positive")
        self.a = a
        self.pool = pool
        gen = as_generator(rng)
        n = self.n_features
        self.w_action: NDArray[np.float64] = gen.normal(0.0, 0.01, size=(2, n))
        self.w_angle: NDArray[np.float64] = gen.normal(0.0, 0.01, size=(a, n))

    @property
    def n_features(self) -> int:
        return self.pool * self.pool * 4 + 1

    def features(self, window: NDArray[np.float64]) -> NDArray[np.float64]:
        """Pooled channels, flattened, with a trailing bias of 1."""
        d = window.shape[0]
        block = max(1, math.ceil(d / self.pool))
        reduced = block_reduce(window, block_size=(block, block, 1), func=np.mean, cval=0.0)
        pooled = np.zeros((self.pool, self.pool, 4), dtype=np.float64)
        h, w = min(self.pool, reduced.shape[0]), min(self.pool, reduced.shape[1])
        pooled[:h, :w] = reduced[:h, :w]
        return np.append(pooled.ravel(), 1.0)

    def forward(
        self, f: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return softmax(self.w_action @ f), expit(self.w_angle @ f)

    def output(self, window: NDArray[np.float64]) -> DecisionOutput:
        p, g = self.forward(self.features(window))
        return DecisionOutput(float(p[0]), float(1.0 - p[0]), tuple(float(v) for v in g))

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput:
        return self.output(inp.window)

    def loss_and_gradient(
        self, examples: Sequence[TrainingExample]
    ) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
        """Mean loss over examples and its gradient w.r.t. both weight matrices."""
        if not examples:
            raise UsageError("Cannot compute a loss over no examples")
        total = 0.0
        g_action = np.zeros_like(self.w_action)
        g_angle = np.zeros_like(self.w_angle)
        for ex in examples:
            f = self.features(ex.input.window)
            p, g = self.forward(f)
            if not (np.isfinite(p).all() and np.isfinite(g).all()):
                raise DivergenceError("Training diverged: non-finite model output")
            out = DecisionOutput(float(p[0]), float(1.0 - p[0]), tuple(float(v) for v in g))
            total += loss(out, ex)
            d_walk, d_stop, d_angles = loss_gradient(out, ex)
            d_p = np.array([d_walk, d_stop])
            d_logits = p * (d_p - float(p @ d_p))
            g_action += np.outer(d_logits, f)
            g_angle += np.outer(d_angles * g * (1.0 - g), f)
        n = len(examples)
        return total / n, g_action / n, g_angle / n

    def train(
        self, examples: Sequence[TrainingExample], epochs: int, lr: float
    ) -> list[float]:
        """Full-batch gradient descent; returns the loss before each update.

        Raises:
            DivergenceError: If the loss stops being finite
        """
        history = []
        for epoch in range(1, epochs + 1):
            value = self.gradient_step(examples, lr)
            logger.info(f"epoch {epoch}: loss {value:.6f}")
            history.append(value)
        return history

    def gradient_step(self, examples: Sequence[TrainingExample], lr: float) -> float:
        value, g_action, g_angle = self.loss_and_gradient(examples)
        if not math.isfinite(value) or not (
            np.isfinite(g_action).all() and np.isfinite(g_angle).all()
        ):
            raise DivergenceError(f"Training diverged (loss={value})")
        self.w_action -= lr * g_action
        self.w_angle -= lr * g_angle
        return value

    def save(self) -> str:
        return ToyWeights(
            a=self.a,
            pool=self.pool,
            action=encode_array(self.w_action, "<f8"),
            angle=encode_array(self.w_angle, "<f8"),
        ).model_dump_json() + "\n"

    @classmethod
    def load(cls, text: str) -> "ToyDecider":
        """Rebuild a decider from save() output.

        Raises:
            DataError: If the weights file is malformed
        """
        try:
            weights = ToyWeights.model_validate_json(text)
        except ValidationError as e:
            raise DataError(f"Invalid toy decider weights: {e}") from e
        if weights.version != WEIGHTS_VERSION:
            raise DataError(f"Unsupported weights version {weights.version}")
        decider = cls(weights.a, weights.pool)
        n = decider.n_features
        decider.w_action = decode_array(weights.action, "<f8", (2, n))
        decider.w_angle = decode_array(weights.angle, "<f8", (weights.a, n))
        return decider


def train_toy_decider(
    sessions: Iterable[Sequence[TrainingExample]],
    epochs: int,
    lr: float,
    a: int = 64,
    pool: int = 16,
    rng: RandomSource = 0,
) -> tuple[ToyDecider, list[float]]:
    """Train a fresh decider on fixed example sets."""
    examples = [ex for session in sessions for ex in session]
    if not examples:
        raise UsageError("Training needs at least one example")
    for ex in examples:
        if len(ex.target_angles) != a:
            raise DataError(f"Example has {len(ex.target_angles)} angle targets, expected {a}")
    decider = ToyDecider(a, pool, rng)
    return decider, decider.train(examples, epochs, lr)


def train_dynamic(
    oracle: OracleState,
    regions: Sequence[Region],
    epochs: int,
    lr: float,
    steps: int,
    settings: LabelSettings = LabelSettings(),
    imagery: Optional[RasterGrid] = None,
    pool: int = 16,
    rng: RandomSource = 0,
) -> tuple[ToyDecider, list[float]]:
    """Alternate between collecting labels with the current model and updating it.

    Every epoch re-runs one session per region with the model itself driving
    the search, then takes one gradient step on the labels gathered.
    """
    gen = as_generator(rng)
    decider = ToyDecider(settings.a, pool, gen)
    history = []
    for epoch in range(1, epochs + 1):
        examples = []
        for k, region in enumerate(regions):
            session = dynamic_training_session(
                oracle.fresh(), decider, region, steps, settings, imagery, gen, session=k
            )
            examples.extend(ex for ex, _ in session)
        value = decider.gradient_step(examples, lr)
        logger.info(f"epoch {epoch}: {len(examples)} examples, loss {value:.6f}")
        history.append(value)
    return decider, history
