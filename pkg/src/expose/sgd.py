"""Projected stochastic approximation of the kernel mean embedding.

With step sizes theta/t and w_1 = 0 the iterate after T steps is, for
theta = 1, exactly the running mean of the T sampled feature vectors. The
objective is 1-strongly convex with a 1-Lipschitz gradient, which fixes the
constants in the bounds below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .data import SAMPLING_MODES, WITH_REPLACEMENT, WITHOUT_REPLACEMENT, Dataset, SamplerState
from .embedding import ModelState
from .errors import InputError, NumericError
from .kernel import RksFeatureMap, embed

STRONG_CONVEXITY = 1.0
GRADIENT_LIPSCHITZ = 1.0

OBJECTIVE = "objective"
PARAMETER = "parameter"
EPSILON_MODES = (OBJECTIVE, PARAMETER)

# Convex combinations of unit vectors can overshoot the unit ball by a few ulps;
# those are not treated as projection events.
PROJECTION_RTOL = 1e-12


@dataclass(frozen=True)
class SgdConfig:
    theta: float = 1.0
    ball_radius: float = 1.0
    iterations: Optional[int] = None
    epsilon: Optional[float] = None
    epsilon_mode: str = OBJECTIVE
    seed: int = 0
    sampling: str = WITH_REPLACEMENT

    def __post_init__(self):
        if not self.theta > 0.5:
            raise InputError(f"theta must exceed 1/2 (= 1/(2 alpha)), got {self.theta}")
        if not self.ball_radius > 0:
            raise InputError(f"ball radius must be positive, got {self.ball_radius}")
        if (self.iterations is None) == (self.epsilon is None):
            raise InputError("set exactly one of iterations or epsilon")
        if self.iterations is not None and int(self.iterations) < 1:
            raise InputError(f"iterations must be >= 1, got {self.iterations}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        if self.epsilon_mode not in EPSILON_MODES:
            raise InputError(f"epsilon mode must be one of {EPSILON_MODES}")
        if self.sampling not in SAMPLING_MODES:
            raise InputError(f"sampling must be one of {SAMPLING_MODES}")

    @property
    def total_iterations(self) -> int:
        if self.iterations is not None:
            return int(self.iterations)
        return iterations_for_accuracy(self.epsilon, self.ball_radius, self.epsilon_mode)


def _exact(x):
    # decimal-literal semantics, so 0.1 means 1/10 and ceil(1/0.1^2) is 100
    return Fraction(repr(float(x)))


def iterations_for_accuracy(epsilon, M=1.0, mode=OBJECTIVE) -> int:
    """Iterations T after which the expected error is at most epsilon.

    ``objective``: E[f(w_T) - f(w*)] <= M^2/(2T), so T = ceil(M^2 / (2 eps)).
    ``parameter``: E|w_T - w*|^2 <= M^2/T, so T = ceil(M^2 / eps^2).
    Neither depends on the dataset size.
    """
    if not (epsilon > 0 and M > 0):
        raise InputError(f"epsilon and M must be positive, got {epsilon}, {M}")
    eps, m2 = _exact(epsilon), _exact(M) ** 2
    if mode == OBJECTIVE:
        need = m2 / (2 * eps)
    elif mode == PARAMETER:
        need = m2 / eps ** 2
    else:
        raise InputError(f"unknown accuracy mode {mode!r}")
    return max(1, math.ceil(need))


def theoretical_bounds(t, M=1.0, theta=1.0):
    """Return ``(param_bound, objective_bound, Q)`` at iteration t.

    Q(theta) = max{theta^2 M^2 / (2 theta - 1), M^2}, where M^2 bounds
    |w_1 - w*|^2; param_bound = Q/t and objective_bound = Q/(2t).
    """
    if not theta > 1.0 / (2 * STRONG_CONVEXITY):
        raise InputError(f"bound undefined for theta <= 1/2 (got {theta})")
    if t < 1 or not M > 0:
        raise InputError("need t >= 1 and M > 0")
    a = STRONG_CONVEXITY
    q = max(theta**2 * M**2 / (2 * a * theta - 1), M**2 / a**2)
    return q / t, 0.5 * GRADIENT_LIPSCHITZ * q / t, q


def stochastic_gradient(w, feat) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    feat = np.asarray(feat, dtype=np.float64)
    if w.shape != feat.shape:
        raise InputError(f"length mismatch: {w.shape} vs {feat.shape}")
    return w - feat


def project_ball(w, M=1.0, rtol=0.0) -> np.ndarray:
    """Metric projection onto {v : |v| <= M}.

    Vectors with |w| <= M (1 + rtol) are returned unchanged.
    """
    if not M > 0:
        raise InputError(f"ball radius must be positive, got {M}")
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if not np.isfinite(norm):
        raise InputError("cannot project a non-finite vector")
    if norm <= M * (1.0 + rtol):
        return w
    return w * (M / norm)


def _update(w, feat, t, theta, M):
    gamma = theta / t
    cand = (1.0 - gamma) * w + gamma * feat
    norm = math.sqrt(float(cand @ cand))
    if norm > M * (1.0 + PROJECTION_RTOL):
        return cand * (M / norm), True
    return cand, False


def sgd_step(state: ModelState, feat, config: SgdConfig) -> ModelState:
    """w_{t+1} = Pi(w_t - (theta/t)(w_t - phi(x_t)))."""
    t = state.iteration
    if t < 1:
        raise InputError(f"iteration counter must be >= 1, got {t}")
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape != state.weights.shape:
        raise InputError(f"length mismatch: {state.weights.shape} vs {feat.shape}")
    w, _ = _update(state.weights, feat, t, config.theta, config.ball_radius)
    return ModelState(w, t + 1, state.fingerprint)


Callback = Callable[[ModelState, bool], None]


def run_sgd(config: SgdConfig, data: Dataset, fmap: RksFeatureMap,
            callback: Optional[Callback] = None) -> ModelState:
    """Run T projected SGD steps from w_1 = 0 and return w_{T+1}.

    ``callback(state, rescaled)`` is called after every step with the new
    iterate and whether the ball projection changed it.
    """
    if not isinstance(data, Dataset):
        data = Dataset(data)
    if data.d != fmap.input_dim:
        raise InputError(f"dataset has d={data.d}, feature map expects d={fmap.input_dim}")
    T = config.total_iterations
    if config.sampling == WITHOUT_REPLACEMENT and T > data.n:
        raise InputError(
            f"{T} iterations exceed the {data.n} rows available without replacement")
    sampler = SamplerState.create(data.n, config.sampling, config.seed)
    x = data.features
    w = np.zeros(fmap.feature_dim)
    for t in range(1, T + 1):
        feat = embed(fmap, x[sampler.draw()])
        w, rescaled = _update(w, feat, t, config.theta, config.ball_radius)
        if callback is not None:
            callback(ModelState(w, t + 1, fmap.fingerprint), rescaled)
    if not np.all(np.isfinite(w)):
        raise NumericError("SGD produced non-finite weights")
    return ModelState(w, T + 1, fmap.fingerprint)
