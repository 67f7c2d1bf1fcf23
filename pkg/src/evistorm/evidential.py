"""Normal-Inverse-Gamma evidential regression head.

The model emits four raw channels per target pixel; :func:`constrain`
maps them to valid NIG parameters (gamma, upsilon, alpha, beta), from
which :func:`decompose` produces the point prediction and the aleatoric
and epistemic variance maps:

    prediction = gamma
    aleatoric  = beta / (alpha - 1)          (expected data variance)
    epistemic  = beta / (upsilon * (alpha - 1))  (variance of the mean)

Training minimizes the marginal negative log likelihood, which for the
NIG prior is a location-scale Student-t with location gamma, scale
``beta (1 + upsilon) / (upsilon alpha)``, and ``2 alpha`` degrees of
freedom, plus an evidence regularizer ``|y - gamma| (2 upsilon + alpha)``
that shrinks claimed evidence on badly predicted targets. The two terms
are combined as ``nll + lambda * reg`` with lambda ramped up over early
training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .numerics import Tensor, absolute, as_tensor, clamp_min, lgamma, log, softplus, square

EVIDENCE_FLOOR = 1e-15  # keeps upsilon, beta > 0 and alpha > 1 in floating point


@dataclass
class NIGParamMap:
    """Per-pixel evidential parameters; upsilon > 0, alpha > 1, beta > 0."""

    gamma: Tensor
    upsilon: Tensor
    alpha: Tensor
    beta: Tensor

    def __post_init__(self):
        self.gamma = as_tensor(self.gamma)
        self.upsilon = as_tensor(self.upsilon)
        self.alpha = as_tensor(self.alpha)
        self.beta = as_tensor(self.beta)
        shape = self.gamma.shape
        for name in ("upsilon", "alpha", "beta"):
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != gamma shape {shape}")
        if np.any(self.upsilon.data <= 0.0):
            raise DomainError("upsilon must be strictly positive")
        if np.any(self.alpha.data <= 1.0):
            raise DomainError("alpha must be strictly greater than 1")
        if np.any(self.beta.data <= 0.0):
            raise DomainError("beta must be strictly positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.gamma.shape

    def student_t_params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Predictive Student-t (location, squared scale, dof) arrays."""
        g, u, a, b = (t.data for t in (self.gamma, self.upsilon, self.alpha, self.beta))
        return g, b * (1.0 + u) / (u * a), 2.0 * a


@dataclass
class UncertaintyField:
    """Point prediction plus aleatoric/epistemic variance maps."""

    prediction: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray

    def __post_init__(self):
        if np.any(self.aleatoric <= 0.0) or np.any(self.epistemic <= 0.0):
            raise DomainError("uncertainty maps must be strictly positive")


@dataclass
class LambdaSchedule:
    """Regularizer weight over training steps: constant or linear ramp."""

    lambda_max: float = 0.01
    ramp_steps: int = 1
    mode: str = "linear-ramp"

    def __post_init__(self):
        if self.lambda_max < 0.0:
            raise ConfigError("lambda_max must be >= 0")
        if self.ramp_steps < 1:
            raise ConfigError("ramp_steps must be a positive integer")
        if self.mode not in ("constant", "linear-ramp"):
            raise ConfigError(f"unknown lambda schedule mode {self.mode!r}")

    def value(self, step: int) -> float:
        if step < 0:
            raise ConfigError("step must be >= 0")
        if self.mode == "constant":
            return self.lambda_max
        return self.lambda_max * min(1.0, step / self.ramp_steps)


@dataclass
class EvidentialLoss:
    """nll + lambda * reg, with the parts kept for logging/diagnosis."""

    nll: Tensor
    reg: Tensor
    lam: float
    total: Tensor


def constrain(raw: Tensor) -> NIGParamMap:
    """Map a 4-channel raw head output to valid NIG parameters.

    Channel 0 is gamma (identity); channels 1-3 pass through softplus,
    floored at EVIDENCE_FLOOR so positivity survives underflow, with +1
    added for alpha. Differentiable end to end.
    """
    raw = as_tensor(raw)
    if raw.ndim < 1 or raw.shape[0] != 4:
        raise ShapeError(f"expected 4 leading channels (gamma, upsilon, alpha, beta), got shape {raw.shape}")
    gamma = raw[0]
    upsilon = clamp_min(softplus(raw[1]), EVIDENCE_FLOOR)
    alpha = clamp_min(softplus(raw[2]), EVIDENCE_FLOOR) + 1.0
    beta = clamp_min(softplus(raw[3]), EVIDENCE_FLOOR)
    return NIGParamMap(gamma=gamma, upsilon=upsilon, alpha=alpha, beta=beta)


def decompose(p: NIGParamMap) -> UncertaintyField:
    """Prediction and the two uncertainty maps from NIG parameters."""
    g, u, a, b = (t.data for t in (p.gamma, p.upsilon, p.alpha, p.beta))
    if np.any(a <= 1.0):
        raise DomainError("alpha must exceed 1 for a finite expected variance")
    aleatoric = b / (a - 1.0)
    return UncertaintyField(
        prediction=g.copy(),
        aleatoric=aleatoric,
        epistemic=aleatoric / u,
    )


def nll_loss(p: NIGParamMap, y, reduce: str = "mean") -> Tensor:
    """Negative log likelihood of targets under the predictive Student-t.

    Uses the algebraically reduced form of
    ``-log St(y; gamma, beta (1+upsilon)/(upsilon alpha), 2 alpha)``,
    which needs two lgamma evaluations per element and no explicit
    degrees-of-freedom division.
    """
    y = as_tensor(y)
    if y.shape != p.shape:
        raise ShapeError(f"target shape {y.shape} != parameter shape {p.shape}")
    g, u, a, b = p.gamma, p.upsilon, p.alpha, p.beta
    omega = 2.0 * b * (1.0 + u)
    nll = (
        0.5 * log(math.pi / u)
        - a * log(omega)
        + (a + 0.5) * log(u * square(y - g) + omega)
        + lgamma(a)
        - lgamma(a + 0.5)
    )
    return _reduce(nll, reduce)


def evidence_regularizer(p: NIGParamMap, y, reduce: str = "mean") -> Tensor:
    """|y - gamma| * (2 upsilon + alpha); zero exactly when gamma == y.

    The absolute value's subgradient at y == gamma is taken as 0.
    """
    y = as_tensor(y)
    if y.shape != p.shape:
        raise ShapeError(f"target shape {y.shape} != parameter shape {p.shape}")
    reg = absolute(y - p.gamma) * (2.0 * p.upsilon + p.alpha)
    return _reduce(reg, reduce)


def total_loss(p: NIGParamMap, y, schedule: LambdaSchedule, step: int) -> EvidentialLoss:
    """Mean NLL plus the schedule-weighted mean evidence regularizer."""
    nll = nll_loss(p, y)
    reg = evidence_regularizer(p, y)
    lam = schedule.value(step)
    return EvidentialLoss(nll=nll, reg=reg, lam=lam, total=nll + lam * reg)


def _reduce(t: Tensor, reduce: str) -> Tensor:
    if reduce == "mean":
        return t.mean()
    if reduce == "none":
        return t
    raise ConfigError(f"unknown reduction {reduce!r}")
