"""Deep-ensemble and Monte-Carlo-dropout uncertainty baselines.

Both estimate uncertainty from the spread of repeated deterministic-head
forecasts: the ensemble runs one forward per independently trained
member, MC dropout runs repeated stochastic forwards of one model with
dropout left active. The per-pixel mean is the forecast; the per-pixel
population (1/N) variance is the uncertainty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import NowcastModel


@dataclass
class EnsembleSpec:
    """Member count and the per-member training seeds."""

    n_members: int = 10
    member_seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.n_members < 2:
            raise ConfigError("an ensemble needs at least 2 members for a variance")
        if not self.member_seeds:
            self.member_seeds = list(range(self.n_members))
        if len(self.member_seeds) != self.n_members:
            raise ConfigError("member_seeds length must equal n_members")

    @classmethod
    def from_base_seed(cls, base_seed: int, n_members: int = 10) -> "EnsembleSpec":
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_members)]
        return cls(n_members=n_members, member_seeds=seeds)


@dataclass
class SampleUQ:
    """Mean / population-variance summary of repeated forecasts."""

    mean: np.ndarray
    variance: np.ndarray
    members: np.ndarray  # [passes, out_steps, H, W]

    @classmethod
    def from_members(cls, members: np.ndarray) -> "SampleUQ":
        members = np.asarray(members, dtype=np.float64)
        if members.ndim < 2 or members.shape[0] < 1:
            raise ConfigError("members must stack at least one forecast")
        # shift by the first member so identical members give exactly
        # zero variance (and the variance is non-negative by construction)
        d = members - members[0]
        dbar = d.mean(axis=0)
        mean = members[0] + dbar
        variance = ((d - dbar) ** 2).mean(axis=0)
        return cls(mean=mean, variance=variance, members=members)


def ensemble_predict(models: list[NowcastModel], frames) -> SampleUQ:
    """Mean and spread of independently trained members' forecasts."""
    if len(models) < 2:
        raise ConfigError("ensemble_predict needs at least 2 trained members")
    shapes = {tuple(
        (m.config.in_steps, m.config.out_steps, m.config.frame_h, m.config.frame_w)
    ) for m in models}
    if len(shapes) != 1:
        raise ConfigError("ensemble members disagree on model shape")
    members = np.stack([m.predict_frames(frames) for m in models])
    return SampleUQ.from_members(members)


def mc_dropout_predict(model: NowcastModel, frames, n_passes: int = 10,
                       seed: int = 0) -> SampleUQ:
    """Repeated stochastic forwards with dropout active at inference.

    Reproducible for a fixed seed: pass i always consumes the same
    dropout masks.
    """
    if n_passes < 2:
        raise ConfigError("mc_dropout_predict needs n_passes >= 2 for a variance")
    if model.config.dropout_rate == 0.0 and n_passes > 1:
        warnings.warn(
            "MC dropout with dropout_rate=0: all passes are identical and the "
            "variance will be zero",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    members = np.stack([
        model.predict_frames(frames, dropout_active=True, rng=rng)
        for _ in range(n_passes)
    ])
    return SampleUQ.from_members(members)
