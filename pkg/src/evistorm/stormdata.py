"""Desk-scale data supply: synthetic advecting storms and raw-file ingest.

Synthetic events are sums of Gaussian intensity cells, each advected by
its own velocity, scaled by a per-step growth/decay multiplier, with
optional additive noise; frames are clipped to [0, 1]. The spatial
domain wraps toroidally so advected cells never lose mass at the frame
boundary, keeping long sequences well-behaved for training.

Externally supplied data uses a single documented raw layout (see
:func:`ingest`): an ASCII header line

    EVST1 <n_events> <T> <H> <W> <max_value>

followed by little-endian unsigned 16-bit intensities in event-major,
frame-major, row-major order. Values are normalized to [0, 1] by
division by the declared maximum.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestError, ShapeError

log = logging.getLogger(__name__)

HISTORY_STEPS = 13
TARGET_STEPS = 12
DEFAULT_STEP_MINUTES = 5.0
RAW_MAGIC = "EVST1"


@dataclass
class FrameSequence:
    """A [T, H, W] stack of normalized intensities with a fixed time step."""

    frames: np.ndarray
    step_minutes: float = DEFAULT_STEP_MINUTES

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or min(self.frames.shape) < 1:
            raise ShapeError(f"frames must be a [T, H, W] stack, got shape {self.frames.shape}")
        if self.step_minutes <= 0:
            raise ConfigError("step_minutes must be positive")
        lo, hi = float(self.frames.min()), float(self.frames.max())
        if lo < 0.0 or hi > 1.0:
            raise ConfigError(f"frame values must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass
class NowcastSample:
    """A contiguous history/target pair cut from one event."""

    history: FrameSequence
    target: FrameSequence
    event_index: int = -1

    def __post_init__(self):
        if self.history.spatial_shape != self.target.spatial_shape:
            raise ShapeError("history and target spatial shapes differ")
        if self.history.step_minutes != self.target.step_minutes:
            raise ConfigError("history and target time steps differ")


@dataclass
class StormCell:
    """One Gaussian intensity cell: center, velocity, size, growth.

    ``stretch`` elongates the cell along its motion vector (effective
    sigma ``sqrt(sigma^2 + (stretch*|v|)^2)`` parallel to the velocity),
    the advection-smear appearance of interval-accumulated intensity
    fields; 0 renders an isotropic snapshot.
    """

    x: float
    y: float
    velocity: tuple[float, float]  # (dx, dy) in pixels per step
    amplitude: float
    sigma: float
    growth: float = 1.0
    stretch: float = 0.0


@dataclass
class SyntheticStormConfig:
    n_events: int = 40
    height: int = 32
    width: int = 32
    n_frames: int = 25
    cells_per_event: tuple[int, int] = (1, 3)
    speed_range: tuple[float, float] = (0.2, 0.8)  # pixels per step
    growth_range: tuple[float, float] = (0.99, 1.01)  # per-step multiplier
    noise_amplitude: float = 0.01
    seed: int = 0
    amplitude_range: tuple[float, float] = (0.35, 0.9)
    sigma_range: tuple[float, float] = (1.5, 3.0)
    motion_stretch: float = 0.0

    def __post_init__(self):
        if self.n_events < 1 or self.height < 1 or self.width < 1 or self.n_frames < 1:
            raise ConfigError("n_events, height, width, n_frames must be positive")
        if not 0.0 <= self.noise_amplitude < 1.0:
            raise ConfigError("noise_amplitude must lie in [0, 1)")
        if self.motion_stretch < 0.0:
            raise ConfigError("motion_stretch must be >= 0")
        for name in ("cells_per_event", "speed_range", "growth_range",
                     "amplitude_range", "sigma_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range is inverted")
        if self.cells_per_event[0] < 1:
            raise ConfigError("cells_per_event must allow at least one cell")


def render_event(cells: list[StormCell], n_frames: int, height: int, width: int,
                 noise_amplitude: float = 0.0,
                 rng: np.random.Generator | None = None,
                 step_minutes: float = DEFAULT_STEP_MINUTES) -> FrameSequence:
    """Rasterize advecting Gaussian cells onto a toroidal grid."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.zeros((n_frames, height, width))
    for t in range(n_frames):
        field_t = np.zeros((height, width))
        for cell in cells:
            cx = cell.x + cell.velocity[0] * t
            cy = cell.y + cell.velocity[1] * t
            # wrapped displacement keeps cells on the torus
            dx = (xx - cx + width / 2.0) % width - width / 2.0
            dy = (yy - cy + height / 2.0) % height - height / 2.0
            amp = min(cell.amplitude * cell.growth ** t, 1.0)
            speed = math.hypot(*cell.velocity)
            if cell.stretch > 0.0 and speed > 0.0:
                ux, uy = cell.velocity[0] / speed, cell.velocity[1] / speed
                d_par = dx * ux + dy * uy
                d_perp = -dx * uy + dy * ux
                var_par = cell.sigma ** 2 + (cell.stretch * speed) ** 2
                quad = d_par * d_par / (2.0 * var_par) + d_perp * d_perp / (2.0 * cell.sigma ** 2)
            else:
                quad = (dx * dx + dy * dy) / (2.0 * cell.sigma ** 2)
            field_t += amp * np.exp(-quad)
        if noise_amplitude > 0.0 and rng is not None:
            field_t += rng.uniform(-noise_amplitude, noise_amplitude, (height, width))
        frames[t] = np.clip(field_t, 0.0, 1.0)
    return FrameSequence(frames=frames, step_minutes=step_minutes)


def generate(config: SyntheticStormConfig) -> list[FrameSequence]:
    """Deterministically generate synthetic storm events from a config.

    Each event draws from its own child seed, so events could be rendered
    in parallel and concatenated in index order without changing results.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_events)
    return [_generate_event(config, child) for child in children]


def _generate_event(config: SyntheticStormConfig, seed: np.random.SeedSequence) -> FrameSequence:
    rng = np.random.default_rng(seed)
    n_cells = int(rng.integers(config.cells_per_event[0], config.cells_per_event[1] + 1))
    cells = []
    for _ in range(n_cells):
        speed = rng.uniform(*config.speed_range)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        cells.append(StormCell(
            x=rng.uniform(0.0, config.width),
            y=rng.uniform(0.0, config.height),
            velocity=(speed * math.cos(angle), speed * math.sin(angle)),
            amplitude=rng.uniform(*config.amplitude_range),
            sigma=rng.uniform(*config.sigma_range),
            growth=rng.uniform(*config.growth_range),
            stretch=config.motion_stretch,
        ))
    return render_event(cells, config.n_frames, config.height, config.width,
                        noise_amplitude=config.noise_amplitude, rng=rng)


def window(events: list[FrameSequence], stride: int = HISTORY_STEPS + TARGET_STEPS,
           history: int = HISTORY_STEPS, target: int = TARGET_STEPS) -> list[NowcastSample]:
    """Cut history/target windows from each event; never across events."""
    if stride < 1:
        raise ConfigError("stride must be positive")
    needed = history + target
    samples: list[NowcastSample] = []
    skipped = 0
    for idx, event in enumerate(events):
        if event.n_frames < needed:
            skipped += 1
            continue
        for start in range(0, event.n_frames - needed + 1, stride):
            samples.append(NowcastSample(
                history=FrameSequence(event.frames[start:start + history],
                                      step_minutes=event.step_minutes),
                target=FrameSequence(event.frames[start + history:start + needed],
                                     step_minutes=event.step_minutes),
                event_index=idx,
            ))
    if skipped:
        log.info("window: skipped %d event(s) shorter than %d frames", skipped, needed)
    return samples


# ---------------------------------------------------------------------
# event-level train/validation/test splits
# ---------------------------------------------------------------------

@dataclass
class EventSplits:
    train: list[int]
    val: list[int]
    test: list[int]

    def hash(self) -> str:
        text = "train:{};val:{};test:{}".format(
            ",".join(map(str, self.train)),
            ",".join(map(str, self.val)),
            ",".join(map(str, self.test)),
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def split_events(n_events: int, seed: int,
                 ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)) -> EventSplits:
    """Disjoint-by-event splits with a seeded shuffle."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split ratios must sum to 1")
    order = list(np.random.default_rng(seed).permutation(n_events))
    n_val = int(round(ratios[1] * n_events))
    n_test = int(round(ratios[2] * n_events))
    if n_events - n_val - n_test < 1:
        raise ConfigError("split leaves no training events")
    test = sorted(int(i) for i in order[:n_test])
    val = sorted(int(i) for i in order[n_test:n_test + n_val])
    train = sorted(int(i) for i in order[n_test + n_val:])
    return EventSplits(train=train, val=val, test=test)


def samples_for_split(samples: list[NowcastSample], event_ids: list[int]) -> list[NowcastSample]:
    wanted = set(event_ids)
    return [s for s in samples if s.event_index in wanted]


# ---------------------------------------------------------------------
# raw frame file ingest / export
# ---------------------------------------------------------------------

def export_events(path, events: list[FrameSequence], max_value: int = 255) -> None:
    """Write events in the raw EVST1 layout (quantized to max_value)."""
    if not events:
        raise ConfigError("no events to export")
    if not 1 <= max_value <= 65535:
        raise ConfigError("max_value must lie in [1, 65535]")
    shape = events[0].frames.shape
    for e in events:
        if e.frames.shape != shape:
            raise ShapeError("all exported events must share one [T, H, W] shape")
    t, h, w = shape
    header = f"{RAW_MAGIC} {len(events)} {t} {h} {w} {max_value}\n".encode("ascii")
    body = np.concatenate([
        np.round(e.frames * max_value).astype("<u2").reshape(-1) for e in events
    ])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def ingest(path, step_minutes: float = DEFAULT_STEP_MINUTES) -> list[FrameSequence]:
    """Read EVST1 raw frames, rescaling to [0, 1] by the declared maximum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n")
    if newline < 0 or newline > 128:
        raise IngestError("missing or oversized header line", byte_offset=0)
    header = blob[:newline].decode("ascii", errors="replace").split()
    if len(header) != 6 or header[0] != RAW_MAGIC:
        raise IngestError(f"malformed header {header!r}", byte_offset=0)
    try:
        n_events, t, h, w, max_value = (int(v) for v in header[1:])
    except ValueError:
        raise IngestError(f"non-integer header field in {header!r}", byte_offset=0) from None
    if min(n_events, t, h, w) < 1 or not 1 <= max_value <= 65535:
        raise IngestError(f"header values out of range: {header!r}", byte_offset=0)
    data_start = newline + 1
    expected = n_events * t * h * w * 2
    actual = len(blob) - data_start
    if actual != expected:
        raise IngestError(
            f"payload holds {actual} bytes but header implies {expected}",
            byte_offset=data_start,
        )
    values = np.frombuffer(blob, dtype="<u2", offset=data_start)
    too_big = values > max_value
    if too_big.any():
        first = int(np.argmax(too_big))
        raise IngestError(
            f"value {int(values[first])} exceeds declared maximum {max_value}",
            byte_offset=data_start + 2 * first,
        )
    frames = values.astype(np.float64).reshape(n_events, t, h, w) / max_value
    return [FrameSequence(frames=frames[i], step_minutes=step_minutes) for i in range(n_events)]


# ---------------------------------------------------------------------
# key-value manifests
# ---------------------------------------------------------------------

def write_manifest(path, entries: dict[str, str]) -> None:
    lines = [f"{key} {value}" for key, value in entries.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(" ")
            entries[key] = value
    return entries
