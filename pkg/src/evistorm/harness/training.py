"""Training loops for the four model variants plus pretrained-weight
transfer.

Variants:

* ``edl``        one evidential-head model trained on the NLL + ramped
                 evidence-regularizer loss;
* ``p-edl``      a deterministic backbone pretrained on MSE, its weights
                 transferred into an evidential model, then fine-tuned;
* ``ensemble``   n independently seeded deterministic models on MSE;
* ``mc-dropout`` one deterministic model trained with dropout active.

Every run is a pure function of (config, seed): initialization, data
shuffling, and dropout draw from separate child streams of the training
seed. A non-finite loss aborts within one step and leaves a diagnostic
dump next to the checkpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericError, TrainingDivergedError, TransferError
from ..evidential import LambdaSchedule, constrain, nll_loss, total_loss
from ..model import ModelConfig, NowcastModel
from ..numerics import Tensor, backward, no_grad, square
from ..stormdata import (
    EventSplits,
    FrameSequence,
    NowcastSample,
    generate,
    ingest,
    samples_for_split,
    split_events,
    window,
)
from .checkpoint import Checkpoint, atomic_write_text, load_checkpoint, save_checkpoint
from .config import DataConfig, ExperimentConfig, TrainingConfig
from .optim import Adam, clip_global_norm


@dataclass
class Dataset:
    train: list[NowcastSample]
    val: list[NowcastSample]
    test: list[NowcastSample]
    splits: EventSplits

    @property
    def split_hash(self) -> str:
        return self.splits.hash()


def build_dataset(data: DataConfig) -> Dataset:
    """Generate or ingest events, window them, and split by event."""
    events = generate(data.synthetic) if data.synthetic is not None else ingest(data.ingest_path)
    samples = window(events, stride=data.window_stride)
    if not samples:
        raise ConfigError("dataset produced no history/target windows")
    splits = split_events(len(events), data.split_seed, data.split_ratios)
    return Dataset(
        train=samples_for_split(samples, splits.train),
        val=samples_for_split(samples, splits.val),
        test=samples_for_split(samples, splits.test),
        splits=splits,
    )


# ---------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------

def mse_sample_loss(model: NowcastModel, sample: NowcastSample,
                    dropout_active: bool, rng) -> Tensor:
    pred = model.forward(sample.history.frames, dropout_active=dropout_active, rng=rng)
    return square(pred - Tensor(sample.target.frames)).mean()


def edl_sample_loss(model: NowcastModel, sample: NowcastSample,
                    schedule: LambdaSchedule, step: int,
                    dropout_active: bool, rng) -> Tensor:
    raw = model.forward(sample.history.frames, dropout_active=dropout_active, rng=rng)
    params = constrain(raw)
    return total_loss(params, sample.target.frames, schedule, step).total


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    stopped_early: bool = False


def _validation_metric(model: NowcastModel, samples: list[NowcastSample],
                       kind: str) -> float:
    """Mean MSE (deterministic) or mean NLL (evidential) on a split."""
    if not samples:
        return math.nan
    totals = []
    with no_grad():
        for sample in samples:
            if kind == "edl":
                raw = model.forward(sample.history.frames)
                totals.append(nll_loss(constrain(raw), sample.target.frames).item())
            else:
                pred = model.forward(sample.history.frames)
                totals.append(float(np.mean((pred.data - sample.target.frames) ** 2)))
    return float(np.mean(totals))


def train_one_model(model: NowcastModel, dataset: Dataset, tconf: TrainingConfig,
                    kind: str, seed_stream: np.random.SeedSequence,
                    dump_path: Path | None = None,
                    schedule: LambdaSchedule | None = None,
                    epochs: int | None = None,
                    step_offset: int = 0) -> TrainHistory:
    """Run the generic epoch loop on an already constructed model.

    ``kind`` is "mse" or "edl". Mutates the model in place and leaves it
    holding the best-validation parameters (final parameters when there
    is no validation split).
    """
    if kind not in ("mse", "edl"):
        raise ConfigError(f"unknown training kind {kind!r}")
    epochs = tconf.epochs if epochs is None else epochs
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in seed_stream.spawn(2))
    optimizer = Adam(model.params, lr=tconf.learning_rate)
    steps_per_epoch = max(1, math.ceil(len(dataset.train) / tconf.batch_size))
    if kind == "edl" and schedule is None:
        schedule = LambdaSchedule(
            lambda_max=tconf.lambda_max,
            ramp_steps=tconf.lambda_ramp_steps or steps_per_epoch,
            mode=tconf.lambda_mode,
        )
    dropout_active = model.config.dropout_rate > 0.0
    history = TrainHistory()
    best_metric = math.inf
    best_arrays: dict[str, np.ndarray] | None = None
    since_best = 0
    step = step_offset
    name_of = {id(p): name for name, p in model.params.items()}

    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(dataset.train))
        epoch_losses = []
        for start in range(0, len(order), tconf.batch_size):
            batch = [dataset.train[i] for i in order[start:start + tconf.batch_size]]
            try:
                losses = []
                for sample in batch:
                    if kind == "edl":
                        losses.append(edl_sample_loss(
                            model, sample, schedule, step, dropout_active, dropout_rng))
                    else:
                        losses.append(mse_sample_loss(model, sample, dropout_active, dropout_rng))
                loss = losses[0]
                for extra in losses[1:]:
                    loss = loss + extra
                loss = loss * (1.0 / len(losses))
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise NumericError("loss is not finite")
                grads = backward(loss)
            except NumericError as exc:
                dump = _divergence_dump(model, epoch, step, order[start:start + tconf.batch_size], exc)
                path = None
                if dump_path is not None:
                    atomic_write_text(dump_path, json.dumps(dump, indent=2) + "\n")
                    path = str(dump_path)
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}", dump_path=path
                ) from exc
            named = {name_of[id(t)]: g for t, g in grads.items() if id(t) in name_of}
            clip_global_norm(named, tconf.grad_clip)
            optimizer.step(named)
            epoch_losses.append(loss_value)
            step += 1
        history.train_loss.append(float(np.mean(epoch_losses)))
        metric = _validation_metric(model, dataset.val, kind)
        history.val_metric.append(metric)
        if dataset.val and math.isfinite(metric):
            if metric < best_metric:
                best_metric = metric
                best_arrays = model.state_arrays()
                since_best = 0
            else:
                since_best += 1
                if since_best > tconf.patience:
                    history.stopped_early = True
                    break
    if best_arrays is not None:
        model.load_state_arrays(best_arrays)
    return history


def _divergence_dump(model: NowcastModel, epoch: int, step: int,
                     batch_indices, exc: Exception) -> dict:
    return {
        "epoch": epoch,
        "step": step,
        "batch_sample_indices": [int(i) for i in batch_indices],
        "error": str(exc),
        "parameter_norms": {
            name: float(np.linalg.norm(p.data)) for name, p in model.params.items()
        },
    }


# ---------------------------------------------------------------------
# pretrained-weight transfer (deterministic backbone -> evidential head)
# ---------------------------------------------------------------------

_BACKBONE_FIELDS = ("d_model", "n_blocks", "d_k", "ffn_width", "in_steps",
                    "out_steps", "frame_h", "frame_w")


def pretrain_transfer(mse_checkpoint: Checkpoint, edl_config: ModelConfig,
                      seed: int = 0, head_init_scale: float = 0.1) -> NowcastModel:
    """Build an evidential model carrying a pretrained deterministic
    backbone.

    All backbone arrays are copied bitwise. In the decoder, the gamma
    channel's weights and bias are seeded from the deterministic head, so
    the transferred model's point forecast initially equals the
    pretrained model's; the three evidence channels start small-random.
    """
    src_cfg = mse_checkpoint.model_config
    mismatched = [name for name in _BACKBONE_FIELDS
                  if getattr(src_cfg, name) != getattr(edl_config, name)]
    if src_cfg.head != "deterministic":
        mismatched.append("head(source)")
    if edl_config.head != "evidential":
        mismatched.append("head(target)")
    if mismatched:
        raise TransferError("incompatible configs for weight transfer", mismatched)
    model = NowcastModel(edl_config, seed=seed)
    out = edl_config.out_steps
    for name, value in mse_checkpoint.arrays.items():
        if name.startswith("decode."):
            continue
        if name not in model.params:
            raise TransferError("checkpoint carries unknown arrays", [name])
        model.params[name].data = np.array(value, dtype=np.float64)
    # head: gamma columns come first in the (d_model, 4*out_steps) layout
    w = model.params["decode.w"].data * head_init_scale
    w[:, :out] = mse_checkpoint.arrays["decode.w"]
    b = np.zeros(4 * out)
    b[:out] = mse_checkpoint.arrays["decode.b"]
    model.params["decode.w"].data = w
    model.params["decode.b"].data = b
    return model


# ---------------------------------------------------------------------
# variant drivers
# ---------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_paths: list[str]
    histories: dict[str, TrainHistory]
    split_hash: str


def train(config: ExperimentConfig) -> TrainResult:
    """Train the configured variant; write checkpoints, loss curves, and
    the resolved config under ``config.out_dir``."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.save(out_dir / "config.json")
    dataset = build_dataset(config.data)
    tconf = config.training
    root = np.random.SeedSequence(tconf.seed)
    histories: dict[str, TrainHistory] = {}
    paths: list[str] = []

    if config.variant in ("edl", "mc-dropout"):
        head = "evidential" if config.variant == "edl" else "deterministic"
        model_cfg = _with_head(config.model, head)
        init_seed, loop_seed = root.spawn(2)
        model = NowcastModel(model_cfg, seed=init_seed)
        history = train_one_model(
            model, dataset, tconf, "edl" if config.variant == "edl" else "mse",
            loop_seed, dump_path=out_dir / "divergence.json",
        )
        path = out_dir / "model.ckpt"
        save_checkpoint(path, model.state_arrays(), model_cfg,
                        step=len(history.train_loss), rng_state=_seed_state(loop_seed))
        histories["model"] = history
        paths.append(str(path))

    elif config.variant == "p-edl":
        pre_epochs = max(1, int(round(tconf.epochs * tconf.pretrain_fraction)))
        fine_epochs = max(0, tconf.epochs - pre_epochs)
        det_cfg = _with_head(config.model, "deterministic")
        init_seed, pre_seed, transfer_seed, fine_seed = root.spawn(4)
        det_model = NowcastModel(det_cfg, seed=init_seed)
        histories["pretrain"] = train_one_model(
            det_model, dataset, tconf, "mse", pre_seed,
            dump_path=out_dir / "divergence.json", epochs=pre_epochs,
        )
        pre_path = out_dir / "pretrained.ckpt"
        save_checkpoint(pre_path, det_model.state_arrays(), det_cfg,
                        step=len(histories["pretrain"].train_loss))
        paths.append(str(pre_path))
        edl_cfg = _with_head(config.model, "evidential")
        model = pretrain_transfer(load_checkpoint(pre_path), edl_cfg, seed=transfer_seed)
        histories["finetune"] = train_one_model(
            model, dataset, tconf, "edl", fine_seed,
            dump_path=out_dir / "divergence.json", epochs=fine_epochs,
        )
        path = out_dir / "model.ckpt"
        save_checkpoint(path, model.state_arrays(), edl_cfg,
                        step=len(histories["finetune"].train_loss))
        paths.append(str(path))

    elif config.variant == "ensemble":
        det_cfg = _with_head(config.model, "deterministic")
        member_streams = root.spawn(tconf.n_members)
        for i, stream in enumerate(member_streams):
            init_seed, loop_seed = stream.spawn(2)
            member = NowcastModel(det_cfg, seed=init_seed)
            history = train_one_model(
                member, dataset, tconf, "mse", loop_seed,
                dump_path=out_dir / f"divergence-member-{i:03d}.json",
            )
            path = out_dir / f"member-{i:03d}.ckpt"
            save_checkpoint(path, member.state_arrays(), det_cfg,
                            step=len(history.train_loss))
            histories[f"member-{i:03d}"] = history
            paths.append(str(path))
        atomic_write_text(out_dir / "ensemble-manifest.txt", "".join(
            f"member-{i:03d} {Path(p).name}\n" for i, p in enumerate(paths)
        ))
    else:
        raise ConfigError(f"unknown variant {config.variant!r}")

    _write_loss_curves(out_dir / "losses.tsv", histories)
    return TrainResult(checkpoint_paths=paths, histories=histories,
                       split_hash=dataset.split_hash)


def _with_head(cfg: ModelConfig, head: str) -> ModelConfig:
    if cfg.head == head:
        return cfg
    fields = {f: getattr(cfg, f) for f in (
        "d_model", "n_blocks", "d_k", "ffn_width", "in_steps", "out_steps",
        "frame_h", "frame_w", "dropout_rate")}
    return ModelConfig(head=head, **fields)


def _seed_state(seed_seq: np.random.SeedSequence) -> dict:
    state = np.random.default_rng(seed_seq).bit_generator.state
    return json.loads(json.dumps(state))  # plain JSON types only


def _write_loss_curves(path: Path, histories: dict[str, TrainHistory]) -> None:
    lines = ["model\tepoch\ttrain_loss\tval_metric"]
    for name, history in histories.items():
        for epoch, (tl, vm) in enumerate(zip(history.train_loss, history.val_metric)):
            lines.append(f"{name}\t{epoch}\t{tl!r}\t{vm!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
