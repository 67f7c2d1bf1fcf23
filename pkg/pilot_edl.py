"""Scratch: EDL-only probe of epistemic OOD response vs training setup."""
import sys, time, tempfile, pathlib
import numpy as np
from evistorm.harness.config import ExperimentConfig, DataConfig, TrainingConfig
from evistorm.harness.training import train, build_dataset
from evistorm.harness.checkpoint import load_checkpoint
from evistorm.evidential import constrain, decompose
from evistorm.model import ModelConfig
from evistorm.stormdata import SyntheticStormConfig, window, generate
from evistorm.evalkit import mse_by_lead
from evistorm.numerics import no_grad

H = W = 16
EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 12
LR = float(sys.argv[2]) if len(sys.argv) > 2 else 3e-3
LAM = float(sys.argv[3]) if len(sys.argv) > 3 else 0.05
SEED = int(sys.argv[4]) if len(sys.argv) > 4 else 11

def data_cfg(speed=(0.2, 0.8), seed=100, n_events=24, n_frames=37):
    return DataConfig(
        synthetic=SyntheticStormConfig(
            n_events=n_events, height=H, width=W, n_frames=n_frames,
            cells_per_event=(1, 2), speed_range=speed, growth_range=(0.995, 1.005),
            noise_amplitude=0.01, sigma_range=(2.0, 3.0), seed=seed),
        window_stride=6, split_seed=7)

mc = ModelConfig(d_model=16, n_blocks=1, d_k=8, ffn_width=32, in_steps=13,
                 out_steps=12, frame_h=H, frame_w=W, head="evidential", dropout_rate=0.0)
tr = TrainingConfig(epochs=EPOCHS, batch_size=4, learning_rate=LR, seed=SEED,
                    lambda_max=LAM, n_members=2, n_passes=2)

base = pathlib.Path(tempfile.mkdtemp())
cfg = ExperimentConfig(variant="edl", data=data_cfg(seed=100 + SEED), model=mc,
                       training=tr, out_dir=str(base / "edl"))
t0 = time.perf_counter()
res = train(cfg)
print(f"trained {EPOCHS} epochs in {time.perf_counter()-t0:.1f}s; "
      f"loss {res.histories['model'].train_loss[0]:.4f} -> {res.histories['model'].train_loss[-1]:.4f}")

model = load_checkpoint(base / "edl" / "model.ckpt").build_model()
dataset = build_dataset(cfg.data)
preds, truths = [], []
for s in dataset.test:
    raw = model.predict_raw_evidential(s.history.frames)
    with no_grad():
        f = decompose(constrain(raw))
    preds.append(np.clip(f.prediction, 0, 1)); truths.append(s.target.frames)
curve = mse_by_lead(np.stack(preds), np.stack(truths)).values
print("test MSE curve:", np.round(curve, 5))
print("monotone viol:", np.round(np.diff(curve), 5)[np.diff(curve) < 0])

def ep_stats(speed, seed):
    samples = window(generate(data_cfg(speed=speed, seed=seed).synthetic), stride=25)
    vals, spatial_sd = [], []
    for s in samples:
        raw = model.predict_raw_evidential(s.history.frames)
        with no_grad():
            f = decompose(constrain(raw))
        vals.append(f.epistemic.mean())
        spatial_sd.append(f.epistemic.std())
    return float(np.mean(vals)), float(np.mean(spatial_sd))

id_ep, id_sd = ep_stats((0.2, 0.8), 900)
ood_ep, ood_sd = ep_stats((0.6, 2.4), 901)
print(f"epistemic ID mean {id_ep:.5f} (spatial sd {id_sd:.5f})")
print(f"epistemic OOD mean {ood_ep:.5f} (spatial sd {ood_sd:.5f})")
print(f"ratio: {ood_ep/id_ep:.3f}")

# persistence baseline for context
pers = []
for s in dataset.test:
    last = s.history.frames[-1]
    pers.append(np.broadcast_to(last, s.target.frames.shape))
pcurve = mse_by_lead(np.stack(pers), np.stack(truths)).values
print("persistence MSE curve:", np.round(pcurve, 5))
