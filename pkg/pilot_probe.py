"""Scratch: does the backbone encode motion at all? Linear probe + centroid."""
import sys, tempfile, pathlib
import numpy as np
from evistorm.harness.config import ExperimentConfig, DataConfig, TrainingConfig
from evistorm.harness.training import train
from evistorm.harness.checkpoint import load_checkpoint
from evistorm.evidential import constrain, decompose
from evistorm.model import ModelConfig
from evistorm.stormdata import StormCell, render_event, SyntheticStormConfig
from evistorm.numerics import no_grad, Tensor

H = W = 16
EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 40

def data_cfg(seed=100):
    return DataConfig(
        synthetic=SyntheticStormConfig(
            n_events=24, height=H, width=W, n_frames=37,
            cells_per_event=(1, 1), speed_range=(0.2, 1.0),
            growth_range=(1.0, 1.0), noise_amplitude=0.005,
            amplitude_range=(0.5, 0.7), sigma_range=(2.2, 2.8), seed=seed),
        window_stride=6, split_seed=7)

mc = ModelConfig(d_model=16, n_blocks=1, d_k=8, ffn_width=32, in_steps=13,
                 out_steps=12, frame_h=H, frame_w=W, head="evidential")
tr = TrainingConfig(epochs=EPOCHS, batch_size=4, learning_rate=3e-3, seed=11,
                    lambda_max=0.1, n_members=2, n_passes=2)
base = pathlib.Path(tempfile.mkdtemp())
cfg = ExperimentConfig(variant="edl", data=data_cfg(seed=111), model=mc,
                       training=tr, out_dir=str(base / "edl"))
train(cfg)
model = load_checkpoint(base / "edl" / "model.ckpt").build_model()


def final_features(frames):
    with no_grad():
        h = model.embed(frames) + Tensor(model._pe)
        for block in model.blocks:
            h = block(h)
    return h.data[model.config.in_steps - 1]  # (H, W, d)


def centroid(frame):
    tot = frame.sum()
    yy, xx = np.mgrid[0:H, 0:W]
    return np.array([(yy * frame).sum() / tot, (xx * frame).sum() / tot])


rng = np.random.default_rng(99)
# 1) centroid displacement: does gamma advect along true velocity?
print("lead-6 predicted displacement along motion axis (true = 6*v):")
for speed in (0.4, 0.8):
    projs = []
    for _ in range(15):
        # centered blob moving +x, far from wrap
        cell = StormCell(x=5.0, y=8.0, velocity=(speed, 0.0), amplitude=0.6, sigma=2.5)
        event = render_event([cell], 13, H, W, noise_amplitude=0.0, rng=rng)
        raw = model.predict_raw_evidential(event.frames)
        with no_grad():
            f = decompose(constrain(raw))
        pred6 = np.clip(f.prediction[5], 0, 1)
        c_hist = centroid(event.frames[-1])
        c_pred = centroid(pred6)
        projs.append(c_pred[1] - c_hist[1])  # x displacement
    print(f"  v={speed}: mean dx {np.mean(projs):+.2f} px (true {6*speed:.1f})")

# 2) linear probe: ridge-regress sample speed from pooled final features
X, y = [], []
for _ in range(120):
    speed = rng.uniform(0.1, 1.2)
    angle = rng.uniform(0, 2 * np.pi)
    cell = StormCell(x=rng.uniform(0, W), y=rng.uniform(0, H),
                     velocity=(speed * np.cos(angle), speed * np.sin(angle)),
                     amplitude=0.6, sigma=2.5)
    event = render_event([cell], 13, H, W, noise_amplitude=0.005, rng=rng)
    feats = final_features(event.frames)
    X.append(feats.mean(axis=(0, 1)))  # pooled d-vector
    y.append(speed)
X = np.array(X); y = np.array(y)
Xc = X - X.mean(0); yc = y - y.mean()
w = np.linalg.solve(Xc.T @ Xc + 1e-3 * np.eye(X.shape[1]), Xc.T @ yc)
pred = Xc @ w
r2 = 1 - np.sum((pred - yc) ** 2) / np.sum(yc ** 2)
print(f"linear speed probe on pooled final-slice features: R^2 = {r2:.3f}")
