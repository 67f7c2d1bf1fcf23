"""Scratch: does trained-EDL epistemic respond to advection speed at all?"""
import sys, time, tempfile, pathlib
import numpy as np
from evistorm.harness.config import ExperimentConfig, DataConfig, TrainingConfig
from evistorm.harness.training import train
from evistorm.harness.checkpoint import load_checkpoint
from evistorm.evidential import constrain, decompose
from evistorm.model import ModelConfig
from evistorm.stormdata import StormCell, render_event, FrameSequence, NowcastSample, SyntheticStormConfig
from evistorm.numerics import no_grad

H = W = 16
EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 12
LAM = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05

def data_cfg(speed=(0.1, 1.0), seed=100):
    return DataConfig(
        synthetic=SyntheticStormConfig(
            n_events=24, height=H, width=W, n_frames=37,
            cells_per_event=(1, 2), speed_range=speed, growth_range=(0.995, 1.005),
            noise_amplitude=0.01, sigma_range=(2.0, 3.0), seed=seed),
        window_stride=6, split_seed=7)

mc = ModelConfig(d_model=16, n_blocks=2, d_k=8, ffn_width=32, in_steps=13,
                 out_steps=12, frame_h=H, frame_w=W, head="evidential")
tr = TrainingConfig(epochs=EPOCHS, batch_size=4, learning_rate=3e-3, seed=11,
                    lambda_max=LAM, n_members=2, n_passes=2)
base = pathlib.Path(tempfile.mkdtemp())
cfg = ExperimentConfig(variant="edl", data=data_cfg(seed=111), model=mc,
                       training=tr, out_dir=str(base / "edl"))
t0 = time.perf_counter()
train(cfg)
print(f"trained in {time.perf_counter()-t0:.1f}s")
model = load_checkpoint(base / "edl" / "model.ckpt").build_model()

rng = np.random.default_rng(55)
print("speed -> mean epistemic / mean aleatoric / mean upsilon / mean alpha (20 controlled samples each)")
for speed in (0.0, 0.3, 0.6, 0.9, 1.2, 1.8, 2.4):
    eps, als, ups, alphas = [], [], [], []
    for _ in range(20):
        angle = rng.uniform(0, 2 * np.pi)
        cell = StormCell(x=rng.uniform(0, W), y=rng.uniform(0, H),
                         velocity=(speed * np.cos(angle), speed * np.sin(angle)),
                         amplitude=rng.uniform(0.4, 0.8), sigma=rng.uniform(2.0, 3.0))
        event = render_event([cell], 13, H, W, noise_amplitude=0.01, rng=rng)
        raw = model.predict_raw_evidential(event.frames)
        with no_grad():
            p = constrain(raw)
            f = decompose(p)
        eps.append(f.epistemic.mean()); als.append(f.aleatoric.mean())
        ups.append(p.upsilon.data.mean()); alphas.append(p.alpha.data.mean())
    print(f"  v={speed:4.1f}: ep {np.mean(eps):.5f}  al {np.mean(als):.5f}  "
          f"up {np.mean(ups):.3f}  a {np.mean(alphas):.3f}")
