"""Scratch pilot for acceptance criteria 7-9 config calibration (not shipped)."""
import time
import numpy as np
from evistorm.harness.config import ExperimentConfig, DataConfig, TrainingConfig
from evistorm.harness.training import train, build_dataset
from evistorm.harness.checkpoint import load_checkpoint
from evistorm.evalkit import mse_by_lead
from evistorm.evidential import constrain, decompose
from evistorm.baselines import ensemble_predict, mc_dropout_predict
from evistorm.model import ModelConfig
from evistorm.stormdata import SyntheticStormConfig, window, generate
from evistorm.numerics import no_grad
import tempfile, pathlib

H = W = 16
def data_cfg(speed=(0.2, 0.8), seed=100, n_events=36):
    return DataConfig(
        synthetic=SyntheticStormConfig(
            n_events=n_events, height=H, width=W, n_frames=25,
            cells_per_event=(1, 3), speed_range=speed, growth_range=(0.99, 1.01),
            noise_amplitude=0.01, seed=seed),
        window_stride=25, split_seed=7)

def model_cfg(head="deterministic", dropout=0.0):
    return ModelConfig(d_model=16, n_blocks=1, d_k=8, ffn_width=32, in_steps=13,
                       out_steps=12, frame_h=H, frame_w=W, head=head, dropout_rate=dropout)

EPOCHS = 6
LR = 2e-3

def run_seed(seed, base):
    tr = TrainingConfig(epochs=EPOCHS, batch_size=4, learning_rate=LR, seed=seed,
                        n_members=3, n_passes=10)
    out = {}
    t0 = time.perf_counter()
    for variant, dropout in [("edl", 0.0), ("p-edl", 0.0), ("mc-dropout", 0.1), ("ensemble", 0.0)]:
        cfg = ExperimentConfig(variant=variant, data=data_cfg(),
                               model=model_cfg(dropout=dropout),
                               training=tr, out_dir=str(base / f"{variant}-{seed}"))
        train(cfg)
        out[variant] = cfg
    print(f"seed {seed}: trained 4 variants in {time.perf_counter()-t0:.1f}s")
    return out

def test_mse_curves(cfgs):
    dataset = build_dataset(cfgs["edl"].data)
    curves = {}
    for variant, cfg in cfgs.items():
        preds, truths = [], []
        ckdir = pathlib.Path(cfg.out_dir)
        if variant == "ensemble":
            models = [load_checkpoint(p).build_model() for p in sorted(ckdir.glob("member-*.ckpt"))]
        else:
            models = [load_checkpoint(ckdir / "model.ckpt").build_model()]
        for s in dataset.test:
            truths.append(s.target.frames)
            if variant in ("edl", "p-edl"):
                raw = models[0].predict_raw_evidential(s.history.frames)
                with no_grad():
                    f = decompose(constrain(raw))
                preds.append(np.clip(f.prediction, 0, 1))
            elif variant == "ensemble":
                preds.append(ensemble_predict(models, s.history.frames).mean)
            else:
                preds.append(mc_dropout_predict(models[0], s.history.frames, 10, seed=0).mean)
        curves[variant] = mse_by_lead(np.stack(preds), np.stack(truths)).values
    return curves

def epistemic_means(cfg, data):
    dataset_samples = window(generate(data.synthetic), stride=25)
    model = load_checkpoint(pathlib.Path(cfg.out_dir) / "model.ckpt").build_model()
    vals = []
    for s in dataset_samples:
        raw = model.predict_raw_evidential(s.history.frames)
        with no_grad():
            f = decompose(constrain(raw))
        vals.append(f.epistemic.mean())
    return float(np.mean(vals))

base = pathlib.Path(tempfile.mkdtemp())
seeds = [11, 12]
all_curves = {}
ratios = []
pedl_vs_edl = []
for seed in seeds:
    cfgs = run_seed(seed, base)
    curves = test_mse_curves(cfgs)
    for v, c in curves.items():
        all_curves.setdefault(v, []).append(c)
    id_ep = epistemic_means(cfgs["edl"], data_cfg(seed=300))
    ood_ep = epistemic_means(cfgs["edl"], data_cfg(speed=(0.6, 2.4), seed=300))
    ratios.append(ood_ep / id_ep)
    print(f"  seed {seed}: epistemic ID {id_ep:.4g} OOD {ood_ep:.4g} ratio {ood_ep/id_ep:.2f}")
    pedl_vs_edl.append((curves["p-edl"].mean(), curves["edl"].mean()))
    print(f"  seed {seed}: test MSE p-edl {curves['p-edl'].mean():.5f} vs edl {curves['edl'].mean():.5f}")

print()
for v, cs in all_curves.items():
    avg = np.mean(cs, axis=0)
    diffs = np.diff(avg)
    viol = diffs < -(0.05 * (avg.max() - avg.min()))
    print(f"{v}: curve {np.round(avg, 5)} monotone-ok={not viol.any()}")
print("epistemic ratios:", [round(r, 2) for r in ratios])
print("p-edl wins:", sum(1 for p, e in pedl_vs_edl if p < e), "/", len(pedl_vs_edl))
