"""Evaluation runs: metrics battery, cost profile, report/map emission,
and cross-variant comparison."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..baselines import ensemble_predict, mc_dropout_predict
from ..errors import CheckpointError, ConfigError, SplitMismatchError
from ..evidential import constrain, decompose
from ..evalkit import (
    CSI_THRESHOLDS,
    CostProfile,
    EvalReport,
    GaussianPredictive,
    StudentTPredictive,
    csi,
    mse_by_lead,
    profile,
    reliability,
    read_report,
    uncertainty_error_correlation,
    write_report,
)
from ..model import NowcastModel
from ..numerics import no_grad
from .checkpoint import atomic_write_text, load_checkpoint
from .config import ExperimentConfig
from .training import Dataset, build_dataset

APPENDIX_MAP_LEADS = (2, 4, 6, 8)  # 10, 20, 30, 40 minutes at 5-minute steps


def _load_models(config: ExperimentConfig, checkpoint_dir: Path) -> list[NowcastModel]:
    if config.variant == "ensemble":
        paths = sorted(checkpoint_dir.glob("member-*.ckpt"))
        if len(paths) < 2:
            raise CheckpointError(f"no ensemble member checkpoints under {checkpoint_dir}")
        return [load_checkpoint(p).build_model() for p in paths]
    path = checkpoint_dir / "model.ckpt"
    return [load_checkpoint(path).build_model()]


def collect_predictions(config: ExperimentConfig, models: list[NowcastModel],
                        dataset: Dataset) -> dict[str, np.ndarray]:
    """Forecasts, predictive-distribution parameters, and uncertainty maps
    for every test sample, stacked along a leading sample axis."""
    tconf = config.training
    truths = np.stack([s.target.frames for s in dataset.test])
    preds, unc = [], []
    if config.variant in ("edl", "p-edl"):
        locs, scales, dofs = [], [], []
        model = models[0]
        for sample in dataset.test:
            raw = model.predict_raw_evidential(sample.history.frames)
            with no_grad():
                params = constrain(raw)
            field = decompose(params)
            loc, scale_sq, dof = params.student_t_params()
            preds.append(np.clip(field.prediction, 0.0, 1.0))
            unc.append(field.epistemic)
            locs.append(loc)
            scales.append(scale_sq)
            dofs.append(dof)
        dist = {"kind": "student-t", "loc": np.stack(locs),
                "scale_sq": np.stack(scales), "dof": np.stack(dofs)}
    elif config.variant == "ensemble":
        means, variances = [], []
        for sample in dataset.test:
            uq = ensemble_predict(models, sample.history.frames)
            means.append(uq.mean)
            variances.append(uq.variance)
        preds, unc = means, variances
        dist = {"kind": "gaussian", "mean": np.stack(means), "variance": np.stack(variances)}
    elif config.variant == "mc-dropout":
        base = int(np.random.SeedSequence([tconf.seed, 0x3C]).generate_state(1)[0])
        means, variances = [], []
        for i, sample in enumerate(dataset.test):
            uq = mc_dropout_predict(models[0], sample.history.frames,
                                    n_passes=tconf.n_passes, seed=base + i)
            means.append(uq.mean)
            variances.append(uq.variance)
        preds, unc = means, variances
        dist = {"kind": "gaussian", "mean": np.stack(means), "variance": np.stack(variances)}
    else:
        raise ConfigError(f"unknown variant {config.variant!r}")
    return {
        "predictions": np.stack(preds),
        "truths": truths,
        "uncertainty": np.stack(unc),
        "distribution": dist,
    }


def predictive_from_dict(dist: dict):
    if dist["kind"] == "gaussian":
        return GaussianPredictive(dist["mean"], dist["variance"])
    if dist["kind"] == "student-t":
        return StudentTPredictive(dist["loc"], dist["scale_sq"], dist["dof"])
    raise ConfigError(f"unknown predictive kind {dist['kind']!r}")


def compute_report(variant: str, predictions: np.ndarray, truths: np.ndarray,
                   uncertainty: np.ndarray, distribution: dict,
                   cost: CostProfile, split_hash: str,
                   meta: dict | None = None) -> EvalReport:
    """Assemble the metric battery from prediction arrays (pure; this is
    also the seam used to verify oracle-injected predictions)."""
    return EvalReport(
        variant=variant,
        csi_report=csi(predictions, truths, CSI_THRESHOLDS),
        mse=mse_by_lead(predictions, truths),
        reliability_curve=reliability(predictive_from_dict(distribution), truths),
        correlation=uncertainty_error_correlation(uncertainty, (predictions - truths) ** 2),
        cost=cost,
        split_hash=split_hash,
        meta=meta or {},
    )


def make_inference_runner(config: ExperimentConfig, models: list[NowcastModel],
                          frames: np.ndarray):
    """One full uncertainty-producing inference as a zero-arg callable,
    plus its pass count and total parameter count."""
    tconf = config.training
    if config.variant in ("edl", "p-edl"):
        def runner():
            with no_grad():
                constrain(models[0].forward(frames))
        return runner, 1, models[0].parameter_count()
    if config.variant == "ensemble":
        def runner():
            ensemble_predict(models, frames)
        return runner, len(models), sum(m.parameter_count() for m in models)
    def runner():
        mc_dropout_predict(models[0], frames, n_passes=tconf.n_passes, seed=0)
    return runner, tconf.n_passes, models[0].parameter_count()


def evaluate(config: ExperimentConfig, report_dir, checkpoint_dir=None,
             profile_repeats: int = 10, map_leads=APPENDIX_MAP_LEADS) -> EvalReport:
    """Run the full battery on the test split and write the report files."""
    checkpoint_dir = Path(checkpoint_dir or config.out_dir)
    report_dir = Path(report_dir)
    dataset = build_dataset(config.data)
    if not dataset.test:
        raise ConfigError("test split is empty")
    models = _load_models(config, checkpoint_dir)
    collected = collect_predictions(config, models, dataset)
    runner, passes, param_count = make_inference_runner(
        config, models, dataset.test[0].history.frames)
    cost = profile(runner, parameter_count=param_count, passes=passes,
                   n_repeats=profile_repeats)
    report = compute_report(
        config.variant,
        collected["predictions"], collected["truths"], collected["uncertainty"],
        collected["distribution"], cost, dataset.split_hash,
        meta={"n_test_samples": len(dataset.test),
              "checkpoint_dir": str(checkpoint_dir)},
    )
    write_report(report, report_dir)
    config.save(report_dir / "config.json")
    _write_maps(report_dir / "maps", collected, map_leads)
    return report


def _write_maps(maps_dir: Path, collected: dict, leads) -> None:
    """Per-lead grids: exemplar target/prediction plus per-pixel RMSE and
    mean uncertainty over the test split."""
    maps_dir.mkdir(parents=True, exist_ok=True)
    preds = collected["predictions"]
    truths = collected["truths"]
    unc = collected["uncertainty"]
    n_leads = preds.shape[1]
    for lead in leads:
        if not 1 <= lead <= n_leads:
            continue
        i = lead - 1
        rmse = np.sqrt(np.mean((preds[:, i] - truths[:, i]) ** 2, axis=0))
        mean_unc = unc[:, i].mean(axis=0)
        target = truths[0, i]
        output = preds[0, i]
        lines = ["row\tcol\ttarget\tprediction\trmse\tuncertainty"]
        h, w = target.shape
        for r in range(h):
            for c in range(w):
                cells = (target[r, c], output[r, c], rmse[r, c], mean_unc[r, c])
                lines.append(f"{r}\t{c}\t" + "\t".join(repr(float(v)) for v in cells))
        atomic_write_text(maps_dir / f"lead-{lead:02d}.tsv", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------
# cross-variant comparison
# ---------------------------------------------------------------------

def compare(report_dirs: list, out_dir) -> dict[str, str]:
    """Side-by-side tables from per-variant reports on one test split."""
    if not report_dirs:
        raise ConfigError("no report directories given")
    summaries = [read_report(d) for d in report_dirs]
    hashes = {s["split_hash"] for s in summaries}
    if len(hashes) != 1:
        raise SplitMismatchError(
            f"reports disagree on the test split (hashes: {sorted(hashes)}); "
            "recompute them on identical data"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    variants = [s["variant"] for s in summaries]
    paths: dict[str, str] = {}

    rows = []
    for s in summaries:
        rows.append([s["variant"]] + [
            "nan" if s["csi"][str(t)] is None else repr(s["csi"][str(t)])
            for t in CSI_THRESHOLDS
        ])
    paths["csi_table"] = _table(out / "csi_table.tsv",
                                ["variant"] + [f"csi_{t}" for t in CSI_THRESHOLDS], rows)

    n_leads = len(summaries[0]["mse_by_lead"])
    rows = [[str(lead + 1)] + [repr(s["mse_by_lead"][lead]) for s in summaries]
            for lead in range(n_leads)]
    paths["mse_overlay"] = _table(out / "mse_overlay.tsv", ["lead_step"] + variants, rows)

    rows = []
    for lead in range(n_leads):
        row = [str(lead + 1)]
        for s in summaries:
            v = s["correlation"][lead]
            row.append("nan" if v is None else repr(v))
        rows.append(row)
    paths["correlation_overlay"] = _table(out / "correlation_overlay.tsv",
                                          ["lead_step"] + variants, rows)

    nominal = summaries[0]["reliability"]["nominal"]
    rows = [[repr(nominal[i])] + [repr(s["reliability"]["observed"][i]) for s in summaries]
            for i in range(len(nominal))]
    paths["reliability_overlay"] = _table(out / "reliability_overlay.tsv",
                                          ["nominal"] + variants, rows)

    rows = []
    for s, d in zip(summaries, report_dirs):
        timing = _read_timing(Path(d) / "timing.tsv")
        rows.append([
            s["variant"], str(s["cost"]["total_flops"]), str(s["cost"]["passes"]),
            str(s["cost"]["parameter_count"]),
            timing.get("wall_mean_s", "nan"), timing.get("wall_sd_s", "nan"),
        ])
    paths["cost_table"] = _table(
        out / "cost_table.tsv",
        ["variant", "total_flops", "passes", "parameter_count", "wall_mean_s", "wall_sd_s"],
        rows)

    atomic_write_text(out / "comparison.json", json.dumps({
        "split_hash": summaries[0]["split_hash"],
        "variants": variants,
        "report_dirs": [str(d) for d in report_dirs],
    }, indent=2, sort_keys=True) + "\n")
    return paths


def _table(path: Path, header: list[str], rows: list[list[str]]) -> str:
    lines = ["\t".join(header)] + ["\t".join(row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return str(path)


def _read_timing(path: Path) -> dict[str, str]:
    if not path.exists():
        return {}
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if len(lines) < 2:
        return {}
    return dict(zip(lines[0].split("\t"), lines[1].split("\t")))
