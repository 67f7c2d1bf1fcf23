"""Harness: configs, checkpoints, training loops, transfer, evaluation,
comparison, and the CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from evistorm.cli import main as cli_main
from evistorm.errors import (
    CheckpointError,
    ConfigError,
    SplitMismatchError,
    TrainingDivergedError,
    TransferError,
)
from evistorm.evalkit import CostProfile
from evistorm.harness.checkpoint import load_checkpoint, save_checkpoint
from evistorm.harness.config import DataConfig, ExperimentConfig, TrainingConfig
from evistorm.harness.evaluation import compare, compute_report, evaluate
from evistorm.harness.training import (
    build_dataset,
    pretrain_transfer,
    train,
    train_one_model,
)
from evistorm.model import ModelConfig, NowcastModel
from evistorm.numerics import no_grad
from evistorm.stormdata import SyntheticStormConfig


def tiny_data(seed=5, n_events=12) -> DataConfig:
    return DataConfig(
        synthetic=SyntheticStormConfig(
            n_events=n_events, height=12, width=12, n_frames=25,
            cells_per_event=(1, 2), speed_range=(0.2, 0.8), seed=seed,
        ),
        window_stride=25,
        split_seed=1,
    )


def tiny_model(head="deterministic", dropout=0.1) -> ModelConfig:
    return ModelConfig(d_model=8, n_blocks=1, d_k=4, ffn_width=16, in_steps=13,
                       out_steps=12, frame_h=12, frame_w=12, head=head,
                       dropout_rate=dropout)


def tiny_training(**overrides) -> TrainingConfig:
    base = dict(epochs=1, batch_size=4, seed=3, n_members=2, n_passes=3)
    base.update(overrides)
    return TrainingConfig(**base)


def tiny_experiment(variant, out_dir, **train_overrides) -> ExperimentConfig:
    return ExperimentConfig(
        variant=variant, data=tiny_data(), model=tiny_model(),
        training=tiny_training(**train_overrides), out_dir=str(out_dir),
    )


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "run")
        path = tmp_path / "config.json"
        cfg.save(path)
        loaded = ExperimentConfig.load(path)
        assert loaded.to_dict() == cfg.to_dict()

    def test_unknown_variant_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_experiment("bagging", tmp_path)

    def test_data_section_exclusive(self):
        with pytest.raises(ConfigError):
            DataConfig(synthetic=None, ingest_path=None)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path, rng):
        model = NowcastModel(tiny_model(), seed=4)
        path = tmp_path / "m.ckpt"
        state = {"rng": "state"}
        save_checkpoint(path, model.state_arrays(), model.config, step=7, rng_state=state)
        loaded = load_checkpoint(path)
        assert loaded.step == 7
        assert loaded.rng_state == state
        assert set(loaded.arrays) == set(model.params)
        for name, arr in loaded.arrays.items():
            assert arr.tobytes() == model.params[name].data.tobytes()
        rebuilt = loaded.build_model()
        x = rng.random((13, 12, 12))
        assert np.array_equal(rebuilt.predict_frames(x), model.predict_frames(x))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"whatever")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none.ckpt")


class TestTraining:
    def test_zero_epochs_keeps_initialization(self, tmp_path):
        cfg = tiny_experiment("mc-dropout", tmp_path / "run", epochs=0)
        train(cfg)
        loaded = load_checkpoint(tmp_path / "run" / "model.ckpt")
        init_seed, _ = np.random.SeedSequence(cfg.training.seed).spawn(2)
        reference = NowcastModel(loaded.model_config, seed=init_seed)
        for name, arr in loaded.arrays.items():
            assert arr.tobytes() == reference.params[name].data.tobytes()

    def test_same_seed_reproduces_final_loss(self, tmp_path):
        losses = []
        for run in range(2):
            cfg = tiny_experiment("edl", tmp_path / f"run{run}", epochs=2)
            result = train(cfg)
            losses.append(result.histories["model"].train_loss[-1])
        assert losses[0] == losses[1]

    def test_loss_curves_emitted(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "run", epochs=2)
        train(cfg)
        lines = (tmp_path / "run" / "losses.tsv").read_text().strip().splitlines()
        assert lines[0] == "model\tepoch\ttrain_loss\tval_metric"
        assert len(lines) == 3

    def test_resolved_config_written(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "run", epochs=0)
        train(cfg)
        loaded = ExperimentConfig.load(tmp_path / "run" / "config.json")
        assert loaded.to_dict() == cfg.to_dict()

    def test_ensemble_writes_member_checkpoints(self, tmp_path):
        cfg = tiny_experiment("ensemble", tmp_path / "run", epochs=1, n_members=3)
        result = train(cfg)
        assert len(result.checkpoint_paths) == 3
        assert (tmp_path / "run" / "ensemble-manifest.txt").exists()

    def test_divergence_aborts_with_dump(self, tmp_path):
        cfg = tiny_experiment("mc-dropout", tmp_path / "run", epochs=1)
        dataset = build_dataset(cfg.data)
        model = NowcastModel(tiny_model(), seed=0)
        model.params["embed.w"].data = np.full((1, 8), 1e308)  # force overflow
        dump = tmp_path / "run" / "divergence.json"
        dump.parent.mkdir(parents=True)
        with pytest.raises(TrainingDivergedError):
            train_one_model(model, dataset, cfg.training, "mse",
                            np.random.SeedSequence(0), dump_path=dump)
        payload = json.loads(dump.read_text())
        assert "parameter_norms" in payload and "batch_sample_indices" in payload


class TestTransfer:
    def _pretrained(self, tmp_path):
        cfg = tiny_experiment("mc-dropout", tmp_path / "pre", epochs=1)
        train(cfg)
        return load_checkpoint(tmp_path / "pre" / "model.ckpt")

    def test_backbone_copied_bitwise(self, tmp_path):
        ckpt = self._pretrained(tmp_path)
        model = pretrain_transfer(ckpt, tiny_model(head="evidential"), seed=9)
        for name, arr in ckpt.arrays.items():
            if name.startswith("decode."):
                continue
            assert model.params[name].data.tobytes() == arr.tobytes()

    def test_gamma_forward_matches_pretrained(self, tmp_path, rng):
        ckpt = self._pretrained(tmp_path)
        det = ckpt.build_model()
        model = pretrain_transfer(ckpt, tiny_model(head="evidential"), seed=9)
        x = rng.random((13, 12, 12))
        with no_grad():
            det_out = det.forward(x).data
            gamma = model.forward(x).data[0]
        assert np.allclose(gamma, det_out, rtol=0, atol=1e-10)

    def test_incompatible_config_lists_mismatches(self, tmp_path):
        ckpt = self._pretrained(tmp_path)
        wrong = ModelConfig(d_model=16, n_blocks=1, d_k=4, ffn_width=16,
                            in_steps=13, out_steps=12, frame_h=12, frame_w=12,
                            head="evidential")
        with pytest.raises(TransferError) as err:
            pretrain_transfer(ckpt, wrong, seed=0)
        assert "d_model" in str(err.value)

    def test_rejects_wrong_head_direction(self, tmp_path):
        ckpt = self._pretrained(tmp_path)
        with pytest.raises(TransferError):
            pretrain_transfer(ckpt, tiny_model(head="deterministic"), seed=0)


class TestEvaluation:
    def test_oracle_injection_gives_perfect_scores(self, rng):
        truths = rng.random((4, 12, 6, 6))
        cost = CostProfile(total_flops=10, passes=1, wall_mean_s=0.0,
                           wall_sd_s=0.0, parameter_count=1, n_repeats=1)
        dist = {"kind": "gaussian", "mean": truths, "variance": np.full(truths.shape, 1e-4)}
        report = compute_report("edl", truths.copy(), truths, truths.copy(),
                                dist, cost, split_hash="x")
        assert np.array_equal(report.mse.values, np.zeros(12))
        for score in report.csi_report.scores:
            if score.defined:
                assert score.csi == 1.0

    def test_report_files_and_maps(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "run", epochs=1)
        train(cfg)
        evaluate(cfg, tmp_path / "report", profile_repeats=2)
        for name in ("csi.tsv", "mse_by_lead.tsv", "reliability.tsv",
                     "correlation.tsv", "cost.tsv", "timing.tsv",
                     "summary.json", "config.json"):
            assert (tmp_path / "report" / name).exists()
        for lead in (2, 4, 6, 8):
            assert (tmp_path / "report" / "maps" / f"lead-{lead:02d}.tsv").exists()

    def test_report_determinism_excluding_timing(self, tmp_path):
        cfg = tiny_experiment("mc-dropout", tmp_path / "run", epochs=1)
        train(cfg)
        evaluate(cfg, tmp_path / "r1", profile_repeats=2)
        evaluate(cfg, tmp_path / "r2", profile_repeats=2)
        names = [p.relative_to(tmp_path / "r1") for p in (tmp_path / "r1").rglob("*")
                 if p.is_file() and p.name != "timing.tsv"]
        assert names
        for rel in names:
            a = (tmp_path / "r1" / rel).read_bytes()
            b = (tmp_path / "r2" / rel).read_bytes()
            assert a == b, f"{rel} differs between identical runs"

    def test_compare_with_itself_is_reflexive(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "run", epochs=1)
        train(cfg)
        evaluate(cfg, tmp_path / "report", profile_repeats=2)
        compare([tmp_path / "report", tmp_path / "report"], tmp_path / "cmp")
        table = (tmp_path / "cmp" / "csi_table.tsv").read_text().strip().splitlines()
        assert len(table) == 3
        assert table[1] == table[2]

    def test_compare_refuses_split_mismatch(self, tmp_path):
        cfg1 = tiny_experiment("edl", tmp_path / "a", epochs=1)
        train(cfg1)
        evaluate(cfg1, tmp_path / "ra", profile_repeats=2)
        cfg2 = tiny_experiment("edl", tmp_path / "b", epochs=1)
        cfg2.data.split_seed = 99
        train(cfg2)
        evaluate(cfg2, tmp_path / "rb", profile_repeats=2)
        with pytest.raises(SplitMismatchError):
            compare([tmp_path / "ra", tmp_path / "rb"], tmp_path / "cmp")

    def test_missing_checkpoint_errors(self, tmp_path):
        cfg = tiny_experiment("edl", tmp_path / "void", epochs=1)
        with pytest.raises(CheckpointError):
            evaluate(cfg, tmp_path / "report")


class TestCLI:
    def _write_config(self, tmp_path, variant="edl") -> Path:
        cfg = tiny_experiment(variant, tmp_path / "run")
        path = tmp_path / "config.json"
        cfg.save(path)
        return path

    def test_full_cli_cycle(self, tmp_path, capsys):
        config = self._write_config(tmp_path)
        assert cli_main(["generate-data", "--config", str(config),
                         "--out", str(tmp_path / "data")]) == 0
        assert (tmp_path / "data" / "events.evst").exists()
        assert (tmp_path / "data" / "manifest.txt").exists()
        assert cli_main(["train", "--config", str(config)]) == 0
        assert cli_main(["evaluate", "--config", str(config),
                         "--out", str(tmp_path / "report"), "--repeats", "2"]) == 0
        assert cli_main(["compare", "--reports", str(tmp_path / "report"),
                         str(tmp_path / "report"), "--out", str(tmp_path / "cmp")]) == 0
        assert cli_main(["figures", "--comparison", str(tmp_path / "cmp"),
                         "--report", str(tmp_path / "report"),
                         "--out", str(tmp_path / "figs")]) == 0
        for name in ("mse_vs_lead.svg", "cost.svg", "uncertainty.svg", "error_maps.svg"):
            assert (tmp_path / "figs" / name).exists()

    def test_variant_and_seed_overrides(self, tmp_path):
        config = self._write_config(tmp_path)
        out = tmp_path / "mc"
        assert cli_main(["train", "--config", str(config), "--variant", "mc-dropout",
                         "--seed", "11", "--out", str(out)]) == 0
        resolved = ExperimentConfig.load(out / "config.json")
        assert resolved.variant == "mc-dropout"
        assert resolved.training.seed == 11

    def test_config_error_exit_code(self, tmp_path):
        missing = tmp_path / "missing.json"
        assert cli_main(["train", "--config", str(missing)]) == 2

    def test_checkpoint_error_exit_code(self, tmp_path):
        config = self._write_config(tmp_path)
        assert cli_main(["evaluate", "--config", str(config),
                         "--out", str(tmp_path / "r")]) == 4

    def test_split_mismatch_exit_code(self, tmp_path):
        config = self._write_config(tmp_path)
        cli_main(["train", "--config", str(config)])
        cli_main(["evaluate", "--config", str(config),
                  "--out", str(tmp_path / "ra"), "--repeats", "2"])
        other = tiny_experiment("edl", tmp_path / "other")
        other.data.split_seed = 123
        other_path = tmp_path / "other.json"
        other.save(other_path)
        cli_main(["train", "--config", str(other_path)])
        cli_main(["evaluate", "--config", str(other_path),
                  "--out", str(tmp_path / "rb"), "--repeats", "2"])
        assert cli_main(["compare", "--reports", str(tmp_path / "ra"),
                         str(tmp_path / "rb"), "--out", str(tmp_path / "cmp")]) == 6

    def test_module_entry_point(self, tmp_path):
        import subprocess
        import sys
        config = self._write_config(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "evistorm", "generate-data",
             "--config", str(config), "--out", str(tmp_path / "d2")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "d2" / "events.evst").exists()
