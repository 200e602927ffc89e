"""End-to-end command tests: tiny real runs, exit codes, file outputs."""

import json
from pathlib import Path

import numpy as np
import pytest

from twingan import data as data_mod
from twingan import metrics as metrics_mod
from twingan.cli import main
from twingan.engine import Tensor
from twingan.model import TwinGanModel

SIZE = 8


def base_cfg(out_dir, **overrides) -> dict:
    """Smallest trainable setup: 8px grayscale, depth 2, one critic layer."""
    cfg = {
        "synthetic_task": "invert",
        "output_dir": str(out_dir),
        "image_size": SIZE,
        "channels_u": 1,
        "channels_v": 1,
        "gen_depth": 2,
        "base_width": 2,
        "disc_features": [[2, 1]],
        "n_critic": 1,
        "batch_m": 1,
        "total_generator_steps": 1,
        "seed": 7,
        "log_every": 1,
    }
    cfg.update(overrides)
    return cfg


def write_cfg(path: Path, cfg: dict) -> Path:
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def synth_run(tmp_path_factory):
    """One completed 1-step training run on the synthetic invert task."""
    root = tmp_path_factory.mktemp("synth_run")
    out = root / "out"
    cfg_path = write_cfg(root / "cfg.json", base_cfg(out))
    assert main(["train", "--config", str(cfg_path)]) == 0
    return {"out": out, "ckpt": out / "ckpt-000001.bin", "cfg_path": cfg_path}


@pytest.fixture(scope="module")
def file_run(tmp_path_factory):
    """A training run over a 3-image-per-domain on-disk dataset."""
    root = tmp_path_factory.mktemp("file_run")
    gen = np.random.default_rng(99)
    for domain in ("u", "v"):
        for i in range(3):
            px = gen.integers(0, 256, (1, SIZE, SIZE), dtype=np.uint8)
            data_mod.write_image_u8(root / "data" / f"domain_{domain}" / f"{i}.png", px)
    out = root / "out"
    cfg = base_cfg(out, synthetic_task=None, data_root=str(root / "data"))
    cfg_path = write_cfg(root / "cfg.json", cfg)
    assert main(["train", "--config", str(cfg_path)]) == 0
    return {"out": out, "ckpt": out / "ckpt-000001.bin", "root": root}


class TestTrainCommand:
    def test_writes_final_checkpoint_grid_and_log(self, synth_run, capsys):
        out = synth_run["out"]
        assert [p.name for p in sorted(out.glob("ckpt-*.bin"))] == ["ckpt-000001.bin"]
        assert [p.name for p in sorted(out.glob("grid-*.png"))] == ["grid-000001.png"]
        lines = (out / "loss_log.tsv").read_text().splitlines()
        assert len(lines) == 2                     # n_critic + 1 history lines
        assert lines[0].split("\t")[1] == "critic"
        assert lines[1].split("\t")[1] == "gen"

    def test_checkpoint_every_saves_intermediates(self, tmp_path):
        out = tmp_path / "out"
        cfg = base_cfg(out, total_generator_steps=2, checkpoint_every=1)
        code = main(["train", "--config", str(write_cfg(tmp_path / "c.json", cfg))])
        assert code == 0
        assert [p.name for p in sorted(out.glob("ckpt-*.bin"))] == [
            "ckpt-000001.bin",
            "ckpt-000002.bin",
        ]
        assert len(list(out.glob("grid-*.png"))) == 2

    def test_deterministic_flag_accepted(self, tmp_path):
        cfg = base_cfg(tmp_path / "out")
        path = write_cfg(tmp_path / "c.json", cfg)
        assert main(["train", "--config", str(path), "--deterministic"]) == 0

    def test_seeded_runs_write_identical_bytes(self, tmp_path, monkeypatch):
        cfg = base_cfg("run", total_generator_steps=2)  # relative output dir
        results = []
        for name in ("a", "b"):
            workdir = tmp_path / name
            workdir.mkdir()
            monkeypatch.chdir(workdir)
            assert main(["train", "--config", str(write_cfg(workdir / "c.json", cfg))]) == 0
            results.append(
                (
                    (workdir / "run" / "ckpt-000002.bin").read_bytes(),
                    (workdir / "run" / "loss_log.tsv").read_text(),
                )
            )
        assert results[0][0] == results[1][0]
        assert results[0][1] == results[1][1]

    def test_negative_lambda_exits_2(self, tmp_path, capsys):
        cfg = base_cfg(tmp_path / "out", lambda_u=-5.0)
        code = main(["train", "--config", str(write_cfg(tmp_path / "c.json", cfg))])
        assert code == 2
        assert "lambda_u" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = base_cfg(tmp_path / "out")
        cfg["lambad_u"] = 100.0
        code = main(["train", "--config", str(write_cfg(tmp_path / "c.json", cfg))])
        assert code == 2
        assert "lambad_u" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["train", "--config", str(path)]) == 2
        assert "error" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "mutation",
        [
            {"image_size": 10},                    # not a power of two
            {"image_size": True},                  # bool is not an int
            {"gen_depth": 1},
            {"gen_depth": 5},                      # 2^5 > 8
            {"disc_features": []},
            {"disc_features": [[2, 3]]},           # illegal stride
            {"disc_features": [[2, 2], [2, 2], [2, 2]]},  # field 46 > 8
            {"dropout_rate": 1.0},
            {"clip_c": 0.0},
            {"n_critic": 0},
            {"lr": float("nan")},
            {"log_every": 0},
            {"checkpoint_every": -1},
            {"seed": -1},
            {"preset": "desk31"},
            {"synthetic_task": "mystery"},
            {"synthetic_task": "channel_swap"},    # needs 3 channels
            {"data_root": "/tmp/x"},               # both sources set
            {"synthetic_task": None},              # no source set
            {"output_dir": ""},
        ],
    )
    def test_fuzzed_configs_exit_2(self, tmp_path, capsys, mutation):
        """Structurally broken configs always fail cleanly with code 2."""
        cfg = base_cfg(tmp_path / "out")
        cfg.update(mutation)
        code = main(["train", "--config", str(write_cfg(tmp_path / "c.json", cfg))])
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")


class TestTranslateCommand:
    def make_inputs(self, d: Path, names, channels=1):
        gen = np.random.default_rng(5)
        d.mkdir(parents=True, exist_ok=True)
        for name in names:
            px = gen.integers(0, 256, (channels, SIZE, SIZE), dtype=np.uint8)
            data_mod.write_image_u8(d / name, px)

    def test_filenames_preserved(self, synth_run, tmp_path):
        src, dst = tmp_path / "in", tmp_path / "out"
        self.make_inputs(src, ["b.png", "a.png"])
        code = main(
            ["translate", "--ckpt", str(synth_run["ckpt"]), "--dir", "a2b",
             "--in", str(src), "--out", str(dst)]
        )
        assert code == 0
        assert sorted(p.name for p in dst.iterdir()) == ["a.png", "b.png"]
        for p in dst.iterdir():
            assert data_mod.read_image_u8(p).shape == (1, SIZE, SIZE)

    def test_no_noise_is_repeatable(self, synth_run, tmp_path):
        src = tmp_path / "in"
        self.make_inputs(src, ["x.png"])
        outs = []
        for name in ("o1", "o2"):
            code = main(
                ["translate", "--ckpt", str(synth_run["ckpt"]), "--dir", "b2a",
                 "--in", str(src), "--out", str(tmp_path / name), "--no-noise"]
            )
            assert code == 0
            outs.append((tmp_path / name / "x.png").read_bytes())
        assert outs[0] == outs[1]

    def test_channel_mismatch_exits_2(self, synth_run, tmp_path, capsys):
        src = tmp_path / "in"
        self.make_inputs(src, ["rgb.png"], channels=3)
        code = main(
            ["translate", "--ckpt", str(synth_run["ckpt"]), "--dir", "a2b",
             "--in", str(src), "--out", str(tmp_path / "out")]
        )
        assert code == 2
        assert "channels" in capsys.readouterr().err

    def test_missing_input_dir_exits_3(self, synth_run, tmp_path, capsys):
        code = main(
            ["translate", "--ckpt", str(synth_run["ckpt"]), "--dir", "a2b",
             "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "out")]
        )
        assert code == 3

    def test_missing_checkpoint_exits_3(self, tmp_path):
        src = tmp_path / "in"
        self.make_inputs(src, ["x.png"])
        code = main(
            ["translate", "--ckpt", str(tmp_path / "no.bin"), "--dir", "a2b",
             "--in", str(src), "--out", str(tmp_path / "out")]
        )
        assert code == 3


def write_label_image(path: Path, ids: np.ndarray) -> None:
    """Render a {0,1} label map as a black/white RGB PNG."""
    px = (ids.astype(np.uint8) * 255)[None].repeat(3, axis=0)
    data_mod.write_image_u8(path, px)


class TestEvalSegCommand:
    @pytest.fixture()
    def palette_path(self, tmp_path):
        p = tmp_path / "palette.txt"
        p.write_text("# two classes\n0 0 0 0\n1 255 255 255\n", encoding="utf-8")
        return p

    def test_perfect_match_scores_one(self, tmp_path, palette_path, capsys):
        gen = np.random.default_rng(3)
        for name in ("i0.png", "i1.png"):
            ids = gen.integers(0, 2, (6, 6))
            write_label_image(tmp_path / "pred" / name, ids)
            write_label_image(tmp_path / "gt" / name, ids)
        code = main(
            ["eval-seg", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
             "--palette", str(palette_path)]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["per_pixel_acc"] == 1.0
        assert report["per_class_acc"] == 1.0
        assert report["class_iou"] == 1.0
        assert report["n_images"] == 2

    def test_mean_matches_module_oracle(self, tmp_path, palette_path, capsys):
        gen = np.random.default_rng(11)
        scores = []
        for name in ("i0.png", "i1.png"):
            pred_ids = gen.integers(0, 2, (6, 6))
            gt_ids = gen.integers(0, 2, (6, 6))
            write_label_image(tmp_path / "pred" / name, pred_ids)
            write_label_image(tmp_path / "gt" / name, gt_ids)
            scores.append(
                metrics_mod.segmentation_scores(
                    metrics_mod.LabelMap(pred_ids, 2), metrics_mod.LabelMap(gt_ids, 2)
                )
            )
        expected = metrics_mod.average_scores(scores)
        code = main(
            ["eval-seg", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
             "--palette", str(palette_path)]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        for key in ("per_pixel_acc", "per_class_acc", "class_iou"):
            assert abs(report[key] - expected[key]) < 1e-12

    def test_filename_mismatch_exits_2(self, tmp_path, palette_path, capsys):
        write_label_image(tmp_path / "pred" / "only_pred.png", np.zeros((4, 4), int))
        write_label_image(tmp_path / "gt" / "only_gt.png", np.zeros((4, 4), int))
        code = main(
            ["eval-seg", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
             "--palette", str(palette_path)]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "only_pred.png" in err and "only_gt.png" in err

    def test_palette_gap_exits_2(self, tmp_path, capsys):
        pal = tmp_path / "palette.txt"
        pal.write_text("0 0 0 0\n2 255 255 255\n", encoding="utf-8")
        write_label_image(tmp_path / "pred" / "a.png", np.zeros((4, 4), int))
        write_label_image(tmp_path / "gt" / "a.png", np.zeros((4, 4), int))
        code = main(
            ["eval-seg", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
             "--palette", str(pal)]
        )
        assert code == 2
        assert "palette" in capsys.readouterr().err


class TestGridCommand:
    def test_grid_dimensions(self, file_run, tmp_path, capsys):
        out = tmp_path / "g.png"
        code = main(["grid", "--ckpt", str(file_run["ckpt"]), "--n", "2", "--out", str(out)])
        assert code == 0
        px = data_mod.read_image_u8(out)
        assert px.shape == (1, 4 * SIZE, 3 * SIZE)  # n rows per domain, 3 columns
        assert "4x3" in capsys.readouterr().out

    def test_oversized_n_clamps_with_warning(self, file_run, tmp_path, capsys):
        out = tmp_path / "g.png"
        code = main(["grid", "--ckpt", str(file_run["ckpt"]), "--n", "5", "--out", str(out)])
        assert code == 0
        captured = capsys.readouterr()
        assert "clamping" in captured.err
        assert data_mod.read_image_u8(out).shape == (1, 6 * SIZE, 3 * SIZE)

    def test_round_trip_column_with_involution_stub(self, file_run, tmp_path, monkeypatch):
        """With translators forced to negation, the round-trip column must
        reproduce the input column exactly, and the middle column must not."""

        def negate(self, x, noise_enabled=False, rng=None):
            a = x.data if isinstance(x, Tensor) else np.asarray(x)
            return Tensor(-a)

        monkeypatch.setattr(TwinGanModel, "translate_u2v", negate)
        monkeypatch.setattr(TwinGanModel, "translate_v2u", negate)
        out = tmp_path / "g.png"
        assert main(["grid", "--ckpt", str(file_run["ckpt"]), "--n", "1", "--out", str(out)]) == 0
        px = data_mod.read_image_u8(out)
        for row in range(2):
            tiles = [
                px[:, row * SIZE:(row + 1) * SIZE, col * SIZE:(col + 1) * SIZE]
                for col in range(3)
            ]
            np.testing.assert_array_equal(tiles[0], tiles[2])
            assert np.any(tiles[0] != tiles[1])

    def test_zero_n_exits_2(self, file_run, tmp_path):
        code = main(["grid", "--ckpt", str(file_run["ckpt"]), "--n", "0",
                     "--out", str(tmp_path / "g.png")])
        assert code == 2


class TestParser:
    def test_missing_required_argument_exits_2(self, capsys):
        assert main(["train"]) == 2
        capsys.readouterr()

    def test_unknown_command_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        capsys.readouterr()

    def test_bad_direction_choice_exits_2(self, capsys):
        code = main(["translate", "--ckpt", "x", "--dir", "sideways", "--in", "a", "--out", "b"])
        assert code == 2
        capsys.readouterr()
