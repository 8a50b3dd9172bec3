"""Dataset ingestion, run configuration, image output and the command line."""
import logging
import time

import numpy as np
import pytest
from PIL import Image

from ladagan import cli
from ladagan.config import PRESETS, RunConfig, parse_lines
from ladagan.data import (DatasetError, bytes_to_unit, iter_batches, load_cifar_binary, load_dataset,
                          load_image_dir, synth_shapes, unit_to_bytes)
from ladagan.imaging import tile
from ladagan.models import ConfigError, GeneratorConfig

TINY = ["--set", "preset=tiny"]


def _cifar_record(label, r, g, b):
    return bytes([label]) + bytes(r) + bytes(g) + bytes(b)


class TestCifar:
    def test_scaling_endpoints(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(_cifar_record(3, [0] * 1024, [0] * 1024, [0] * 1024)
                      + _cifar_record(1, [255] * 1024, [255] * 1024, [255] * 1024))
        x = load_cifar_binary(p)
        assert x.shape == (2, 3, 32, 32) and x.dtype == np.float32
        assert np.all(x[0] == -1.0) and np.all(x[1] == 1.0)

    def test_channel_planes_and_row_major(self, tmp_path):
        ramp = [i % 256 for i in range(1024)]
        p = tmp_path / "x.bin"
        p.write_bytes(_cifar_record(0, ramp, [10] * 1024, [20] * 1024)
                      + _cifar_record(9, [30] * 1024, ramp[::-1], [40] * 1024))
        x = load_cifar_binary(p)
        assert x[0, 0, 0, 5] == pytest.approx(2 * 5 / 255 - 1)
        assert x[0, 0, 1, 0] == pytest.approx(2 * 32 / 255 - 1)
        assert np.all(x[0, 1] == np.float32(2 * 10 / 255 - 1)) and np.all(x[0, 2] == np.float32(2 * 20 / 255 - 1))
        assert x[1, 1, 0, 0] == pytest.approx(2 * ramp[-1] / 255 - 1)

    def test_bad_size_reports_offset(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(bytes(3073 + 10))
        with pytest.raises(DatasetError, match="3073"):
            load_cifar_binary(p)

    def test_byte_mapping_round_trip(self):
        b = np.arange(256, dtype=np.uint8)
        assert np.array_equal(unit_to_bytes(bytes_to_unit(b)), b)
        assert unit_to_bytes(np.array([-5.0, 5.0])).tolist() == [0, 255]


def _png(path, w, h, fill=None):
    arr = np.zeros((h, w, 3), np.uint8) if fill is None else fill
    Image.fromarray(arr).save(path)


class TestImageDir:
    def test_single_png(self, tmp_path):
        _png(tmp_path / "a.png", 32, 32)
        x = load_image_dir(tmp_path, 32)
        assert x.shape == (1, 3, 32, 32) and np.all(x == -1.0)

    def test_crop_then_resize(self, tmp_path):
        arr = np.zeros((48, 64, 3), np.uint8)
        arr[:, 8:56] = 255  # exactly the 48x48 center square is white
        _png(tmp_path / "wide.png", 64, 48, arr)
        x = load_image_dir(tmp_path, 32)
        assert x.shape == (1, 3, 32, 32) and np.all(x == 1.0)

    def test_lexicographic_order(self, tmp_path):
        for name, v in (("b.png", 200), ("a.png", 100), ("c.png", 0)):
            _png(tmp_path / name, 4, 4, np.full((4, 4, 3), v, np.uint8))
        x = load_image_dir(tmp_path, 4)
        assert [float(unit_to_bytes(x[i, 0, 0, 0])) for i in range(3)] == [100, 200, 0]

    def test_empty_dir(self, tmp_path):
        with pytest.raises(DatasetError):
            load_image_dir(tmp_path, 32)

    def test_undecodable_skipped_and_counted(self, tmp_path, caplog):
        _png(tmp_path / "ok.png", 8, 8)
        (tmp_path / "broken.png").write_bytes(b"not a png")
        with caplog.at_level(logging.WARNING):
            x, summary = load_image_dir(tmp_path, 8, return_summary=True)
        assert len(x) == 1 and summary.skipped == 1 and summary.skipped_files == ["broken.png"]
        assert "broken.png" in caplog.text

    def test_all_broken(self, tmp_path):
        (tmp_path / "broken.png").write_bytes(b"nope")
        with pytest.raises(DatasetError):
            load_image_dir(tmp_path, 8)


class TestSynthShapes:
    def test_deterministic_and_in_range(self):
        a, b = synth_shapes(50, 32, 3), synth_shapes(50, 32, 3)
        assert a.tobytes() == b.tobytes()
        assert a.shape == (50, 3, 32, 32) and a.min() >= -1 and a.max() <= 1
        assert not np.array_equal(a, synth_shapes(50, 32, 4))

    def test_one_rectangle_per_image(self):
        x = synth_shapes(20, 16, 0)
        for img in x:
            colors = np.unique(img.reshape(3, -1).T, axis=0)
            assert len(colors) <= 2

    def test_generation_time(self):
        t0 = time.perf_counter()
        synth_shapes(1000, 32, 0)
        assert time.perf_counter() - t0 < 5.0

    def test_count(self):
        with pytest.raises(ValueError):
            synth_shapes(0)

    def test_batches(self):
        assert [len(b) for b in iter_batches(np.zeros((10, 1)), 4)] == [4, 4, 2]

    def test_load_dataset_dispatch(self):
        assert load_dataset("synthetic-shapes", resolution=8, count=3).shape == (3, 3, 8, 8)
        with pytest.raises(DatasetError):
            load_dataset("lmdb")


class TestRunConfig:
    def test_defaults(self):
        c = RunConfig()
        assert c.gen_config() == GeneratorConfig()
        assert c.train_config().g_lr == 2e-4 and c.train_config().r1_gamma == 1.0

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="gen.haeds"):
            RunConfig({"gen.haeds": "4"})

    def test_parse_lines(self):
        vals = parse_lines(["# comment", "", "gen.heads = 2   # trailing", "train.steps=5"])
        assert vals == {"gen.heads": "2", "train.steps": "5"}
        with pytest.raises(ConfigError):
            parse_lines(["no equals sign"])

    def test_types_and_presets(self):
        c = RunConfig({"preset": "tiny", "train.bcr": "false", "gen.stages": "1x16,4x8"})
        assert c.train_config().bcr is False
        assert c.gen_config().stages == ((1, 16), (4, 8))
        assert c.disc_config().resolution == c.gen_config().resolution == 4
        with pytest.raises(ConfigError):
            RunConfig({"train.steps": "many"})
        with pytest.raises(ConfigError):
            RunConfig({"preset": "huge"})

    def test_dumps_round_trip(self, tmp_path):
        c = RunConfig({"preset": "desk", "seed": "7", "train.augment": "color"})
        path = c.write(str(tmp_path))
        again = RunConfig.load(path)
        assert again.dumps() == c.dumps()
        assert again.gen_config() == c.gen_config() and again.train_config() == c.train_config()

    def test_overrides_win_over_file(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("train.steps = 10\n")
        assert RunConfig.load(str(p), ["train.steps=3"]).train_config().steps == 3

    def test_presets_are_valid(self):
        for name in PRESETS:
            c = RunConfig({"preset": name})
            c.gen_config(), c.disc_config(), c.train_config()


class TestImaging:
    def test_grid_gutters(self):
        imgs = np.full((64, 3, 4, 4), 255, np.uint8)
        g = tile(imgs, cols=8)
        assert g.shape == (8 * 4 + 7 * 2, 8 * 4 + 7 * 2, 3)
        assert np.all(g[4:6] == 0) and np.all(g[:4, :4] == 255)


class TestCli:
    def _train(self, tmp_path, *extra):
        out = tmp_path / "run"
        code = cli.main(["train", *TINY, "--set", "train.steps=4", "--set", "train.sample_every=2",
                         "--set", "train.ckpt_every=2", "--set", "data.count=16", "--out-dir", str(out), *extra])
        return code, out

    def test_train_writes_run_dir(self, tmp_path):
        code, out = self._train(tmp_path)
        assert code == 0
        assert (out / "config.txt").exists() and (out / "metrics.csv").exists()
        assert (out / "checkpoints" / "final.lada").exists() and (out / "checkpoints" / "step000002.lada").exists()
        assert sorted(p.name for p in (out / "samples").iterdir()) == ["step000000.png", "step000002.png",
                                                                       "step000004.png"]
        assert len((out / "frechet.csv").read_text().splitlines()) == 4
        assert len((out / "metrics.csv").read_text().splitlines()) == 5

    def test_resume_continues(self, tmp_path):
        _, out = self._train(tmp_path)
        code = cli.main(["train", "--config", str(out / "config.txt"), "--set", "train.steps=6",
                         "--out-dir", str(out), "--resume", str(out / "checkpoints" / "final.lada")])
        assert code == 0
        rows = (out / "metrics.csv").read_text().splitlines()
        assert rows[-1].startswith("6,")

    def test_sample_is_byte_identical(self, tmp_path):
        _, out = self._train(tmp_path)
        ck = str(out / "checkpoints" / "final.lada")
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert cli.main(["sample", *TINY, "--checkpoint", ck, "--seed", "7", "--out", str(a)]) == 0
        assert cli.main(["sample", *TINY, "--checkpoint", ck, "--seed", "7", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert Image.open(a).size == (8 * 4 + 14, 8 * 4 + 14)

    def test_interpolate_and_attn_maps(self, tmp_path):
        _, out = self._train(tmp_path)
        ck = str(out / "checkpoints" / "final.lada")
        assert cli.main(["interpolate", *TINY, "--checkpoint", ck, "--steps", "3",
                         "--out", str(tmp_path / "i.png")]) == 0
        maps = tmp_path / "maps"
        assert cli.main(["attn-maps", *TINY, "--checkpoint", ck, "--out-dir", str(maps)]) == 0
        names = sorted(p.name for p in maps.iterdir())
        assert names == ["stage0_head0.png", "stage0_head1.png", "stage1_head0.png", "stage1_head1.png"]
        m = np.asarray(Image.open(maps / "stage1_head0.png"))
        assert m.max() == 255

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert cli.main(["sample", *TINY, "--checkpoint", str(tmp_path / "none.lada")]) == 2
        assert "checkpoint not found" in capsys.readouterr().err

    def test_bad_config_key(self, capsys):
        assert cli.main(["flops", "--set", "gen.haeds=4"]) == 2
        assert "gen.haeds" in capsys.readouterr().err

    def test_dataset_error(self, tmp_path, capsys):
        code = cli.main(["train", *TINY, "--set", "data.format=image-dir", "--set", f"data.path={tmp_path}",
                         "--out-dir", str(tmp_path / "r")])
        assert code == 2 and "error" in capsys.readouterr().err

    def test_flops_default_in_band(self, capsys):
        assert cli.main(["flops"]) == 0
        out = capsys.readouterr().out
        gen_total = next(line for line in out.splitlines() if line.startswith("total"))
        total = int(gen_total.split()[-1].replace(",", ""))
        assert 0.4e9 <= total <= 1.0e9

    def test_gradcheck_command(self, capsys):
        assert cli.main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "worst offender" in out and "FAIL" not in out

    def test_bench_command(self, tmp_path):
        assert cli.main(["bench", "--n", "64", "128", "--d", "16", "--batch", "2",
                         "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "bench.csv").read_text().startswith("mechanism,N,d,median_us,flops")
