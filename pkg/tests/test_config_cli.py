import os

import numpy as np
import pytest

import mmhnet.storage as storage
from mmhnet.cli import build_parser, main
from mmhnet.config import ConfigError, RunConfig
from mmhnet.model import MixerKind
from mmhnet.routing import SimilarityMetric


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg["model.preset"] == "tiny"
        assert cfg["flow.steps"] == 25
        assert cfg["flow.cfg_scale"] == 4.0
        assert cfg["routing.tau_temporal"] == 0.5
        assert cfg["train.lr"] == 1e-4

    def test_parse_line_format(self):
        cfg = RunConfig.parse(
            "# comment line\n"
            "model.preset = small\n"
            "flow.cfg_scale = 2.5   # trailing comment\n"
            "\n"
            "model.hierarchical = false\n")
        assert cfg["model.preset"] == "small"
        assert cfg["flow.cfg_scale"] == 2.5
        assert cfg["model.hierarchical"] is False

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("model.depth = 3\n")
        with pytest.raises(ConfigError):
            RunConfig().set("nope", 1)

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("model.preset small\n")
        with pytest.raises(ConfigError):
            RunConfig.parse("preset = small\n")

    def test_bad_boolean_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("model.hierarchical = maybe\n")

    def test_serialize_roundtrip(self):
        cfg = RunConfig({"model.preset": "small", "train.iters": 7,
                         "routing.metric": "dot"})
        back = RunConfig.parse(cfg.serialize())
        assert back.values == cfg.values

    def test_model_config_mapping(self):
        cfg = RunConfig.parse(
            "model.preset = tiny\n"
            "model.mixer = attention\n"
            "routing.metric = euclidean\n"
            "model.d_model = 32\n"
            "block.local_conv = false\n")
        mc = cfg.model_config()
        assert mc.mixer is MixerKind.ATTENTION_NO_POSEMB
        assert mc.metric is SimilarityMetric.EUCLIDEAN
        assert mc.d_model == 32
        assert mc.local_conv is False

    def test_bad_preset_and_mixer(self):
        cfg = RunConfig({"model.preset": "huge"})
        with pytest.raises(ConfigError):
            cfg.model_config()
        cfg2 = RunConfig({"model.mixer": "transformer"})
        with pytest.raises(ConfigError):
            cfg2.model_config()

    def test_test_lengths(self):
        cfg = RunConfig({"data.test_lengths": "64, 128,256"})
        assert cfg.test_lengths() == [64, 128, 256]


class TestStorage:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=7),
                  "one": np.array([3.25])}
        d = str(tmp_path / "bundle")
        storage.save_arrays(d, arrays)
        back = storage.load_arrays(d)
        assert set(back) == set(arrays)
        for k in arrays:
            assert np.array_equal(back[k], np.asarray(arrays[k], float))

    def test_manifest_format(self, tmp_path):
        d = str(tmp_path / "bundle")
        storage.save_arrays(d, {"x": np.zeros((2, 3))})
        with open(os.path.join(d, "manifest.txt")) as f:
            name, shape, offset = f.read().strip().split("\t")
        assert (name, shape, offset) == ("x", "2,3", "0")
        assert os.path.getsize(os.path.join(d, "data.bin")) == 6 * 8

    def test_no_temp_files_left(self, tmp_path):
        d = str(tmp_path / "bundle")
        storage.save_arrays(d, {"x": np.zeros(4)})
        assert not [f for f in os.listdir(d) if f.startswith(".tmp-")]


def fast_config(tmp_path, **over):
    cfg = {
        "model.d_model": 32, "model.d_state": 4,
        "train.iters": 3, "train.batch": 1,
        "data.train_size": 2, "data.test_size": 2,
        "data.train_length": 16, "data.test_lengths": "32",
        "data.n_events": 1, "eval.chunk_len": 16,
        "flow.steps": 2,
    }
    cfg.update(over)
    path = str(tmp_path / "config.txt")
    text = "".join(f"{k} = {v}\n" for k, v in cfg.items())
    with open(path, "w") as f:
        f.write(text)
    return path


class TestCli:
    def test_parser_exposes_full_surface(self):
        p = build_parser()
        for argv in (["data", "gen"], ["train"], ["generate", "ck"],
                     ["eval", "ck"], ["ablate", "cfg"], ["bench"]):
            args = p.parse_args(argv + ["--config", "c", "--seed", "1",
                                        "--out", "o", "--force"])
            assert args.config == "c" and args.seed == 1
            assert args.out == "o" and args.force is True

    def test_data_gen_refuses_nonempty_without_force(self, tmp_path):
        cfg = fast_config(tmp_path)
        out = str(tmp_path / "data")
        os.makedirs(out)
        with open(os.path.join(out, "existing"), "w") as f:
            f.write("x")
        with pytest.raises(SystemExit):
            main(["data", "gen", "--config", cfg, "--out", out])
        main(["data", "gen", "--config", cfg, "--out", out, "--force"])
        assert os.path.exists(os.path.join(out, "manifest.csv"))
        assert os.path.exists(os.path.join(out, "train-00000", "manifest.txt"))

    def test_generate_missing_checkpoint(self, tmp_path):
        cfg = fast_config(tmp_path)
        with pytest.raises(SystemExit):
            main(["generate", str(tmp_path / "nope"), "--config", cfg])

    def test_train_generate_eval_pipeline(self, tmp_path, capsys):
        cfg = fast_config(tmp_path)
        run = str(tmp_path / "run")
        main(["train", "--config", cfg, "--out", run])
        ckpt = os.path.join(run, "checkpoint")
        assert os.path.isdir(ckpt)
        assert os.path.exists(os.path.join(run, "loss.csv"))
        assert os.path.exists(os.path.join(run, "config.txt"))

        gen_out = str(tmp_path / "gen")
        main(["generate", ckpt, "--config", cfg, "--out", gen_out,
              "--length", "16", "--steps", "2"])
        latent = storage.load_arrays(gen_out)["latent"]
        assert latent.shape == (16, 8)

        eval_out = str(tmp_path / "eval.csv")
        main(["eval", ckpt, "--config", cfg, "--out", eval_out, "--lengths", "32"])
        with open(eval_out) as f:
            header = f.readline().strip()
        assert header == "length,fd,kl,isc,ib_analog,desync_frames,val_loss"

    def test_bench_writes_csv(self, tmp_path):
        out = str(tmp_path / "bench.csv")
        main(["bench", "--kernel", "causal_scan", "--lengths", "64,128", "--out", out])
        with open(out) as f:
            lines = f.read().strip().splitlines()
        assert lines[0] == "kernel,length,median_seconds"
        assert len(lines) == 3

    def test_threads_env_var(self, monkeypatch):
        from mmhnet.cli import _threads
        monkeypatch.setenv("MMHNET_THREADS", "4")
        assert _threads() == 4
        monkeypatch.setenv("MMHNET_THREADS", "bogus")
        assert _threads() == 1

    def test_ablate_pilot_suite(self, tmp_path):
        cfg = fast_config(tmp_path)
        out = str(tmp_path / "ablate")
        main(["ablate", "pilot", "--config", cfg, "--out", out])
        with open(os.path.join(out, "ablation.csv")) as f:
            lines = f.read().strip().splitlines()
        assert lines[0] == "variant,length,fd,kl,isc,ib_analog,desync_frames,val_loss"
        assert lines[1].startswith("attention_no_posemb,32,")
