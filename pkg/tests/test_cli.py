import numpy as np
import pytest

from esngrad.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_SHAPE, main, read_config, ConfigError
from esngrad.dataio import FrameDataset, load_frames, load_model, save_frames, save_model
from esngrad.reservoir import EsnConfig, init_network


@pytest.fixture
def data(tmp_path):
    assert main(["gen", "--length", "1600", "--split", "1200,200,200", "--out", str(tmp_path / "d.txt")]) == 0
    return tmp_path


def train_args(tmp, *extra):
    return ["train", "--train", str(tmp / "d.train.txt"), "--valid", str(tmp / "d.valid.txt"),
            "--hidden", "30", "--density", "0.1", "--epochs", "2",
            "--model", str(tmp / "m.esn"), "--report", str(tmp / "r.tsv"), *extra]


class TestGen:
    def test_default_shapes(self, tmp_path):
        out = tmp_path / "g.txt"
        assert main(["gen", "--classes", "5", "--dim", "10", "--length", "20000", "--out", str(out)]) == 0
        ds = load_frames(out)
        assert ds.frames.shape == (10, 20000) and ds.num_classes == 5

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            main(["gen", "--seed", "7", "--length", "300", "--out", str(tmp_path / f"{name}.txt")])
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_bad_flag(self, capsys):
        assert main(["gen", "--classes", "many"]) == EXIT_CONFIG
        assert "usage" in capsys.readouterr().err

    def test_output_dir_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ESNGRAD_OUTPUT_DIR", str(tmp_path / "out"))
        assert main(["gen", "--length", "100", "--out", "x.txt"]) == 0
        assert (tmp_path / "out" / "x.txt").exists()


class TestTrain:
    def test_fixed_keeps_initial_weights(self, data):
        assert main(train_args(data, "--mode", "fixed", "--seed", "4")) == 0
        m = load_model(data / "m.esn")
        init = init_network(EsnConfig(input_dim=10, hidden_dim=30, output_dim=5, density=0.1, seed=4))
        assert np.array_equal(m.W, init.W) and np.array_equal(m.W_rec.values, init.W_rec.values)

    def test_report_format(self, data):
        assert main(train_args(data, "--mode", "learn-w-wrec", "--depth", "2")) == 0
        lines = (data / "r.tsv").read_text().splitlines()
        assert lines[0].split("\t")[0] == "epoch" and len(lines) == 3
        assert all(len(l.split("\t")) == 10 for l in lines)

    def test_config_file_and_override(self, data, capsys):
        cfg = data / "run.cfg"
        cfg.write_text("# comment\nmode = fixed\nhidden_dim = 12\nepochs=1\n")
        assert main(train_args(data, "--config", str(cfg), "--hidden", "20")) == 0
        err = capsys.readouterr().err
        assert "# mode=fixed" in err and "# hidden_dim=20" in err
        assert load_model(data / "m.esn").hidden_dim == 20

    def test_unknown_key(self, data):
        cfg = data / "run.cfg"
        cfg.write_text("hidden = 12\n")
        with pytest.raises(ConfigError, match="unknown key"):
            read_config(cfg)
        assert main(train_args(data, "--config", str(cfg))) == EXIT_CONFIG

    def test_missing_data(self, tmp_path):
        assert main(["train", "--train", str(tmp_path / "nope.txt")]) == EXIT_CONFIG

    def test_invalid_hyperparameter(self, data):
        assert main(train_args(data, "--lambda", "5")) == EXIT_CONFIG

    @pytest.mark.filterwarnings("ignore:design has:RuntimeWarning")
    def test_numeric_failure(self, data):
        # fewer frames than features and no ridge term: the gram matrix is singular
        tiny = FrameDataset(np.random.default_rng(0).standard_normal((10, 60)), np.arange(60) % 5, 5)
        save_frames(tiny, data / "tiny.txt")
        code = main(["train", "--train", str(data / "tiny.txt"), "--mu", "0", "--washout", "40",
                     "--hidden", "50", "--epochs", "1", "--mode", "fixed",
                     "--model", str(data / "m.esn"), "--report", str(data / "r.tsv")])
        assert code == EXIT_NUMERIC

    def test_deterministic(self, data):
        outs = []
        for k in range(2):
            args = train_args(data, "--mode", "learn-w-wrec", "--threads", "1")
            args[args.index("--model") + 1] = str(data / f"m{k}.esn")
            args[args.index("--report") + 1] = str(data / f"r{k}.tsv")
            assert main(args) == 0
            outs.append(((data / f"m{k}.esn").read_bytes(), (data / f"r{k}.tsv").read_bytes()))
        assert outs[0] == outs[1]


class TestEval:
    def test_perfect_toy_model(self, tmp_path, capsys):
        # readout reads the raw input, which is the one-hot label itself
        labels = np.arange(40) % 4
        ds = FrameDataset(np.eye(4)[:, labels], labels, 4)
        save_frames(ds, tmp_path / "d.txt")
        p = init_network(EsnConfig(input_dim=4, hidden_dim=8, output_dim=4, density=0.5))
        U = np.vstack([np.zeros((8, 4)), np.eye(4)])
        save_model(p.replace(U=U), tmp_path / "m.esn")
        assert main(["eval", "--model", str(tmp_path / "m.esn"), "--data", str(tmp_path / "d.txt")]) == 0
        assert "frame_error\t0.000000" in capsys.readouterr().out

    def test_random_readout_is_chance(self, tmp_path, capsys):
        main(["gen", "--length", "4000", "--seed", "1", "--out", str(tmp_path / "d.txt")])
        p = init_network(EsnConfig(seed=1))
        save_model(p.replace(U=np.random.default_rng(1).standard_normal((110, 5))), tmp_path / "m.esn")
        main(["eval", "--model", str(tmp_path / "m.esn"), "--data", str(tmp_path / "d.txt")])
        err = float(capsys.readouterr().out.split("\t")[-1])
        assert abs(err - 0.8) < 0.1

    def test_dimension_mismatch(self, tmp_path):
        main(["gen", "--length", "100", "--dim", "4", "--out", str(tmp_path / "d.txt")])
        save_model(init_network(EsnConfig()), tmp_path / "m.esn")
        assert main(["eval", "--model", str(tmp_path / "m.esn"), "--data", str(tmp_path / "d.txt")]) == EXIT_SHAPE


class TestGradcheck:
    def test_default_grid_passes(self, capsys):
        assert main(["gradcheck"]) == EXIT_OK
        assert "60/60" in capsys.readouterr().out

    def test_large_epsilon_fails(self, capsys):
        assert main(["gradcheck", "--epsilon", "1e-2"]) != EXIT_OK
        assert "worst" in capsys.readouterr().out

    def test_depth_subset(self, capsys):
        assert main(["gradcheck", "--depth", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "20/20" in out and "n=2" not in out
