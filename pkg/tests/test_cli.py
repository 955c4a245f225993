"""End-to-end command-line runs on small generated datasets."""
import numpy as np
import pytest

from imbnode.cli import main, parse_config_file, spec_from_pairs
from imbnode.graph import load_graph


@pytest.fixture()
def sbm_files(tmp_path):
    out = tmp_path / "data"
    code = main(
        [
            "gen-sbm",
            "--sizes",
            "12,12,6",
            "--p-in",
            "0.4",
            "--p-out",
            "0.05",
            "--dim",
            "4",
            "--seed",
            "0",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out / "edges.tsv", out / "features.txt", out / "labels.txt"


def test_gen_sbm_files_load(sbm_files):
    g = load_graph(*sbm_files)
    assert g.n == 30 and g.m == 3 and g.d == 4
    assert (g.adjacency != g.adjacency.T).nnz == 0


def test_train_from_files_writes_outputs(tmp_path, sbm_files, capsys):
    edge, feat, label = sbm_files
    out = tmp_path / "run"
    # epoch budget comes from a config file to exercise the override chain
    cfg = tmp_path / "run.cfg"
    cfg.write_text("max_epochs = 6\npatience = 50\nembed_dim = 8\nhidden_dim = 8\n")
    code = main(
        [
            "train",
            "--edge-file", str(edge),
            "--feature-file", str(feat),
            "--label-file", str(label),
            "--protocol", "proportional",
            "--variant", "reweight",
            "--seed", "1",
            "--config", str(cfg),
            "--out", str(out),
        ]
    )
    assert code == 0
    for name in ("record.jsonl", "summary.csv", "predictions.csv", "checkpoint.npz"):
        assert (out / name).exists(), name
    assert "reweight" in capsys.readouterr().out


def test_train_rerun_byte_identical_summary(tmp_path, sbm_files):
    edge, feat, label = sbm_files
    cfg = tmp_path / "run.cfg"
    cfg.write_text("max_epochs = 5\npatience = 50\nembed_dim = 8\nhidden_dim = 8\nscale = balance\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(
            [
                "train",
                "--edge-file", str(edge),
                "--feature-file", str(feat),
                "--label-file", str(label),
                "--protocol", "proportional",
                "--variant", "gs_t",
                "--seed", "7",
                "--config", str(cfg),
                "--out", str(out),
            ]
        )
        assert code == 0
        outs.append((out / "summary.csv").read_bytes())
    assert outs[0] == outs[1]


def test_missing_dataset_files_actionable_error(tmp_path, capsys):
    code = main(
        [
            "train",
            "--edge-file", str(tmp_path / "nope.tsv"),
            "--feature-file", str(tmp_path / "nope.txt"),
            "--label-file", str(tmp_path / "nope2.txt"),
            "--variant", "origin",
        ]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "edge_file" in err and "missing" in err


def test_grid_spec_runs_and_series(tmp_path):
    spec = tmp_path / "grid.cfg"
    spec.write_text(
        "\n".join(
            [
                "sbm_sizes = 10,10,5",
                "sbm_p_in = 0.4",
                "sbm_p_out = 0.05",
                "sbm_dim = 4",
                "protocol = proportional",
                "sweep = scale",
                "sweep_values = 0.5,1.0",
                "variants = origin,gs_t",
                "seeds = 0,1",
                "max_epochs = 4",
                "patience = 50",
                "embed_dim = 6",
                "hidden_dim = 6",
                f"out = {tmp_path / 'gridout'}",
            ]
        )
    )
    code = main(["grid", "--spec", str(spec)])
    assert code == 0
    out = tmp_path / "gridout"
    runs = (out / "runs.csv").read_text().splitlines()
    assert len(runs) == 1 + 2 * 2 * 2  # header + values x seeds x variants
    summary = (out / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2 * 2  # header + values x variants
    for variant in ("origin", "gs_t"):
        for metric in ("acc", "auc", "f"):
            series = (out / "series" / f"{variant}_{metric}.csv").read_text().splitlines()
            assert len(series) == 3  # header + one row per sweep value
            assert series[1].startswith("0.5,")
            assert series[2].startswith("1.0,")
    assert len(list((out / "records").glob("*.jsonl"))) == 8


def test_grid_rerun_byte_identical(tmp_path):
    spec = tmp_path / "grid.cfg"
    spec.write_text(
        "\n".join(
            [
                "sbm_sizes = 8,8,4",
                "sbm_p_in = 0.5",
                "sbm_p_out = 0.1",
                "sbm_dim = 3",
                "protocol = proportional",
                "variants = origin",
                "seeds = 0",
                "max_epochs = 3",
                "patience = 50",
                "embed_dim = 5",
                "hidden_dim = 5",
            ]
        )
    )
    blobs = []
    for name in ("g1", "g2"):
        code = main(["grid", "--spec", str(spec), "--out", str(tmp_path / name)])
        assert code == 0
        blobs.append(
            (tmp_path / name / "summary.csv").read_bytes()
            + (tmp_path / name / "runs.csv").read_bytes()
        )
    assert blobs[0] == blobs[1]


def test_lambda_sweep_echoes_configured_values(tmp_path):
    spec = tmp_path / "lam.cfg"
    spec.write_text(
        "\n".join(
            [
                "sbm_sizes = 8,8,4",
                "sbm_p_in = 0.5",
                "sbm_p_out = 0.1",
                "sbm_dim = 3",
                "protocol = proportional",
                "sweep = lambda",
                "sweep_values = 1e-7,1e-6,2e-6",
                "variants = gs_t",
                "seeds = 0",
                "max_epochs = 2",
                "patience = 50",
                "embed_dim = 5",
                "hidden_dim = 5",
                f"out = {tmp_path / 'lam'}",
            ]
        )
    )
    assert main(["grid", "--spec", str(spec)]) == 0
    series = (tmp_path / "lam" / "series" / "gs_t_auc.csv").read_text().splitlines()
    assert [row.split(",")[0] for row in series[1:]] == ["1e-07", "1e-06", "2e-06"]


def test_train_from_generated_graph_flag(tmp_path):
    out = tmp_path / "sbmrun"
    code = main(
        [
            "train",
            "--sbm-sizes", "10,10,5",
            "--p-in", "0.4",
            "--p-out", "0.05",
            "--sbm-dim", "3",
            "--protocol", "proportional",
            "--variant", "gs_o",
            "--scale", "balance",
            "--seed", "2",
            "--config", str(_mini_cfg(tmp_path)),
            "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "summary.csv").exists()


def _mini_cfg(tmp_path):
    cfg = tmp_path / "mini.cfg"
    cfg.write_text("max_epochs = 3\npatience = 50\nembed_dim = 5\nhidden_dim = 5\n")
    return cfg


def test_metrics_scores_prediction_dump(tmp_path, capsys):
    from imbnode.classifier import write_predictions

    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(3), size=20)
    labels = rng.integers(0, 3, size=20)
    path = tmp_path / "pred.csv"
    write_predictions(path, probs, labels)
    assert main(["metrics", "--pred", str(path)]) == 0
    out = capsys.readouterr().out
    assert "acc=" in out and "auc_macro=" in out and "f_macro=" in out
    assert "class 2:" in out


def test_gradcheck_command_passes(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 9


def test_out_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("IMBNODE_OUT", str(tmp_path))
    code = main(["gen-sbm", "--sizes", "5,5", "--p-in", "0.5", "--p-out", "0.1", "--out", "envdata"])
    assert code == 0
    assert (tmp_path / "envdata" / "edges.tsv").exists()


def test_config_parser_round_trip(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nlambda = 1e-5\nscale = balance\nvariants = gs_o\nseeds = 3,4\n")
    spec = spec_from_pairs(parse_config_file(cfg))
    assert spec.train.lambda_ == 1e-5
    assert spec.train.scale == "balance"
    assert spec.variants == ["gs_o"]
    assert spec.seeds == [3, 4]


def test_config_parser_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("not_a_key = 1\n")
    with pytest.raises(ValueError, match="not_a_key"):
        spec_from_pairs(parse_config_file(cfg))
