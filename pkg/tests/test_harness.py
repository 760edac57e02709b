import csv
import io

import numpy as np
import pytest

from koopspec import cli
from koopspec.data import load_csv
from koopspec.diagnostics import spectra_from_text
from koopspec.harness import (
    ALL_MODELS,
    KOOPMAN_MODELS,
    SUMMARY_HEADER,
    ConfigError,
    parse_config,
    parse_config_text,
    run_benchmark,
    run_seed,
)
from koopspec.training import history_from_text

SMALL = """
data = synthetic:damped_rotation
synth_T = 300
P = 8, 12
H = 2, 3
steps = 4
batch_size = 4
d_model = 8
rank = 4
ssm_hidden = 4
eval_every = 2
spectral_log_every = 2
"""


def test_minimal_config_gets_defaults(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("data = synthetic:damped_rotation\nP = 32\nH = 8  # horizon\n")
    cfg = parse_config(path)
    assert cfg.P == (32,) and cfg.H == (8,)
    assert cfg.lr == 3e-4 and cfg.lambda_lyap == 0.1 and cfg.rho_max == 0.99
    assert cfg.variant == ALL_MODELS and len(KOOPMAN_MODELS) == 6
    assert cfg.train_config.steps == 2000


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError, match="unknown variant 'frobnicate'"):
        parse_config_text("data = x.csv\nP = 4\nH = 1\nvariant = frobnicate\n")


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError, match=r"duplicate key 'P' on lines 2 and 4"):
        parse_config_text("data = x.csv\nP = 4\nH = 1\nP = 8\n")


@pytest.mark.parametrize(
    "text, match",
    [
        ("P = 4\nH = 1\n", "missing required key 'data'"),
        ("data = x\nP = 4\nH = 1\nsteps = many\n", "bad value for 'steps'"),
        ("data = x\nP = 4\nH = 1\ncolour = red\n", "unknown key 'colour'"),
        ("data = x\nP = 4\nH = 1\nattention = maybe\n", "bad value for 'attention'"),
        ("data = x\nP =\nH = 1\n", "nonempty"),
        ("data = x\nP 4\n", "line 2"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_overrides_beat_file():
    cfg = parse_config_text("data = x\nP = 4\nH = 1\nlr = 0.1\n", {"lr": "0.5", "P": "3,5"})
    assert cfg.lr == 0.5 and cfg.P == (3, 5)


def test_run_seed_independent_of_grid():
    assert run_seed(0, "mlp", 32, 8) == run_seed(0, "mlp", 32, 8)
    assert len({run_seed(0, v, 32, 8) for v in ALL_MODELS}) == len(ALL_MODELS)


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    cfg = parse_config_text(SMALL, {"out": str(out)})
    return cfg, run_benchmark(cfg), out


def test_grid_row_count_and_order(grid):
    cfg, result, _ = grid
    rows = list(csv.reader(io.StringIO(result.summary)))
    assert tuple(rows[0]) == SUMMARY_HEADER
    body = rows[1:]
    assert len(body) == 2 * 2 * 8 + 4
    expected = [(v, str(P), str(H)) for v in ALL_MODELS for P in (8, 12) for H in (2, 3)]
    expected += [("persistence", str(P), str(H)) for P in (8, 12) for H in (2, 3)]
    assert [tuple(r[:3]) for r in body] == expected
    assert result.ok and all(r[-1] == "ok" for r in body)


def test_artifact_layout(grid):
    cfg, result, out = grid
    assert (out / "summary.csv").read_text() == result.summary
    records = spectra_from_text((out / "spectra.csv").read_text())
    assert {r.variant for r in records} == set(ALL_MODELS) - {"dlinear"}
    for v in ALL_MODELS:
        run = out / "runs" / f"{v}_P8_H2"
        assert [r.step for r in history_from_text((run / "history.csv").read_text())] == [0, 2]
        assert (run / "checkpoint.txt").read_text().startswith("# koopspec v1\n")
    assert not (out / "runs" / "persistence_P8_H2").exists()


def test_odo_spectra_respect_bound(grid):
    _, result, _ = grid
    for r in spectra_from_text(result.spectra):
        if r.variant in KOOPMAN_MODELS and r.variant != "unconstrained":
            assert r.singular_value < 0.99
            assert r.backbone == "patch-attn"


def test_rerun_is_byte_identical_and_parallel_safe(grid):
    cfg, result, _ = grid
    again = run_benchmark(cfg, write=False)
    parallel = run_benchmark(cfg, write=False, workers=2)
    assert again.summary == result.summary == parallel.summary
    assert again.spectra == result.spectra == parallel.spectra


def test_divergence_sets_failure_tag_and_exit_code(tmp_path, capsys):
    rc = cli.main([
        "bench", "--data", "synthetic:damped_rotation", "--synth_T", "300", "--P", "32", "--H", "2",
        "--variant", "ssm,dlinear", "--steps", "50", "--lr", "1e4", "--batch_size", "4",
        "--out", str(tmp_path / "o"),
    ])
    out = capsys.readouterr()
    assert rc == 1
    assert "ssm,32,2," in out.out and ",diverged" in out.out
    assert "dlinear,32,2," in out.out  # the harness kept going
    assert "diverged" in out.err


def test_cli_train_runs_single_model(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.replace("P = 8, 12", "P = 8").replace("H = 2, 3", "H = 2") + "variant = dlinear\n")
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["dlinear", "persistence"]
    assert cli.main(["train", "--config", str(cfg), "--variant", "dlinear,ssm"]) == 2
    assert "exactly one variant" in capsys.readouterr().err


def test_cli_config_errors_exit_2(capsys):
    assert cli.main(["bench", "--P", "4", "--H", "1"]) == 2
    assert "missing required key 'data'" in capsys.readouterr().err
    assert cli.main(["bench", "--data", "x", "--P", "4", "--H", "1", "--variant", "frobnicate"]) == 2
    assert "frobnicate" in capsys.readouterr().err


def test_workers_env_var(monkeypatch):
    parser = cli.build_parser()
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    args = parser.parse_args(["bench", "--data", "x", "--P", "4", "--H", "1"])
    assert cli._load(args).workers == 3
    args = parser.parse_args(["bench", "--data", "x", "--P", "4", "--H", "1", "--workers", "2"])
    assert cli._load(args).workers == 2


def test_cli_synth(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert cli.main(["synth", "--kind", "sinusoid_ar", "--T", "128", "--d", "3", "--seed", "2", "--out", str(path)]) == 0
    assert "128 x 3" in capsys.readouterr().out
    assert load_csv(path).values.shape == (128, 3)


def test_bench_on_csv_file(tmp_path):
    path = tmp_path / "s.csv"
    cli.main(["synth", "--T", "200", "--d", "2", "--out", str(path)])
    cfg = parse_config_text(f"data = {path}\nP = 8\nH = 2\nvariant = constrained\nsteps = 2\nbatch_size = 2\n"
                            f"d_model = 4\nout = {tmp_path / 'o'}\n")
    result = run_benchmark(cfg)
    assert result.ok and len(result.results) == 2
    assert np.isfinite(result.results[0].test["mse"])
