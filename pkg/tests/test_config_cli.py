import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpvi import cli
from gpvi.config import (
    KINDS,
    ConfigError,
    build_config,
    describe_kinds,
    echo,
    load_config,
    parse_text,
)
from gpvi.experiments import rng_streams

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SMALL_BLR = """\
experiment.kind = blr   # short run
experiment.method = gpvi
train.steps = 300
train.checkpoint_every = 100
data.n = 50
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_list_experiments(capsys):
    code, out, _ = run_cli(["list-experiments"], capsys)
    assert code == 0
    assert "blr" in out and "solver-compare" in out
    for kind in KINDS:
        assert kind in out


def test_parse_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="train.stepz"):
        parse_text("experiment.kind = blr\ntrain.stepz = 3\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("experiment.kind = blr\nexperiment.kind = blr\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_text("experiment.kind = blr\njust words\n")


@pytest.mark.parametrize("line,key", [
    ("train.batch_size = -4", "train.batch_size"),
    ("train.steps = 0", "train.steps"),
    ("experiment.method = magic", "experiment.method"),
    ("train.lr = fast", "train.lr"),
    ("hmc.burn_in = 30000", "hmc.burn_in"),
    ("generator.k = 9", "generator.k"),
    ("helper.residual = sideways", "helper.residual"),
])
def test_validation_names_key(line, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        build_config(parse_text(f"experiment.kind = blr\n{line}\n"))


def test_missing_kind_and_method_mismatch():
    with pytest.raises(ConfigError, match="experiment.kind"):
        build_config(parse_text("train.steps = 3\n"))
    with pytest.raises(ConfigError, match="not available"):
        build_config(parse_text("experiment.kind = density\nexperiment.method = svgd\n"))


def test_kind_defaults_apply_and_explicit_wins():
    cfg = build_config(parse_text("experiment.kind = density\n"))
    assert cfg.d == 2 and cfg.batch_size == 20
    cfg = build_config(parse_text("experiment.kind = density\ntrain.batch_size = 7\n"))
    assert cfg.batch_size == 7 and "batch_size" in cfg.explicit
    assert build_config(parse_text("experiment.kind = hmc-baseline\n")).method == "hmc"


def test_shipped_configs_are_valid():
    files = sorted(CONFIG_DIR.glob("*.cfg"))
    assert files
    for f in files:
        load_config(f)


@given(steps=st.integers(1, 10**6), lr=st.floats(0, 1, allow_nan=False),
       hidden=st.lists(st.integers(1, 300), max_size=3), seed=st.integers(0, 2**32))
def test_echo_round_trip(steps, lr, hidden, seed):
    text = (f"experiment.kind = classify4\ntrain.steps = {steps}\ntrain.lr = {lr!r}\n"
            f"generator.hidden = {' '.join(map(str, hidden))}\nexperiment.seed = {seed}\n")
    cfg = build_config(parse_text(text))
    again = build_config(parse_text(echo(cfg)))
    assert echo(again) == echo(cfg)
    assert again.gen_hidden == tuple(hidden) and again.lr == lr


def test_malformed_config_exits_2_without_writing(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    p = write(tmp_path, "experiment.kind = blr\ntrain.batch_size = -1\n")
    code, _, err = run_cli(["run", str(p)], capsys)
    assert code == 2
    assert "train.batch_size" in err
    assert not (tmp_path / "root").exists()


def test_missing_file_exits_2(tmp_path, capsys):
    code, _, err = run_cli(["run", str(tmp_path / "nope.cfg")], capsys)
    assert code == 2 and "cannot read" in err


def test_divergence_exits_3(tmp_path, capsys, monkeypatch):
    import gpvi.experiments

    def boom(cfg):
        raise FloatingPointError("non-finite functional gradient")

    monkeypatch.setattr(gpvi.experiments, "run_experiment", boom)
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    code, _, err = run_cli(["run", str(write(tmp_path, SMALL_BLR))], capsys)
    assert code == 3 and "diverged" in err


def test_run_writes_outputs_deterministically(tmp_path, capsys, monkeypatch):
    cfg = write(tmp_path, SMALL_BLR + "experiment.output_dir = out\n")
    finals = []
    for root in ("a", "b"):
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / root))
        code, out, _ = run_cli(["run", str(cfg)], capsys)
        assert code == 0
        outdir = tmp_path / root / "out"
        assert sorted(p.name for p in outdir.iterdir()) == ["config.echo", "final.csv", "trace.csv"]
        # nothing else written under the root
        assert [p.name for p in (tmp_path / root).iterdir()] == ["out"]
        finals.append((outdir / "final.csv").read_bytes())
        with open(outdir / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["step"]) for r in rows] == [100, 200, 300]
        echoed = load_config(outdir / "config.echo")
        assert echoed.steps == 300 and echoed.kind == "blr"
    assert finals[0] == finals[1]
    with open(tmp_path / "a" / "out" / "final.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["mean_error"]) >= 0 and float(row["cov_error"]) >= 0


def test_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = build_config(parse_text("experiment.kind = blr\nexperiment.seed = 4\n"))
    assert cli.resolve_output_dir(cfg) == tmp_path / "runs" / "blr-gpvi-seed4"


def test_write_csv_precision_and_union_header(tmp_path):
    cli.write_csv(tmp_path / "x.csv", [{"a": 0.1, "b": 1}, {"a": 1 / 3, "c": "t"}])
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "0.10000000000000001,1,"
    assert float(lines[2].split(",")[0]) == 1 / 3


def test_rng_streams_are_independent_and_seeded():
    a, b = rng_streams(3), rng_streams(3)
    assert set(a) == {"data", "init", "noise", "batch", "hmc"}
    for name in a:
        np.testing.assert_array_equal(a[name].random(4), b[name].random(4))
    draws = {name: rng_streams(3)[name].random() for name in a}
    assert len(set(draws.values())) == len(draws)


def test_describe_kinds_lists_required_keys():
    text = describe_kinds()
    assert "required: experiment.kind" in text
    assert "generator.hidden = none" in text
