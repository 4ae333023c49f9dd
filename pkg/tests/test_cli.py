import json

import numpy as np
import pandas as pd
import pytest
import yaml

from stochseir import cli, plotting

SCENARIO = """\
name: tiny
T: 45
population: 500000
seed_size: 300
R_profile: [{r}]
"""

TINY_FIT = ["--chains", "2", "--warmup", "20", "--samples", "10", "--no-warm-start", "--seed", "5"]


def _scenario(tmp_path):
    r = ", ".join(f"{2.4 - 1.4 * (t > 25):.2f}" for t in range(45))
    path = tmp_path / "tiny.yaml"
    path.write_text(SCENARIO.format(r=r))
    return path


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "data"
    assert cli.main(["simulate", "--scenario", str(_scenario(root)), "--seed", "2", "--output", str(out)]) == 0
    cfg = yaml.safe_load((out / "config.yaml").read_text())
    cfg["sampler"] = {"max_depth": 5}
    cfg["regression"] = {"cutoff": None, "chains": 2, "warmup": 60, "samples": 40}
    (out / "config.yaml").write_text(yaml.safe_dump(cfg))
    return out


@pytest.fixture(scope="module")
def finished_run(sim_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("run") / "r"
    assert cli.main(["fit", "--config", str(sim_dir / "config.yaml"), "--output", str(run)] + TINY_FIT) == 0
    assert cli.main(["postprocess", "--run", str(run)]) == 0
    assert cli.main(["regress", "--run", str(run)]) == 0
    assert cli.main(["report", "--run", str(run)]) == 0
    return run


def test_end_to_end_artifacts(finished_run):
    for name in ("config.yaml", "draws.csv", "derived.npz", "diagnostics.txt", "run.json", "rt.csv",
                 "beta.csv", "infections.csv", "reporting_ratio.csv", "regression_coefficients.csv",
                 "regression_correlations.csv", "regression.json"):
        assert (finished_run / name).exists(), name
    report = sorted(p.name for p in (finished_run / "report").iterdir())
    assert report == ["cumulative.svg", "diagnostics.txt", "infections.svg", "reporting_ratio.svg", "rt.svg"]
    draws = pd.read_csv(finished_run / "draws.csv")
    assert len(draws) == 20 and list(draws.columns[:2]) == ["chain", "iteration"]
    meta = json.loads((finished_run / "run.json").read_text())
    assert meta["seed"] == 5 and meta["T"] == 45 and "wall_time_s" in meta
    table = (finished_run / "diagnostics.txt").read_text()
    for col in ("mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess_bulk"):
        assert col in table


def test_rt_shading_matches_csv(finished_run):
    rt = pd.read_csv(finished_run / "rt.csv")
    fig = plotting.rt_figure(rt)
    shaded = plotting.shaded_bounds(fig)
    pairs = {(round(lo[0], 12), round(hi[0], 12)) for lo, hi in shaded}
    for lo_col, hi_col in (("q2.5", "q97.5"), ("q25", "q75")):
        match = [s for s in shaded if np.allclose(s[0], rt[lo_col]) and np.allclose(s[1], rt[hi_col])]
        assert match, (lo_col, hi_col, pairs)


def test_rerun_is_identical(sim_dir, finished_run, tmp_path):
    again = tmp_path / "again"
    assert cli.main(["fit", "--config", str(sim_dir / "config.yaml"), "--output", str(again)] + TINY_FIT) == 0
    assert cli.main(["postprocess", "--run", str(again)]) == 0
    for name in ("draws.csv", "diagnostics.txt", "rt.csv", "infections.csv", "reporting_ratio.csv"):
        assert (again / name).read_bytes() == (finished_run / name).read_bytes(), name
    a = json.loads((again / "run.json").read_text())
    b = json.loads((finished_run / "run.json").read_text())
    a.pop("wall_time_s"), b.pop("wall_time_s")
    assert a == b


def test_strict_flag(sim_dir, tmp_path):
    run = tmp_path / "strict"
    code = cli.main(["fit", "--config", str(sim_dir / "config.yaml"), "--output", str(run), "--strict"] + TINY_FIT)
    draws = pd.read_csv(run / "draws.csv")
    assert code in (0, 4)
    from stochseir.inference import diagnostics as diag
    worst = max(diag.rhat(np.stack([g[c].to_numpy() for _, g in draws.groupby("chain")]))
                for c in draws.columns[2:])
    assert (code == 4) == (worst > cli.STRICT_RHAT)


def test_report_on_empty_directory(tmp_path, capsys):
    assert cli.main(["report", "--run", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    for name in ("rt.csv", "infections.csv", "reporting_ratio.csv", "diagnostics.txt"):
        assert name in err


def test_report_names_only_missing(finished_run, tmp_path, capsys):
    partial = tmp_path / "partial"
    partial.mkdir()
    (partial / "rt.csv").write_bytes((finished_run / "rt.csv").read_bytes())
    assert cli.main(["report", "--run", str(partial)]) == 3
    err = capsys.readouterr().err
    assert "rt.csv" not in err.split(":", 2)[-1] and "diagnostics.txt" in err


def test_config_error_leaves_no_output(sim_dir, tmp_path):
    out = tmp_path / "never"
    assert cli.main(["fit", "--config", str(sim_dir / "config.yaml"), "--output", str(out),
                     "--chains", "0"]) == 2
    assert not out.exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text((sim_dir / "config.yaml").read_text() + "\nunknown_block: 1\n")
    assert cli.main(["fit", "--config", str(bad), "--output", str(out)]) == 2
    assert not out.exists()
    assert cli.main(["simulate", "--scenario", "nope", "--output", str(out)]) == 2
    assert not out.exists()


def test_data_error_exit_code(sim_dir, tmp_path):
    cfg = yaml.safe_load((sim_dir / "config.yaml").read_text())
    cfg["country"]["feeds"]["deaths"] = {"path": str(sim_dir / "deaths_jhu.csv"), "format": "jhu",
                                         "country": "Atlantis"}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "o"
    assert cli.main(["fit", "--config", str(path), "--output", str(out)] + TINY_FIT) == 3
    assert not out.exists()


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for sub in ("simulate", "fit", "postprocess", "regress", "report"):
        assert sub in text
