"""Harness behavior: config resolution, runner outputs, CLI contract."""

import json
from pathlib import Path

import numpy as np
import pytest

from gramflow.cli import main
from gramflow.dataset import generate_sphere_dataset, save_dataset
from gramflow.experiments import (
    ConfigError,
    HarnessError,
    list_experiments,
    load_run_summary,
    parse_config,
    run_experiment,
    summary_filename,
)
from gramflow.relu_dynamics import load_trajectory

TINY_ENVELOPE = "n=6\nd=4\nm=200\nseeds=0,1\nT=1.0\nrecord_every=5\n"


def write_cfg(tmp_path: Path, text: str, name: str = "run.cfg") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


# --------------------------------------------------------------------------
# registry


def test_catalog_has_all_nine_experiments():
    catalog = list_experiments()
    assert sorted(catalog) == [
        "convergence-envelope",
        "gradient-decay",
        "gram-concentration",
        "hessian-psd",
        "lambda-floor",
        "linear-landscape",
        "sigmoid-rank",
        "topfit-zeroloss",
        "width-sweep",
    ]


def test_catalog_claims_are_meaningful():
    for name, claim in list_experiments().items():
        assert len(claim) > 20, name
        assert claim == claim.strip()


# --------------------------------------------------------------------------
# parse_config


def test_defaults_resolve_without_any_inputs(monkeypatch):
    monkeypatch.delenv("GRAMFLOW_OUT", raising=False)
    cfg = parse_config("convergence-envelope")
    assert cfg.params["n"] == 10
    assert cfg.params["m"] == 10_000
    assert cfg.params["seeds"] == (0,)
    assert cfg.params["slack"] == 1.0
    assert cfg.out_dir == Path("gramflow_out")
    assert cfg.overridden == ()


def test_unknown_experiment_rejected():
    with pytest.raises(HarnessError, match="unknown experiment"):
        parse_config("no-such-thing")


def test_unknown_key_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "n=6\nbogus=3\n")
    with pytest.raises(ConfigError, match="unknown key 'bogus'"):
        parse_config("convergence-envelope", config_file=cfg)


def test_unparseable_value_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "T=fast\n")
    with pytest.raises(ConfigError, match="cannot parse 'fast'"):
        parse_config("convergence-envelope", config_file=cfg)


def test_malformed_line_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "n 6\n")
    with pytest.raises(ConfigError, match="expected key=value"):
        parse_config("convergence-envelope", config_file=cfg)


def test_duplicate_key_rejected(tmp_path):
    cfg = write_cfg(tmp_path, "n=6\nn=7\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("convergence-envelope", config_file=cfg)


def test_comments_and_blank_lines_ignored(tmp_path):
    cfg = write_cfg(tmp_path, "# comment\n\nn=7\n  # indented comment\n")
    assert parse_config("convergence-envelope", config_file=cfg).params["n"] == 7


@pytest.mark.parametrize(
    "line,message",
    [
        ("n=0", "must be >= 1"),
        ("T=-1", "must be >= 0"),
        ("slack=0", "must be > 0"),
        ("seeds=", "at least one seed"),
        ("seeds=0,0", "distinct"),
        ("seeds=-1", ">= 0"),
    ],
)
def test_range_validation(tmp_path, line, message):
    cfg = write_cfg(tmp_path, line + "\n")
    with pytest.raises(ConfigError, match=message):
        parse_config("convergence-envelope", config_file=cfg)


def test_m_values_must_increase(tmp_path):
    cfg = write_cfg(tmp_path, "m_values=100,100\n")
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config("gram-concentration", config_file=cfg)


def test_dims_need_two_entries(tmp_path):
    cfg = write_cfg(tmp_path, "dims=3\n")
    with pytest.raises(ConfigError, match="input and output"):
        parse_config("linear-landscape", config_file=cfg)


def test_seed_flag_wins_over_file_and_is_echoed(tmp_path):
    cfg_file = write_cfg(tmp_path, "seeds=0,1,2\n")
    cfg = parse_config("convergence-envelope", config_file=cfg_file, seeds=[7, 8])
    assert cfg.params["seeds"] == (7, 8)
    assert "seeds" in cfg.overridden


def test_seed_flag_without_file_value_is_not_marked_overridden(tmp_path):
    cfg_file = write_cfg(tmp_path, "n=6\n")
    cfg = parse_config("convergence-envelope", config_file=cfg_file, seeds=[7])
    assert cfg.params["seeds"] == (7,)
    assert cfg.overridden == ()


def test_out_dir_precedence(tmp_path, monkeypatch):
    cfg_file = write_cfg(tmp_path, f"out_dir={tmp_path / 'from_file'}\n")
    monkeypatch.setenv("GRAMFLOW_OUT", str(tmp_path / "from_env"))

    flag = parse_config(
        "convergence-envelope", config_file=cfg_file, out_dir=tmp_path / "from_flag"
    )
    assert flag.out_dir == tmp_path / "from_flag"
    assert "out_dir" in flag.overridden

    from_file = parse_config("convergence-envelope", config_file=cfg_file)
    assert from_file.out_dir == tmp_path / "from_file"

    from_env = parse_config("convergence-envelope")
    assert from_env.out_dir == tmp_path / "from_env"


# --------------------------------------------------------------------------
# run_experiment outputs


@pytest.fixture(scope="module")
def envelope_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("envelope")
    cfg_file = out / "run.cfg"
    cfg_file.write_text(TINY_ENVELOPE)
    cfg = parse_config("convergence-envelope", config_file=cfg_file, out_dir=out / "art")
    return cfg, run_experiment(cfg)


def test_envelope_run_passes_and_names_every_seed(envelope_run):
    _, summary = envelope_run
    assert summary.verdicts == {"seed_0": True, "seed_1": True}
    assert summary.pass_rate == 1.0
    assert summary.experiment == "convergence-envelope"


def test_pass_rate_is_exactly_passes_over_seeds(envelope_run):
    _, summary = envelope_run
    passes = sum(summary.verdicts.values())
    assert summary.pass_rate == passes / len(summary.verdicts)


def test_every_artifact_referenced_exactly_once(envelope_run):
    cfg, summary = envelope_run
    on_disk = {p.name for p in cfg.out_dir.iterdir()}
    assert set(summary.files) == on_disk - {summary_filename(cfg.experiment)}
    assert len(summary.files) == len(set(summary.files))


def test_summary_file_round_trips(envelope_run):
    cfg, summary = envelope_run
    loaded = load_run_summary(cfg.out_dir / summary_filename(cfg.experiment))
    assert loaded["verdicts"] == summary.verdicts
    assert loaded["config"]["m"] == 200
    assert loaded["version"] == summary.version


def test_trajectory_artifacts_load_back(envelope_run):
    cfg, summary = envelope_run
    traj = load_trajectory(cfg.out_dir / "envelope_seed0.csv")
    assert traj.meta["m"] == 200
    assert traj.meta["integrator"] == "rk4"
    assert traj.times[0] == 0.0


def test_rerun_is_byte_identical_modulo_wall_clock(tmp_path):
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE)

    def snapshot(out: Path) -> dict:
        cfg = parse_config("convergence-envelope", config_file=cfg_file, out_dir=out)
        run_experiment(cfg)
        blobs = {}
        for p in sorted(out.iterdir()):
            if p.name == summary_filename("convergence-envelope"):
                d = json.loads(p.read_text())
                del d["wall_clock_s"]
                d["config"].pop("out_dir")
                blobs[p.name] = json.dumps(d, sort_keys=True)
            else:
                blobs[p.name] = p.read_bytes()
        return blobs

    first = snapshot(tmp_path / "a")
    second = snapshot(tmp_path / "b")
    assert first == second


def test_failed_bound_check_is_a_result_not_an_error(tmp_path):
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE + "slack=1e-6\n")
    cfg = parse_config("convergence-envelope", config_file=cfg_file, out_dir=tmp_path / "o")
    summary = run_experiment(cfg)
    assert summary.pass_rate == 0.0
    assert all(v is False for v in summary.verdicts.values())


def test_width_sweep_outputs(tmp_path):
    cfg_file = write_cfg(
        tmp_path, "n=8\nd=4\nm_values=50,200,800\nseeds=0,1,2\nstep_cap=5000\n"
    )
    cfg = parse_config("width-sweep", config_file=cfg_file, out_dir=tmp_path / "o")
    summary = run_experiment(cfg)
    assert summary.pass_rate == 1.0
    assert "median_iters_nonincreasing" in summary.checks
    series = (tmp_path / "o" / "width50_seed0.csv").read_text().splitlines()
    assert series[0] == "step,loss"
    assert len(series) > 2
    iters = (tmp_path / "o" / "width_iters.csv").read_text().splitlines()
    assert iters[0] == "m,seed,iters_to_target"
    assert len(iters) == 1 + 3 * 3


def test_hessian_psd_rows_match_seeds(tmp_path):
    cfg_file = write_cfg(tmp_path, "seeds=0,1,2\n")
    cfg = parse_config("hessian-psd", config_file=cfg_file, out_dir=tmp_path / "o")
    summary = run_experiment(cfg)
    assert summary.pass_rate == 1.0
    rows = (tmp_path / "o" / "hessian_psd.csv").read_text().splitlines()
    assert rows[0] == "seed,n,d,m,lambda_min"
    assert len(rows) == 4
    assert summary.details["worst_lambda_min"] >= -1e-8


def test_sigmoid_rank_clean_and_duplicated(tmp_path):
    cfg_file = write_cfg(tmp_path, "trials=50\n")
    cfg = parse_config("sigmoid-rank", config_file=cfg_file, out_dir=tmp_path / "o")
    summary = run_experiment(cfg)
    assert summary.verdicts == {"seed_0": True}
    d = summary.details["seed_0"]
    assert d["fraction_full_rank"] == 1.0
    assert d["fraction_full_rank_duplicated"] == 0.0


def test_gradient_decay_never_violates(tmp_path):
    cfg_file = write_cfg(tmp_path, "seeds=0,1\nsteps=40\n")
    cfg = parse_config("gradient-decay", config_file=cfg_file, out_dir=tmp_path / "o")
    summary = run_experiment(cfg)
    assert summary.pass_rate == 1.0
    for key in ("seed_0", "seed_1"):
        assert summary.details[key]["n_violations"] == 0


# --------------------------------------------------------------------------
# CLI


def test_cli_list_exits_zero(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "convergence-envelope" in out
    assert "width-sweep" in out


def test_cli_run_tiny_envelope(tmp_path, capsys):
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE)
    code = main(
        [
            "run",
            "--experiment",
            "convergence-envelope",
            "--config",
            str(cfg_file),
            "--out",
            str(tmp_path / "o"),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "seed_0: pass" in out
    assert "pass_rate: 1" in out
    assert (tmp_path / "o" / summary_filename("convergence-envelope")).exists()


def test_cli_seed_flag_overrides_config(tmp_path, capsys):
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE)
    code = main(
        [
            "run",
            "--experiment",
            "convergence-envelope",
            "--config",
            str(cfg_file),
            "--seed",
            "5",
            "--out",
            str(tmp_path / "o"),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "seed_5: pass" in out
    assert "overridden by flags: seeds" in out
    summary = load_run_summary(tmp_path / "o" / summary_filename("convergence-envelope"))
    assert summary["config"]["seeds"] == [5]
    assert summary["overridden"] == ["seeds"]


def test_cli_failed_bound_check_still_exits_zero(tmp_path, capsys):
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE + "slack=1e-6\n")
    code = main(
        [
            "run",
            "--experiment",
            "convergence-envelope",
            "--config",
            str(cfg_file),
            "--out",
            str(tmp_path / "o"),
        ]
    )
    assert code == 0
    assert "seed_0: FAIL" in capsys.readouterr().out


def test_cli_unknown_experiment_is_hard_error(capsys):
    assert main(["run", "--experiment", "nope"]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_cli_bad_config_is_hard_error(tmp_path, capsys):
    cfg_file = write_cfg(tmp_path, "bogus=1\n")
    code = main(
        ["run", "--experiment", "convergence-envelope", "--config", str(cfg_file)]
    )
    assert code == 2
    assert "unknown key" in capsys.readouterr().err


def test_cli_env_var_sets_default_out_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GRAMFLOW_OUT", str(tmp_path / "env_out"))
    cfg_file = write_cfg(tmp_path, TINY_ENVELOPE)
    code = main(
        ["run", "--experiment", "convergence-envelope", "--config", str(cfg_file)]
    )
    assert code == 0
    assert (tmp_path / "env_out" / "envelope_seed0.csv").exists()


def test_cli_validate_data_accepts_valid_file(tmp_path, capsys):
    data = generate_sphere_dataset(n=6, d=4, seed=0)
    path = tmp_path / "data.csv"
    save_dataset(data, path)
    assert main(["validate-data", str(path)]) == 0
    out = capsys.readouterr().out
    assert "unit_norm_columns: pass" in out
    assert "dataset ok" in out


def test_cli_validate_data_rejects_corrupt_file(tmp_path, capsys):
    data = generate_sphere_dataset(n=6, d=4, seed=0)
    path = tmp_path / "data.csv"
    save_dataset(data, path)
    lines = path.read_text().splitlines()
    lines[2] = ",".join(["2.5"] * len(lines[2].split(",")))
    path.write_text("\n".join(lines) + "\n")
    assert main(["validate-data", str(path)]) == 3
    assert "invalid" in capsys.readouterr().err


def test_cli_validate_data_missing_file(tmp_path, capsys):
    assert main(["validate-data", str(tmp_path / "nope.csv")]) == 2
