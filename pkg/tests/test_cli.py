import csv
import json
import math

import numpy as np
import pytest

from pwmd import cli
from pwmd.cli import EXIT_CAPABILITY, EXIT_FAIL, EXIT_INVALID, EXIT_OK, main, run_config
from pwmd.config import ExperimentConfig

TAIL = """
kind = "tail_ratio"
[estimation]
seed = 1
reps = 100000
[model]
type = "iid_sum"
n = 4
dist = { family = "rademacher" }
[grid]
x = [0.0]
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def rows(path):
    return list(csv.DictReader(open(path)))


def body(path):
    return path.read_bytes()


# run: exit codes ---------------------------------------------------------------


def test_tail_ratio_run(tmp_path, capsys):
    out = tmp_path / "out"
    assert run_config(write(tmp_path, TAIL), out) == EXIT_OK
    (row,) = rows(out / "results.csv")
    ratio, se, ref = float(row["ratio"]), float(row["se"]), float(row["p_ref"])
    assert float(row["p_ref"]) == 0.5
    assert abs(ratio - 0.625) <= 4 * se / ref
    assert "artifacts written" in capsys.readouterr().out


def test_manifest_round_trips(tmp_path):
    out = tmp_path / "out"
    assert run_config(write(tmp_path, TAIL), out, quiet=True) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "results.csv", "summary.txt"]
    manifest = json.loads((out / "manifest.json").read_text())
    cfg = ExperimentConfig.model_validate(manifest["config"])
    assert cfg.estimation.seed == manifest["seed"] == 1
    assert manifest["reps"] == 100000 and manifest["threads"] == 1
    assert manifest["artifacts"] == ["results.csv", "summary.txt"]
    assert {"numpy", "scipy", "pwmd", "python"} <= set(manifest["versions"])


def test_missing_reps_is_invalid(tmp_path, capsys):
    text = TAIL.replace("reps = 100000\n", "")
    assert run_config(write(tmp_path, text), tmp_path / "o", quiet=True) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "estimation.reps" in err and err.startswith("pwmd: invalid configuration")
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "edit,needle",
    [
        (("seed = 1\n", ""), "estimation.seed"),
        (("n = 4\n", "n = 4\nbogus = 1\n"), "bogus"),
        (("x = [0.0]", "x = [1.0, 0.0]"), "sorted"),
        (("kind = \"tail_ratio\"", "kind = \"nope\""), "kind"),
    ],
)
def test_malformed_configs(tmp_path, capsys, edit, needle):
    text = TAIL.replace(*edit)
    assert text != TAIL
    assert run_config(write(tmp_path, text), tmp_path / "o", quiet=True) == EXIT_INVALID
    assert needle in capsys.readouterr().err


def test_unparseable_and_missing_files(tmp_path):
    assert run_config(write(tmp_path, "kind = [", "bad.toml"), tmp_path / "o", quiet=True) == EXIT_INVALID
    assert run_config(tmp_path / "absent.toml", tmp_path / "o", quiet=True) == EXIT_INVALID


def test_capability_error_exit_code(tmp_path, capsys):
    text = """
kind = "tail_ratio"
[estimation]
seed = 1
reps = 1000
method = "tilted"
[model]
type = "hom_sum"
n = 6
q = 2
perfect_matching = true
[grid]
x = [1.0]
"""
    assert run_config(write(tmp_path, text), tmp_path / "o", quiet=True) == EXIT_CAPABILITY
    assert "CapabilityError" in capsys.readouterr().err


def test_bound_eval_chi(tmp_path):
    text = """
kind = "bound_eval"
[estimation]
seed = 0
[bound]
application = "chi"
params = { d = 16, b = 1.0, n = 10000 }
[grid]
x = [0.0, 1.0]
"""
    out = tmp_path / "o"
    assert run_config(write(tmp_path, text), out, quiet=True) == EXIT_OK
    got = rows(out / "results.csv")
    assert [float(r["x"]) for r in got] == [0.0, 1.0]
    assert all(abs(float(r["delta"]) - 0.02) <= 1e-15 for r in got)


def test_oracle_check_writes_pmf(tmp_path):
    text = """
kind = "oracle_check"
[estimation]
seed = 0
[model]
type = "iid_sum"
n = 4
[grid]
x = [0.0]
[output]
formats = ["csv", "json"]
"""
    out = tmp_path / "o"
    assert run_config(write(tmp_path, text), out, quiet=True) == EXIT_OK
    (row,) = rows(out / "results.csv")
    assert float(row["ratio"]) == 0.625
    assert json.loads((out / "results.json").read_text())[0]["p_w"] == 0.3125
    pmf = rows(out / "pmf.csv")
    assert [float(r["prob"]) for r in pmf] == [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16]


def test_json_config_and_env_directory(tmp_path, monkeypatch):
    data = {
        "kind": "oracle_check", "estimation": {"seed": 0},
        "model": {"type": "hom_sum", "n": 4, "q": 2, "perfect_matching": True},
        "grid": {"x": [-1.0, 0.5]},
    }
    path = write(tmp_path, json.dumps(data), "cfg.json")
    monkeypatch.setenv("PWMD_OUT", str(tmp_path / "env_out"))
    assert run_config(path, quiet=True) == EXIT_OK
    got = rows(tmp_path / "env_out" / "results.csv")
    assert float(got[1]["p_w"]) == 0.25
    # an explicit directory wins over the environment
    assert cli.resolve_out(tmp_path / "flag", "cfg") == tmp_path / "flag"
    monkeypatch.delenv("PWMD_OUT")
    assert str(cli.resolve_out(None, "cfg")) == "cfg"
    assert str(cli.resolve_out(None, None)) == "pwmd_out"


def test_wasserstein_scaling_run(tmp_path):
    text = """
kind = "wasserstein_scaling"
[estimation]
seed = 3
reps = 4000
p = 1.0
[model]
type = "iid_sum"
n = 4
dist = { family = "centered_exponential" }
[grid]
n = [4, 8, 16, 32]
"""
    out = tmp_path / "o"
    assert run_config(write(tmp_path, text), out, quiet=True) == EXIT_OK
    got = rows(out / "results.csv")
    assert [int(float(r["n"])) for r in got] == [4, 8, 16, 32]
    assert all(float(r["wp_hat"]) > 0 for r in got)


# determinism -------------------------------------------------------------------


@pytest.mark.parametrize("method", ["plain", "tilted"])
def test_rerun_identical_across_threads(tmp_path, method):
    text = f"""
kind = "tail_ratio"
[estimation]
seed = 9
reps = 150000
method = "{method}"
[model]
type = "iid_sum"
n = 30
dist = {{ family = "laplace_unit_var" }}
[grid]
x = [0.5, 1.5]
"""
    path = write(tmp_path, text)
    outs = []
    for k, threads in enumerate((1, 8, 1)):
        out = tmp_path / f"o{k}"
        assert run_config(path, out, threads=threads, quiet=True) == EXIT_OK
        outs.append(body(out / "results.csv"))
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "other"
    assert run_config(path, other, seed=10, quiet=True) == EXIT_OK
    assert body(other / "results.csv") != outs[0]


def test_cli_overrides_reach_manifest(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, TAIL)), "--seed", "5", "--reps", "2000", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["reps"] == 2000
    assert manifest["config"]["estimation"]["seed"] == 5


# subcommands ---------------------------------------------------------------------


def test_verify_subcommand(capsys):
    assert main(["verify", "--filter", "wasserstein"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_suite_reports_failure(tmp_path, monkeypatch):
    from pwmd import models as M

    real = M.comb_variance
    monkeypatch.setattr(M, "comb_variance", lambda c, s=None: 1.01 * real(c, s))
    text = 'kind = "verify_suite"\n[estimation]\nseed = 0\n[verify]\nfilter = "models"\n'
    out = tmp_path / "o"
    assert run_config(write(tmp_path, text), out, quiet=True) == EXIT_FAIL
    failed = [r for r in rows(out / "results.csv") if r["passed"] == "false"]
    assert [r["check"] for r in failed] == ["comb_variance_enumeration"]


def test_bound_subcommand(capsys):
    assert main(["bound", "chi", "d=16", "b=1", "n=1e4", "--x", "0", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["application"]["delta"] - 0.02) <= 1e-15
    assert len(doc["rows"]) == 2
    assert main(["bound", "chi", "d=16"]) == EXIT_CAPABILITY
    assert "missing input 'n'" in capsys.readouterr().err


def test_oracle_subcommand(tmp_path, capsys):
    assert main(["oracle", "iid_sum", "n=4", "family=rademacher", "--x", "0", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ratio=0.625" in out
    assert (tmp_path / "pmf.csv").exists() and (tmp_path / "results.csv").exists()
    assert main(["oracle", "hom_sum", "n=30", "q=2", "perfect_matching=true"]) == EXIT_CAPABILITY
    assert main(["oracle", "iid_sum", "n=0"]) == EXIT_INVALID


def test_wasserstein_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    np.savetxt(tmp_path / "x.txt", X)
    np.savetxt(tmp_path / "y.txt", X + [3.0, 4.0])
    assert main(["wasserstein", str(tmp_path / "x.txt"), str(tmp_path / "y.txt"), "--p", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "assignment" and abs(doc["distance"] - 5.0) <= 1e-10
    np.savetxt(tmp_path / "z.txt", rng.normal(size=50))
    assert main(["wasserstein", str(tmp_path / "z.txt")]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert math.isfinite(doc["distance"]) and doc["p"] == 1.0
    assert main(["wasserstein", str(tmp_path / "x.txt")]) == EXIT_INVALID
    assert main(["wasserstein", str(tmp_path / "missing.txt")]) == EXIT_INVALID
