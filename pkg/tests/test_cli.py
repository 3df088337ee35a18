import csv
import io
import json
import math
import subprocess
import sys
import textwrap

import pytest

from shockratio.cli import fmt, load_spec, main, parse_schedule, render_csv
from shockratio.errors import ParseError

from conftest import binomial_c

BINOMIAL = 'distribution = { kind = "discrete", preset = "binomial" }'
F1 = 'distribution = { kind = "continuous", family = "f1" }'
UNIFORM = 'distribution = { kind = "continuous", family = "constant", c = 1, eps = 1 }'
SQRT = 'distribution = { kind = "continuous", family = "power_law", alpha = 0.5 }'

GOLDEN_HEADERS = {
    "classify": "id,label,condition_c,evidence",
    "survival": "n,c_n,log_c_n,error_bound,method",
    "ratio": "n,ratio",
    "rate-law": "n,c_n,ratio,deviation",
    "monotone": "n,monotone,t_violation,drop,threshold_n",
    "equivalence": "n,ratio,integral,quotient",
    "cramer": "n,asymptotic,log_asymptotic,ratio_limit,h_inf,ld_rate,sigma_bar",
    "bounds": "n,log_rate,ld_lower,ld_upper,rl_lower,rl_upper,in_ld,in_rl,rl_inside_ld",
    "mc-check": "n,estimate,stderr,samples,method,lam,reference,z_score",
}

TASK_BODIES = {
    "classify": (F1, "x = 1", "n_schedule = [1]", ""),
    "survival": (BINOMIAL, "x = 2.5", "n_schedule = [1, 2, 3]", ""),
    "ratio": (UNIFORM, "x = 0.8", "n_schedule = [1, 2, 3]", ""),
    "rate-law": (BINOMIAL, "x = 2.5", "n_schedule = [10, 20]", ""),
    "monotone": (SQRT, "x = 0.9", "n_schedule = [1, 2, 3]", "options = { n_cap = 4 }"),
    "equivalence": (SQRT, "x = 0.9", "n_schedule = [100, 500]", ""),
    "cramer": (F1, "x = 0.5", "n_schedule = [20, 40]", ""),
    "bounds": (BINOMIAL, "x = 2.5", "n_schedule = [1000, 5000]", ""),
    "mc-check": (BINOMIAL, "x = 2.5", "n_schedule = [10]", "options = { seed = 3, samples = 5000 }"),
}


def experiment(id_, task, *lines):
    body = "\n".join(l for l in lines if l)
    return f'[[experiment]]\nid = "{id_}"\ntask = "{task}"\n{body}\n'


def write(tmp_path, text, name="spec.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.mark.parametrize("task", sorted(GOLDEN_HEADERS))
def test_golden_headers(tmp_path, task):
    spec = write(tmp_path, experiment("t", task, *TASK_BODIES[task]))
    assert main(["run", str(spec), "--out-dir", str(tmp_path / "out")]) == 0
    raw = (tmp_path / "out" / "t.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines()[0] == GOLDEN_HEADERS[task]


def test_rate_law_values(tmp_path):
    spec = write(tmp_path, experiment("rate", "rate-law", BINOMIAL, "x = 2.5",
                                      'n_schedule = { kind = "geometric", start = 10, stop = 10000, num = 7 }'))
    assert main(["run", str(spec)]) == 0
    rows = read_csv(tmp_path / "rate.csv")
    assert [int(r["n"]) for r in rows] == [10, 32, 100, 316, 1000, 3162, 10000]
    assert rows[0]["c_n"] == repr(float(binomial_c(10)))
    n = 10
    assert float(rows[0]["ratio"]) == pytest.approx(float(binomial_c(n + 1) / binomial_c(n)), rel=1e-15)
    assert abs(float(rows[-1]["deviation"]) - 1) < 0.02


def test_classify_f1(tmp_path):
    spec = write(tmp_path, experiment("c", "classify", *TASK_BODIES["classify"]))
    assert main(["run", str(spec)]) == 0
    (row,) = read_csv(tmp_path / "c.csv")
    assert row["label"] == "C-none (real-supported law)"
    assert row["condition_c"] == "yes"


def test_survival_exact_fractions(tmp_path):
    spec = write(tmp_path, experiment("s", "survival", *TASK_BODIES["survival"]))
    assert main(["run", str(spec)]) == 0
    rows = read_csv(tmp_path / "s.csv")
    assert [float(r["c_n"]) for r in rows] == [float(binomial_c(n)) for n in (1, 2, 3)]


def test_bounds_flags(tmp_path):
    spec = write(tmp_path, experiment("b", "bounds", *TASK_BODIES["bounds"]))
    assert main(["run", str(spec)]) == 0
    for r in read_csv(tmp_path / "b.csv"):
        assert r["in_ld"] == r["in_rl"] == r["rl_inside_ld"] == "true"


def test_byte_identical_reruns(tmp_path):
    text = experiment("mc", "mc-check", *TASK_BODIES["mc-check"]) + experiment("r", "ratio", *TASK_BODIES["ratio"])
    spec = write(tmp_path, text)
    assert main(["run", str(spec), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["run", str(spec), "--out-dir", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("mc.csv", "r.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override(tmp_path):
    spec = write(tmp_path, experiment("mc", "mc-check", *TASK_BODIES["mc-check"]))
    assert main(["run", str(spec), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["run", str(spec), "--out-dir", str(tmp_path / "b"), "--seed", "0x10"]) == 0
    a = read_csv(tmp_path / "a" / "mc.csv")[0]
    b = read_csv(tmp_path / "b" / "mc.csv")[0]
    assert a["estimate"] != b["estimate"]
    man = json.loads((tmp_path / "b" / "spec.manifest.json").read_text())
    assert man["experiments"][0]["seed"] == 16


def test_manifest(tmp_path):
    spec = write(tmp_path, experiment("r", "ratio", *TASK_BODIES["ratio"]))
    assert main(["run", str(spec)]) == 0
    man = json.loads((tmp_path / "spec.manifest.json").read_text())
    assert set(man) >= {"spec", "inputs_sha256", "library_version", "kernel_backend", "wall_time_s", "experiments"}
    assert man["experiments"][0]["csv"] == "r.csv"
    assert len(man["inputs_sha256"]) == 64


@pytest.mark.parametrize(
    "text",
    [
        experiment("e", "ratio", UNIFORM, "x = 0.8", "n_schedule = []"),
        experiment("e", "ratio", UNIFORM, "x = 0.8", "n_schedule = [3, 2]"),
        experiment("e", "ratio", UNIFORM, "x = 0.8", "n_schedule = [1]", "colour = 1"),
        experiment("e", "ratio", UNIFORM, "x = 0.8", "n_schedule = [1]", "options = { stepp = 0.1 }"),
        experiment("e", "nonsense", UNIFORM, "x = 0.8", "n_schedule = [1]"),
        "[[experiment]\nid = 1\n",
        experiment("e", "ratio", UNIFORM, "x = 0.8", "n_schedule = [1]") * 2,
    ],
)
def test_parse_errors(tmp_path, text):
    spec = write(tmp_path, text)
    with pytest.raises(ParseError):
        load_spec(spec)
    assert main(["validate", str(spec)]) == 2
    assert main(["run", str(spec)]) == 2


def test_schedules():
    assert parse_schedule({"kind": "linear", "start": 2, "stop": 10, "step": 4}) == (2, 6, 10)
    assert parse_schedule({"kind": "geometric", "start": 10, "stop": 1000, "num": 3}) == (10, 100, 1000)
    with pytest.raises(ParseError):
        parse_schedule({"kind": "geometric", "start": 10, "stop": 1000})


def test_unsupported_combinations(tmp_path):
    spec = write(tmp_path, experiment("u", "cramer", *TASK_BODIES["survival"]))
    assert main(["validate", str(spec)]) == 3
    assert main(["run", str(spec)]) == 3
    single = write(tmp_path, experiment("u", "survival", BINOMIAL, "x = 2.5", "n_schedule = [3]",
                                        'methods = ["exact"]'), "single.toml")
    assert main(["compare", str(single)]) == 3


def test_engine_error_exit(tmp_path):
    # a step too coarse for level 500 makes the grid engine fail
    spec = write(tmp_path, experiment("g", "survival", UNIFORM, "x = 0.8", "n_schedule = [500]",
                                      'options = { engine = "grid", step = 0.01 }'))
    assert main(["run", str(spec)]) == 4


def test_compare_exact_vs_grid(tmp_path):
    spec = write(tmp_path, experiment("cmp", "survival", UNIFORM, "x = 0.8",
                                      'n_schedule = { kind = "linear", start = 1, stop = 12, step = 1 }',
                                      'methods = ["exact", "grid"]', 'options = { step = 1e-3 }'))
    assert main(["compare", str(spec)]) == 0
    rows = read_csv(tmp_path / "cmp.compare.csv")
    assert list(rows[0]) == ["n", "exact", "grid", "reldiff_exact_grid", "logdiff_exact_grid"]
    for r in rows:
        n = int(r["n"])
        assert float(r["exact"]) == pytest.approx(0.8**n / math.factorial(n), rel=1e-12)
    assert max(float(r["reldiff_exact_grid"]) for r in rows) < 1e-3


def test_compare_cramer_vs_tilted_mc(tmp_path):
    spec = write(tmp_path, experiment("f1", "survival", F1, "x = 0.5", "n_schedule = [20, 40, 60]",
                                      'methods = ["cramer-asymptotic", "mc-tilted"]',
                                      "options = { seed = 7, samples = 200000 }"))
    assert main(["compare", str(spec)]) == 0
    rows = read_csv(tmp_path / "f1.compare.csv")
    assert "stderr_mc-tilted" in rows[0]
    gaps = [abs(float(r["logdiff_cramer-asymptotic_mc-tilted"])) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]


def test_fmt_and_render():
    assert fmt(0.1) == "0.1"
    assert fmt(True) == "true" and fmt(False) == "false"
    assert fmt(1e-300) == "1e-300"
    blob = render_csv(["n", "v"], [[3, 0.5], [1, 2.0]])
    assert blob == b"n,v\n1,2.0\n3,0.5\n"


def test_module_entry_point(tmp_path):
    spec = write(tmp_path, experiment("r", "ratio", *TASK_BODIES["ratio"]))
    res = subprocess.run([sys.executable, "-m", "shockratio", "validate", str(spec)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "1 experiment(s) OK" in res.stdout
