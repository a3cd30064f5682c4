import json

import pytest

from cartan_kit.cli import EXAMPLES, main
from cartan_kit.dsl import emit_report


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_empty_report_is_exact():
    assert emit_report([]) == '{"schema":"cartan-kit/1","tasks":[]}'


def test_file_without_tasks_passes_vacuously(tmp_path, capsys):
    f = tmp_path / "empty.ck"
    f.write_text("chart M { coords x in (0, 1); }\n")
    code, out, _ = run(capsys, "run", str(f))
    assert code == 0 and out == '{"schema":"cartan-kit/1","tasks":[]}\n'


def test_flat_example(capsys):
    code, out, _ = run(capsys, "examples", "flat")
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == "cartan-kit/1"
    analyze = [t for t in rep["tasks"] if t["kind"] == "analyze"][0]
    assert analyze["pass"] is True and analyze["data"]["chain"]["rank"] == 0
    assert all(v == "0" for v in analyze["data"]["structure_functions"].values())
    for t in rep["tasks"]:
        for c in t["checks"]:
            assert {"name", "value", "tol", "seed", "pass"} <= set(c)


@pytest.mark.parametrize("name", EXAMPLES)
def test_every_example_passes(name, capsys):
    code, out, err = run(capsys, "examples", name)
    assert code == 0, err
    assert all(t["pass"] for t in json.loads(out)["tasks"])


def test_malformed_file_exits_2_with_position(tmp_path, capsys):
    f = tmp_path / "bad.ck"
    f.write_text("chart M {\n  coords x in (0, 1)\n}\n")
    code, out, err = run(capsys, "run", str(f))
    assert code == 2
    assert f"{f}:3:1" in err
    rep = json.loads(out)
    assert rep["tasks"] == [] and rep["errors"]


def test_failing_task_exits_1(tmp_path, capsys):
    f = tmp_path / "fail.ck"
    f.write_text("chart R2 { coords x in (-1, 1), y in (-1, 1); }\n"
                 "coframe c on R2 { a = d[x]; b = exp(x)*d[y]; }\n"
                 "task analyze wrong { coframe = c; point = (x = 0, y = 0); expect rank = 2; }\n")
    code, out, err = run(capsys, "run", str(f))
    assert code == 1 and "wrong" in err
    t = json.loads(out)["tasks"][0]
    assert t["pass"] is False and t["data"]["chain"]["rank"] == 0


def test_runtime_error_is_reported_as_failure(tmp_path, capsys):
    f = tmp_path / "outside.ck"
    f.write_text("chart M { coords x in (0, 1), y in (0, 1); }\ncoframe c on M { a = d[x]; b = d[y]; }\n"
                 "task analyze far { coframe = c; point = (x = 5, y = 0.5); }\n")
    code, out, _ = run(capsys, "run", str(f))
    t = json.loads(out)["tasks"][0]
    assert code == 1 and t["pass"] is False and "outside" in t["error"] and t["seed"] is not None


def test_reports_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["examples", "surfaces-of-revolution", "--out", str(a)]) == 0
    assert main(["examples", "surfaces-of-revolution", "--out", str(b)]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_seed_is_recorded(capsys):
    code, out, _ = run(capsys, "examples", "so3", "--seed", "7")
    assert code == 0
    assert all(t["seed"] == 7 for t in json.loads(out)["tasks"])


def test_kind_subcommand_and_task_filter(tmp_path, capsys):
    f = tmp_path / "s.ck"
    code, text, _ = run(capsys, "examples", "surfaces-of-revolution", "--show")
    f.write_text(text)
    code, out, _ = run(capsys, "isotropy", str(f))
    kinds = {t["kind"] for t in json.loads(out)["tasks"]}
    assert code == 0 and kinds == {"isotropy"}
    code, out, _ = run(capsys, "run", str(f), "--task", "same-height")
    assert code == 0 and [t["name"] for t in json.loads(out)["tasks"]] == ["same-height"]
    code, _, err = run(capsys, "run", str(f), "--task", "nope")
    assert code == 2 and "nope" in err


def test_bad_flags_and_unknown_example(capsys):
    assert run(capsys, "examples", "flat", "--trials", "0")[0] == 2
    assert run(capsys, "examples", "nowhere")[0] == 2
    code, out, _ = run(capsys, "examples")
    assert code == 0 and out.split() == list(EXAMPLES)


def test_fmt_is_idempotent(tmp_path, capsys):
    f = tmp_path / "x.ck"
    f.write_text("chart M{coords x in(0,1),y in(0,1);}coframe c on M{a=d[x];b=0.5*d[y];}")
    code, once, _ = run(capsys, "fmt", str(f))
    assert code == 0 and "1/2" not in once
    f.write_text(once)
    assert run(capsys, "fmt", str(f))[1] == once


def test_one_dimensional_coframe(tmp_path, capsys):
    f = tmp_path / "line.ck"
    f.write_text("chart L { coords s in (0, 1); }\ncoframe c on L { a = exp(s)*d[s]; }\n"
                 "task analyze line { coframe = c; point = (s = 0.5); expect rank = 0; }\n")
    code, out, _ = run(capsys, "run", str(f))
    assert code == 0 and json.loads(out)["tasks"][0]["data"]["structure_functions"] == {}
