import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from conftest import FIXTURES, kink_minus_y
from varcalc._parallel import max_workers
from varcalc.cli import build_report, main
from varcalc.cli.commands import Flags
from varcalc.cli.parser import ParseError, parse, parse_expr, render, var_names
from varcalc.cli.report import SCHEMA_VERSION, dumps
from varcalc.functions import Abs, Sub, Var
from varcalc.geometry import same_set

SCHEMA = json.loads((Path(__file__).resolve().parent.parent / "docs" / "report_schema.json").read_text())
MANIFEST = json.loads((FIXTURES / "expected_exit.json").read_text())
VALID = sorted(p for p in FIXTURES.rglob("*.vc") if "invalid" not in p.parts)

# (file, line, column, message fragment)
PARSE_ERRORS = [
    ("inconsistent_pieces.vc", 4, 1, "disagree"),
    ("no_pieces.vc", 4, 1, "no pieces"),
    ("nonaffine_domain.vc", 6, 14, "affine"),
    ("point_dimension.vc", 9, 8, "2 entries"),
    ("unbalanced_parenthesis.vc", 6, 17, "end of expression"),
    ("unknown_key.vc", 8, 1, "unknown key 'colour'"),
    ("unknown_section.vc", 4, 2, "unknown section"),
    ("unknown_variable.vc", 6, 13, "unknown variable 'z1'"),
]


def flags_from(args):
    # the manifest only uses --force
    return Flags(force="--force" in args)


def encoded(rep) -> dict:
    return json.loads(dumps(rep))


def report_for(entry):
    path = FIXTURES / entry["file"]
    return build_report(entry["command"], str(path), path.read_text(), flags_from(entry["flags"]))


# ---------------------------------------------------------------- parsing


def test_expression_parsing():
    assert parse_expr("abs(x1)-y1", var_names(1, 1)) == Sub(Abs(Var(0)), Var(1))


@pytest.mark.parametrize("name,line,col,frag", PARSE_ERRORS, ids=[e[0] for e in PARSE_ERRORS])
def test_parse_errors_carry_position(name, line, col, frag):
    with pytest.raises(ParseError) as info:
        parse((FIXTURES / "invalid" / name).read_text())
    e = info.value
    assert (e.line, e.column) == (line, col) and frag in e.message


@pytest.mark.parametrize("path", VALID, ids=[str(p.relative_to(FIXTURES)) for p in VALID])
def test_render_round_trip(path):
    pf = parse(path.read_text())
    text = render(pf)
    assert parse(text) == pf
    assert render(parse(text)) == text


def test_fixture_matches_hand_built_problem():
    pf = parse((FIXTURES / "kink_minus_y.vc").read_text())
    P = kink_minus_y()
    assert same_set(pf.maps["G"].graph, P.G.graph)
    assert pf.functions["phi"].function == P.phi
    assert pf.xbar == P.xbar and pf.ybar == P.ybar


# ---------------------------------------------------------------- reports


def test_subdiff_report_on_kink_example():
    text = (FIXTURES / "kink_minus_y.vc").read_text()
    rep, code = build_report("subdiff", "kink_minus_y.vc", text, Flags())
    assert code == 0 and rep["schema_version"] == SCHEMA_VERSION
    piece = encoded(rep)["results"]["regular"]["pieces"][0]["v"]
    assert sorted(piece["points"]) == [[-1, -1], [1, -1]] and not piece["rays"]


@pytest.mark.parametrize("entry", MANIFEST, ids=[f"{e['command']}-{e['file']}{'-' + '-'.join(e['flags']) if e['flags'] else ''}" for e in MANIFEST])
def test_exit_codes_and_schema(entry):
    rep, code = report_for(entry)
    assert code == entry["exit"] == rep["exit_code"]
    jsonschema.validate(encoded(rep), SCHEMA)


def test_error_report_shape():
    path = FIXTURES / "invalid" / "unknown_key.vc"
    rep, code = build_report("subdiff", str(path), path.read_text(), Flags())
    assert code == 4
    assert rep["error"] == {"kind": "parse", "message": "unknown key 'colour' in section [function]", "line": 8, "column": 1}


def test_main_writes_identical_json(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["subdiff", str(FIXTURES / "kink_minus_y.vc"), "--json", str(out)])
    assert code == 0
    assert capsys.readouterr().out == out.read_text()


def test_main_reports_position_on_stderr(capsys):
    path = FIXTURES / "invalid" / "unknown_variable.vc"
    assert main(["subdiff", str(path)]) == 4
    assert f"{path}:6:13: unknown variable" in capsys.readouterr().err


def test_bad_arguments_exit_with_input_error():
    with pytest.raises(SystemExit) as info:
        main(["no-such-command", str(FIXTURES / "kink_minus_y.vc")])
    assert info.value.code == 4
    assert main(["subdiff", "/nonexistent/file.vc"]) == 4


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [0.5, float("inf")]}) == dumps({"a": [0.5, float("inf")], "b": 1})


def test_reports_are_byte_identical_across_runs():
    for entry in MANIFEST[::7]:
        a, _ = report_for(entry)
        b, _ = report_for(entry)
        assert dumps(a) == dumps(b)


def test_thread_cap_does_not_change_output(monkeypatch):
    entry = {"command": "oracle-compare", "file": "oracle/kink_minus_y_regular.vc", "flags": []}
    monkeypatch.setenv("VARCALC_THREADS", "1")
    assert max_workers() == 1
    one = dumps(report_for(entry)[0])
    monkeypatch.setenv("VARCALC_THREADS", "3")
    assert one == dumps(report_for(entry)[0])


def test_console_script_runs_in_a_fresh_process():
    env = dict(os.environ, VARCALC_THREADS="2")
    cmd = [sys.executable, "-c", "import sys; from varcalc.cli import main; sys.exit(main())", "normal-cone", str(FIXTURES / "kink_minus_y.vc")]
    runs = [subprocess.run(cmd, capture_output=True, env=env) for _ in range(2)]
    assert runs[0].returncode == 0 and runs[0].stdout == runs[1].stdout
    jsonschema.validate(json.loads(runs[0].stdout), SCHEMA)
