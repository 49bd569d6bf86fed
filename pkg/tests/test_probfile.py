import json

import numpy as np
import pytest

from sgsadmm.instances import PRESET_NAMES, make_preset
from sgsadmm.probfile import ParseError, read_problem, to_dict, write_problem


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_round_trip_is_bit_exact(name):
    spec = make_preset(name)
    path = f"/tmp/sgsadmm_test_{name}.prob"
    write_problem(spec, path)
    back = read_problem(path)
    assert back.x_structure == spec.x_structure
    assert back.y_structure == spec.y_structure
    assert back.z_dim == spec.z_dim
    assert np.array_equal(back.A.matrix, spec.A.matrix)
    assert np.array_equal(back.B.matrix, spec.B.matrix)
    assert np.array_equal(back.c, spec.c)
    assert np.array_equal(back.f.Q.matrix, spec.f.Q.matrix)
    assert np.array_equal(back.f.lin, spec.f.lin)
    assert back.f.const == spec.f.const
    assert back.f.majorizer_mode == spec.f.majorizer_mode
    assert back.g.minorizer_mode == spec.g.minorizer_mode
    assert back.p1.kind == spec.p1.kind
    assert back.q1.kind == spec.q1.kind
    if spec.p1.kind == "l1":
        assert back.p1.lam == spec.p1.lam
    if spec.q1.kind == "box":
        assert np.array_equal(back.q1.lo, spec.q1.lo)
        assert np.array_equal(back.q1.hi, spec.q1.hi)


def test_missing_field_is_named(tmp_path):
    doc = to_dict(make_preset("tiny"))
    del doc["c"]
    path = tmp_path / "broken.prob"
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError, match="'c'"):
        read_problem(path)


def test_bad_json_reports_location(tmp_path):
    path = tmp_path / "garbage.prob"
    path.write_text('{"x_blocks": [1], "y_blocks": [1Elephant]}')
    with pytest.raises(ParseError, match="line 1"):
        read_problem(path)


def test_wrong_array_length(tmp_path):
    doc = to_dict(make_preset("tiny"))
    doc["A"] = [1.0, 2.0]
    path = tmp_path / "badA.prob"
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError, match="'A'"):
        read_problem(path)


def test_inconsistent_dimensions(tmp_path):
    doc = to_dict(make_preset("tiny"))
    doc["p1"] = {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}
    path = tmp_path / "badp1.prob"
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        read_problem(path)
