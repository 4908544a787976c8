import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from habitfbp import report


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_round_trips_floats(tmp_path_factory, xs):
    p = tmp_path_factory.mktemp("c") / "a.csv"
    report.write_csv(p, {"x": np.array(xs)})
    raw = p.read_bytes()
    lines = raw.split(b"\r\n")
    assert lines[0] == b"x" and lines[-1] == b""
    assert [float(t) for t in lines[1:-1]] == [float(x) for x in xs]


def test_csv_nonfinite_and_length(tmp_path):
    report.write_csv(tmp_path / "a.csv", {"a": [1.0, math.nan], "b": ["u", "v"]})
    assert (tmp_path / "a.csv").read_bytes() == b"a,b\r\n1.0,u\r\n,v\r\n"
    with pytest.raises(ValueError):
        report.write_csv(tmp_path / "b.csv", {"a": [1.0], "b": [1.0, 2.0]})


def test_json_is_stable():
    s = report.dumps({"b": np.float64(np.inf), "a": np.arange(2), "c": np.bool_(True)})
    assert json.loads(s) == {"a": [0, 1], "b": None, "c": True}
    assert s.index('"a"') < s.index('"b"') and s.endswith("\n")


def test_svg_is_well_formed(tmp_path):
    x = np.linspace(0.1, 10, 50)
    report.line_chart(tmp_path / "c.svg", [("a<b", x, np.log(x)), ("nan", x, np.full_like(x, np.nan))],
                      title="t & u", vlines=[(1.0, "x0", 0)], logx=True)
    root = ET.parse(tmp_path / "c.svg").getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1
