import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepopt import specfile
from sweepopt.errors import SpecParseError
from sweepopt.switching_example import example_problem

from oracles import random_problem

ROW_SPEC = """meta: {name: tiny}
dims: {n: 2, d: 1}
polyhedron:
  rows:
  - normal: [%s]
    offset0: 1.0
    offset_slope: 0.0
dynamics: {A: [[0, 0], [0, 0]], B: [[0], [1]], c: [0, 0]}
controls: {lo: [-1], hi: [1]}
cost: {wT: 1.0, W: [1, 0], xref: [0, 0]}
endpoint: {E: [], e: [], T_interval: [0, 2]}
init: {x0: [0, 0]}
"""


def test_bundled_example_is_the_benchmark():
    P = specfile.load(specfile.bundled_example_path())
    assert P == example_problem(-3.0)


def test_example_round_trip():
    P = example_problem(-2.5)
    assert specfile.loads(specfile.dumps(P)) == P


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3), s=st.integers(1, 4), with_A=st.booleans())
def test_round_trip_random_problems(seed, n, s, with_A):
    rng = np.random.default_rng(seed)
    P = random_problem(rng, n, s, with_A).replace(lipschitz=float(rng.uniform(1, 5)), name=f"p{seed}")
    assert specfile.loads(specfile.dumps(P)) == P


def test_file_round_trip(tmp_path):
    P = example_problem(-3.0)
    path = tmp_path / "p.spec"
    specfile.dump(P, path)
    assert specfile.load(path) == P


def test_zero_normal_reports_line():
    with pytest.raises(SpecParseError) as info:
        specfile.loads(ROW_SPEC % "0.0, 0.0")
    assert "zero length" in str(info.value)
    assert info.value.line == 5


def test_non_unit_normal_is_rescaled_with_warning():
    with pytest.warns(UserWarning, match="rescaled"):
        P = specfile.loads(ROW_SPEC % "2.0, 0.0")
    assert np.allclose(P.C.normals, [[1.0, 0.0]])
    assert np.allclose(P.C.offset0, [0.5])


def test_missing_section():
    text = ROW_SPEC % "1.0, 0.0"
    text = text.replace("init: {x0: [0, 0]}\n", "")
    with pytest.raises(SpecParseError, match="init"):
        specfile.loads(text)


def test_bad_yaml_has_position():
    with pytest.raises(SpecParseError) as info:
        specfile.loads("meta: {name: x\ndims: [1, 2")
    assert info.value.line is not None


def test_non_numeric_entry():
    with pytest.raises(SpecParseError, match="numeric"):
        specfile.loads(ROW_SPEC % "a, b")


def test_inconsistent_dimensions():
    text = (ROW_SPEC % "1.0, 0.0").replace("x0: [0, 0]", "x0: [0, 0, 0]")
    with pytest.raises(SpecParseError, match="inconsistent"):
        specfile.loads(text)
