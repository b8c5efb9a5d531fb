import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asynclti import AsyncConfig, LtiSystem, NoiseSpec, Trajectory, ValidationError, delay_pmf, validate_system
from asynclti.model import load_system_file, parse_system_spec


def fields(report):
    return {v.field for v in report.violations}


def test_valid_minimal_system_passes():
    rep = validate_system(LtiSystem(np.eye(2), np.ones((2, 1))), AsyncConfig(1, 1, 0), NoiseSpec(np.eye(1), 1.0))
    assert rep.ok and bool(rep)


def test_zero_p_is_reported():
    rep = validate_system(LtiSystem(np.eye(2), np.ones((2, 1))), AsyncConfig(0.0, 1, 0))
    assert not rep.ok
    assert [str(v) for v in rep.violations] == ["p: p must lie in (0,1]"]


def test_indefinite_U_is_reported():
    U = np.diag([1.0, -0.5])
    rep = validate_system(LtiSystem(np.eye(2), np.ones((2, 2))), None, NoiseSpec(U, 1.0))
    assert any(v.message == "U must be positive semidefinite" for v in rep.violations)


def test_multiple_violations_are_all_listed():
    rep = validate_system(LtiSystem(np.ones((2, 3)), np.ones((3, 1))),
                          AsyncConfig(1.5, 0.0, -1), NoiseSpec(np.ones((2, 2)), -1.0))
    assert {"A", "B", "p", "q", "h", "U", "sigma_w2"} <= fields(rep)
    with pytest.raises(ValidationError):
        rep.raise_if_invalid()


def test_non_finite_entries_are_reported():
    A = np.array([[np.nan, 0], [0, np.inf]])
    rep = validate_system(LtiSystem(A, np.ones((2, 1))))
    assert "A" in fields(rep)


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=True, allow_infinity=True), st.floats(allow_nan=True, allow_infinity=True),
       st.integers(-3, 5), st.floats(allow_nan=True, allow_infinity=True))
def test_validate_is_total(p, q, h, s2):
    validate_system(LtiSystem(np.eye(2), np.ones((2, 1))), AsyncConfig(p, q, h), NoiseSpec(np.eye(1), s2))


@pytest.mark.parametrize("q,h,expected", [
    (1.0, 5, [1, 0, 0, 0, 0, 0]),
    (0.3, 0, [1.0]),
    (0.5, 2, [0.5, 0.25, 0.25]),
])
def test_delay_pmf_examples(q, h, expected):
    assert np.array_equal(delay_pmf(AsyncConfig(1.0, q, h)), expected)


def test_delay_pmf_is_probability_vector_on_grid():
    for q in np.linspace(0.01, 1.0, 100):
        for h in range(11):
            pmf = delay_pmf(AsyncConfig(1.0, q, h))
            assert pmf.shape == (h + 1,)
            assert np.all(pmf >= 0)
            assert abs(pmf.sum() - 1.0) <= 1e-15


def test_types_are_immutable():
    s = LtiSystem(np.eye(2), np.ones((2, 1)))
    with pytest.raises(ValueError):
        s.A[0, 0] = 3.0
    with pytest.raises(Exception):
        s.A = np.zeros((2, 2))


def test_trajectory_length_invariant():
    with pytest.raises(ValidationError):
        Trajectory(np.zeros((3, 2)), np.zeros((3, 1)))
    t = Trajectory(np.zeros((4, 2)), np.zeros((3, 1)))
    assert t.steps == 3 and t.prefix(2).states.shape == (3, 2)


def test_system_file_roundtrip(tmp_path):
    doc = {"A": [[0.5, 0.1], [0.0, 0.2]], "B": [[1.0], [0.0]], "U": [[2.0]], "sigma_w2": 0.3,
           "async": {"p": 0.4, "q": 0.7, "h": 2}}
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(doc))
    system, noise, cfg = load_system_file(path)
    assert system.A.tolist() == doc["A"]
    assert noise.sigma_w2 == 0.3 and noise.U.tolist() == [[2.0]]
    assert cfg == AsyncConfig(0.4, 0.7, 2)


def test_system_file_defaults_and_errors(tmp_path):
    system, noise, cfg = parse_system_spec({"A": [[0.5]], "B": [[1.0, 2.0]]})
    assert cfg is None and noise.U.shape == (2, 2) and noise.sigma_w2 == 1.0
    with pytest.raises(ValidationError, match="missing"):
        parse_system_spec({"A": [[1]]})
    bad = tmp_path / "bad.json"
    bad.write_text('{"A": [[1, 2],\n  [3 4]]}')
    with pytest.raises(ValidationError, match="line 2, column"):
        load_system_file(bad)
