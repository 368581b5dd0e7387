import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rps.coeff import CoeffSpec, evaluate, sample
from rps.errors import CoefficientError, ConfigurationError
from rps.mesh import build_structured, refine


def direct_trig(x, y):
    s, c, tp = np.sin, np.cos, 2 * np.pi
    e = [1 / 5, 1 / 13, 1 / 17, 1 / 31, 1 / 65]
    return (1 / 6) * ((1.1 + s(tp * x / e[0])) / (1.1 + s(tp * y / e[0]))
                      + (1.1 + s(tp * y / e[1])) / (1.1 + c(tp * x / e[1]))
                      + (1.1 + c(tp * x / e[2])) / (1.1 + s(tp * y / e[2]))
                      + (1.1 + s(tp * y / e[3])) / (1.1 + c(tp * x / e[3]))
                      + (1.1 + c(tp * x / e[4])) / (1.1 + s(tp * y / e[4]))
                      + s(4 * x**2 * y**2) + 1)


def test_trig_at_origin():
    v = evaluate(CoeffSpec.trig_multiscale_2d(), [0.0, 0.0])
    assert np.isclose(v, direct_trig(0.0, 0.0), rtol=1e-14)
    assert abs(v - 1.144303) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_trig_matches_direct_formula(x, y):
    assert np.isclose(evaluate(CoeffSpec.trig_multiscale_2d(), [x, y]), direct_trig(x, y),
                      rtol=1e-13)


def test_constant():
    assert evaluate(CoeffSpec.constant(1.0), [0.3, 0.7]) == 1.0
    m = refine(build_structured(2, 4), 1)
    assert np.all(sample(CoeffSpec.constant(2.0), m).values == 2.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1))
def test_random_field_bounds(seed, x):
    v = evaluate(CoeffSpec.random_fourier_1d(seed), [x])
    assert 0.5 <= v <= 1.5


def test_random_field_determinism_and_seed_sensitivity():
    m = refine(build_structured(1, 81), 3)
    a = sample(CoeffSpec.random_fourier_1d(20140101), m).values
    b = sample(CoeffSpec.random_fourier_1d(20140101), m).values
    c = sample(CoeffSpec.random_fourier_1d(20140102), m).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_trig_positive_on_fine_grid():
    m = refine(build_structured(2, 32), 3)
    a = sample(CoeffSpec.trig_multiscale_2d(), m)
    assert a.lambda_min > 0
    assert a.lambda_max / a.lambda_min < 1e3


def test_nonpositive_coefficient_rejected():
    with pytest.raises(CoefficientError):
        sample(CoeffSpec.constant(-1.0), build_structured(2, 2))


def test_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        sample(CoeffSpec.trig_multiscale_2d(), build_structured(1, 4))
    with pytest.raises(ConfigurationError):
        CoeffSpec("nope")


def test_dict_roundtrip():
    s = CoeffSpec.random_fourier_1d(5, K=7)
    assert CoeffSpec.from_dict(s.to_dict()) == s
