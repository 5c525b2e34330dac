import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from dpconsensus.noise import (
    ClientStreams,
    NoiseSchedule,
    laplace_pdf,
    laplace_quantile,
    sample_laplace,
    schedule_scale,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
scales = st.floats(1e-2, 1e2)


@pytest.mark.parametrize(
    "x, b, expected",
    [(0.0, 1.0, 0.5), (1.0, 1.0, math.exp(-1) / 2), (-2.0, 0.5, math.exp(-4))],
)
def test_pdf_values(x, b, expected):
    assert laplace_pdf(x, b) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("b", [0.0, -1.0])
def test_pdf_rejects_nonpositive_scale(b):
    with pytest.raises(ValueError):
        laplace_pdf(0.0, b)


@pytest.mark.parametrize("b", [0.3, 1.0, 7.0])
def test_pdf_normalised(b):
    left, _ = integrate.quad(laplace_pdf, -50 * b, 0, args=(b,), epsabs=1e-13)
    right, _ = integrate.quad(laplace_pdf, 0, 50 * b, args=(b,), epsabs=1e-13)
    assert abs(left + right - 1.0) < 1e-9


@given(finite, finite, scales)
def test_pdf_ratio_bound(x, y, b):
    px, py = laplace_pdf(x, b), laplace_pdf(y, b)
    assume(px > 0 and py > 0)
    assert math.log(px) - math.log(py) <= abs(x - y) / b + 1e-9


@given(finite, scales)
def test_pdf_symmetric(x, b):
    assert laplace_pdf(x, b) == laplace_pdf(-x, b)


def test_quantile_matches_cdf():
    # Laplace CDF: F(z) = 1/2 + sign(z)/2 * (1 - exp(-|z|/b)); quantile(u) solves F(z) = u + 1/2
    u = np.linspace(-0.499, 0.499, 101)
    z = laplace_quantile(u, 2.0)
    cdf = 0.5 + 0.5 * np.sign(z) * (1 - np.exp(-np.abs(z) / 2.0))
    np.testing.assert_allclose(cdf, u + 0.5, atol=1e-12)


def test_sample_moments_unit_scale():
    x = sample_laplace(1.0, np.random.default_rng(0), size=1_000_000)
    assert 1.98 <= x.var() <= 2.02
    assert abs(x.mean()) < 0.01


def test_sample_tail_fraction():
    b = 2.0
    x = sample_laplace(b, np.random.default_rng(1), size=1_000_000)
    # P(|X| > z) = exp(-z / b) = 1/4 at z = 2 ln 2 * b
    assert np.mean(np.abs(x) > 2 * math.log(2) * b) == pytest.approx(0.25, abs=0.003)


def test_zero_scale_is_point_mass():
    rng = np.random.default_rng(2)
    assert sample_laplace(0.0, rng) == 0.0
    assert np.all(sample_laplace(0.0, rng, size=10) == 0.0)


def test_negative_scale_rejected():
    with pytest.raises(ValueError):
        sample_laplace(-1.0, np.random.default_rng(0))


def test_endpoint_uniform_is_redrawn():
    class Stub:
        def __init__(self):
            self.values = [np.array([0.0, 0.75]), np.array([0.25])]

        def random(self, size=None):
            return self.values.pop(0)

    out = sample_laplace(1.0, Stub(), size=2)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, laplace_quantile(np.array([-0.25, 0.25])))


@pytest.mark.parametrize(
    "c, q, t, expected", [(10, 0.9, 0, 10.0), (10, 0.9, 2, 8.1), (10, 0.5, 20, 10 * 2**-20)]
)
def test_schedule_scale(c, q, t, expected):
    assert schedule_scale(NoiseSchedule(c, q), t) == pytest.approx(expected, rel=1e-14)


def test_schedule_decreasing():
    s = NoiseSchedule(3.0, 0.7).scales(50)
    assert np.all(np.diff(s) < 0)


@pytest.mark.parametrize("c, q", [(-1, 0.5), (1, 0.0), (1, 1.0), (1, 1.5)])
def test_schedule_validation(c, q):
    with pytest.raises(ValueError):
        NoiseSchedule(c, q)


def test_client_streams_are_independent_of_horizon():
    a = ClientStreams(42, 5).standard_noise(10)
    s = ClientStreams(42, 5)
    b = np.vstack([s.standard_noise(4), s.standard_noise(6)])
    np.testing.assert_array_equal(a, b)
    # client i's stream does not depend on how many clients exist
    c = ClientStreams(42, 8).standard_noise(10)
    assert not np.array_equal(a[:, 0], c[:, 1])
    np.testing.assert_array_equal(ClientStreams(42, 5).standard_noise(3), a[:3])
