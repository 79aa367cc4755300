import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_dft2, shift_by_index
from prismfp.exceptions import DimensionMismatch
from prismfp.spectrum import centralize, decentralize, dft2, to_planes

channels = st.tuples(st.integers(2, 8), st.integers(2, 8)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.integers(0, 255).map(float))
)


def test_constant_channel_is_dc_only():
    c, n_y, n_x = 17.0, 6, 10
    spec = dft2(np.full((n_y, n_x), c))
    assert spec[0, 0] == pytest.approx(c * n_x * n_y)
    rest = spec.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() < 1e-9


def test_impulse_gives_flat_spectrum():
    ch = np.zeros((4, 7))
    ch[0, 0] = 1
    np.testing.assert_allclose(dft2(ch), np.ones((4, 7)), atol=1e-15)


def test_matches_naive_double_sum_5x7(rng):
    ch = rng.integers(0, 256, (5, 7)).astype(float)
    ref = naive_dft2(ch)
    np.testing.assert_allclose(dft2(ch), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_rejects_tiny_channel():
    with pytest.raises(DimensionMismatch):
        dft2(np.zeros((1, 5)))


@settings(max_examples=60, deadline=None)
@given(channels)
def test_dft_agrees_with_oracle(ch):
    ref = naive_dft2(ch)
    scale = max(1.0, np.abs(ref).max())
    assert np.abs(dft2(ch) - ref).max() <= 1e-9 * scale


@settings(max_examples=60, deadline=None)
@given(channels)
def test_hermitian_symmetry(ch):
    spec = dft2(ch)
    n_y, n_x = spec.shape
    mirrored = spec[(-np.arange(n_y)) % n_y][:, (-np.arange(n_x)) % n_x]
    np.testing.assert_allclose(spec, np.conj(mirrored), atol=1e-9 * max(1.0, np.abs(spec).max()))


@settings(max_examples=60, deadline=None)
@given(channels)
def test_parseval(ch):
    spec = dft2(ch)
    lhs = np.sum(ch**2)
    rhs = np.sum(np.abs(spec) ** 2) / ch.size
    assert rhs == pytest.approx(lhs, rel=1e-6, abs=1e-9)


def test_centralize_moves_dc():
    spec = dft2(np.full((5, 6), 3.0))
    shifted = centralize(spec)
    assert np.unravel_index(np.argmax(np.abs(shifted)), shifted.shape) == (2, 3)


@pytest.mark.parametrize("n", [4, 5])
def test_centralize_origin_to_center(n):
    m = np.zeros((n, n), dtype=complex)
    m[0, 0] = 1
    out = centralize(m)
    assert out[2, 2] == 1 and np.count_nonzero(out) == 1


@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(1, 9), st.integers(1, 9)).flatmap(
    lambda s: arrays(np.complex128, s, elements=st.complex_numbers(max_magnitude=1e6))))
def test_centralize_matches_index_arithmetic_and_inverts(m):
    out = centralize(m)
    np.testing.assert_array_equal(out, shift_by_index(m))
    assert decentralize(out).tobytes() == m.tobytes()


def test_planes_special_values():
    z = np.array([[0 + 0j, -3 + 0j], [math.e - 1 + 0j, -0.0 - 0.0j]])
    planes = to_planes(z)
    assert planes.log_magnitude[0, 0] == 0 and planes.phase[0, 0] == 0
    assert planes.log_magnitude[0, 1] == pytest.approx(math.log(4))
    assert planes.phase[0, 1] == pytest.approx(math.pi)
    assert planes.log_magnitude[1, 0] == pytest.approx(1.0, abs=1e-15)
    assert planes.phase[1, 1] == 0


def test_phase_range_excludes_minus_pi():
    z = np.array([[-1 - 0.0j, -1 + 0.0j, 1j, -1j]])
    ph = to_planes(z).phase
    assert np.all(ph > -np.pi) and np.all(ph <= np.pi)
    assert ph[0, 0] == np.pi


@settings(max_examples=40, deadline=None)
@given(channels)
def test_planes_invariants(ch):
    planes = to_planes(centralize(dft2(ch)))
    assert np.all(planes.log_magnitude >= 0)
    assert np.all(planes.phase > -np.pi) and np.all(planes.phase <= np.pi)
