import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fieldscatter.fields import Field2D, ParamVector, make_grf, make_lognormal
from fieldscatter.filters import build_morlet_bank, frame_bounds
from fieldscatter.scattering import (
    count_coefficients,
    first_order_fields,
    propagate,
    scatter,
    scattering_maps,
    scattering_schema,
)


@pytest.fixture(scope="module")
def bank64():
    return build_morlet_bank(64)


def grf(seed, n=64, alpha=2.0):
    return make_grf(ParamVector([1.0, alpha], ["A", "alpha"]), n, 1.0, seed)


@pytest.mark.parametrize("J, expected", [(1, 2), (3, 7), (5, 16), (8, 37)])
def test_count_coefficients(J, expected):
    assert count_coefficients(J) == expected
    assert len(scattering_schema(J)) == expected


@pytest.mark.parametrize("J", [0, -2])
def test_count_coefficients_rejects_small_J(J):
    with pytest.raises(ValueError):
        count_coefficients(J)


def test_propagate_kills_constants(bank64):
    c = 3.7
    field = Field2D(np.full((64, 64), c), 1.0)
    for j in range(bank64.J):
        for chi in range(bank64.L):
            assert propagate(field, bank64.psi_hat[j, chi]).max() < 1e-8 * abs(c)


def test_propagate_is_non_negative(bank64):
    f = grf(1)
    for j in range(bank64.J):
        assert propagate(f, bank64.psi_hat[j, 1]).min() >= 0


def test_propagate_plane_wave_at_peak(bank64):
    n = 64
    psi = bank64.psi_hat[2, 0]
    a, b = np.unravel_index(np.argmax(np.abs(psi)), psi.shape)
    x = np.arange(n)
    wave = np.exp(2j * np.pi * (a * x[:, None] + b * x[None, :]) / n)
    out = propagate(wave, psi)
    assert out.std() / out.mean() < 1e-6
    assert out.mean() == pytest.approx(abs(psi[a, b]), rel=1e-10)


def test_propagate_shape_mismatch(bank64):
    with pytest.raises(ValueError):
        propagate(np.zeros((32, 32)), bank64.psi_hat[0, 0])


def test_summary_length_at_full_resolution():
    bank = build_morlet_bank(512, J=8, L=2)
    s = scatter(grf(0, n=512), bank)
    assert s.vector.size == 37
    assert s.schema == scattering_schema(8)


def test_zero_field_gives_zero_summary(bank64):
    s = scatter(Field2D(np.zeros((64, 64)), 1.0), bank64)
    assert np.all(s.vector == 0)


def test_shift_invariance(bank64):
    f = grf(4)
    shifted = np.roll(f.data, (17, 5), axis=(0, 1))
    a, b = scatter(f, bank64).vector, scatter(shifted, bank64).vector
    np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12 * np.abs(a).max())


def test_higher_orders_are_non_negative(bank64):
    s = scatter(grf(2), bank64)
    assert np.all(s.s1 >= 0) and np.all(s.s2 >= 0)


def test_s0_is_field_mean(bank64):
    data = grf(3).data + 0.25
    assert scatter(data, bank64).s0 == pytest.approx(data.mean())


def test_modulus_non_expansive_per_filter():
    n = 32
    bank = build_morlet_bank(n, L=2)
    assert frame_bounds(bank).littlewood_paley_max <= 1 + 1e-9
    rng = np.random.default_rng(0)
    for _ in range(100):
        f1, f2 = rng.standard_normal((2, n, n))
        diff = f1 - f2
        for j in range(bank.J):
            for chi in range(bank.L):
                psi = bank.psi_hat[j, chi]
                lhs = np.linalg.norm(propagate(f1, psi) - propagate(f2, psi))
                mid = np.linalg.norm(np.fft.ifft2(np.fft.fft2(diff) * psi))
                assert lhs <= mid + 1e-12
                assert mid <= np.linalg.norm(diff) + 1e-12


def test_order_two_subordination(bank64):
    for seed in range(20):
        f = grf(seed)
        s = scatter(f, bank64)
        u1_means = first_order_fields(f.data, bank64).mean(axis=(2, 3))  # (J, L)
        for k, label in enumerate(s.schema[1 + bank64.J :]):
            j1 = int(label.split("_")[1])
            assert s.s2[k] <= u1_means[j1].max()


def test_second_order_more_sensitive_to_non_gaussianity(bank64):
    def ensemble(g):
        p = ParamVector([1.0, 2.0, g], ["A", "alpha", "g"])
        return np.array(
            [scatter(make_lognormal(p, 64, 1.0, 1000 + s, match_spectrum=True), bank64).vector for s in range(100)]
        )

    gauss, logn = ensemble(0.0), ensemble(0.5)
    pooled = np.sqrt(0.5 * (gauss.var(axis=0, ddof=1) + logn.var(axis=0, ddof=1)))
    z = np.abs(logn.mean(axis=0) - gauss.mean(axis=0)) / pooled
    J = bank64.J
    assert z[1 + J :].mean() > z[1 : 1 + J].mean()


def test_maps_average_to_summary(bank64):
    f = grf(5)
    s = scatter(f, bank64)
    maps = scattering_maps(f, bank64)
    assert list(maps) == list(s.schema)
    np.testing.assert_allclose([maps[k].mean() for k in s.schema], s.vector, rtol=1e-9, atol=1e-14)


def test_to_summary_carries_schema(bank64):
    sv = scatter(grf(0), bank64).to_summary({"seed": 0})
    assert sv.schema[0] == "S0" and len(sv) == count_coefficients(bank64.J)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), dx=st.integers(0, 31), dy=st.integers(0, 31))
def test_translation_invariance_property(seed, dx, dy):
    bank = build_morlet_bank(32)
    f = grf(seed, n=32)
    a = scatter(f, bank).vector
    b = scatter(np.roll(f.data, (dx, dy), axis=(0, 1)), bank).vector
    np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12 * np.abs(a).max())
