import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpineq.kernels import KERNELS, Kernel1D, get_kernel, product

QUARTIC = get_kernel("quartic2u")

# overlap of the quartic kernel at u = 1/2 by a brute-force midpoint rule, frozen
OVERLAP_HALF = 0.34375


def test_eval_examples():
    assert QUARTIC.eval([0.0]) == pytest.approx(1.5)
    assert QUARTIC.eval([0.5]) == 0.0
    assert get_kernel("quartic2u", 2).eval([0.0, 0.0]) == pytest.approx(2.25)


def test_eval_zero_outside_support():
    k2 = get_kernel("quartic2u", 2)
    assert k2.eval([0.6, 0.0]) == 0.0
    assert k2.eval([0.1, -0.51]) == 0.0


def test_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        get_kernel("quartic2u", 2).eval([0.1])


def test_int_k2_examples():
    assert QUARTIC.int_K2() == pytest.approx(1.2, abs=1e-14)
    assert get_kernel("quartic2u", 2).int_K2() == pytest.approx(1.44, abs=1e-13)
    assert get_kernel("uniform").int_K2() == pytest.approx(1.0, abs=1e-14)
    assert get_kernel("triangular").int_K2() == pytest.approx(4.0 / 3.0, abs=1e-13)


def test_int_k2_against_riemann():
    u = (np.arange(2_000_000) + 0.5) / 2_000_000 - 0.5
    assert QUARTIC.int_K2() == pytest.approx(np.mean(QUARTIC.eval(u[:, None]) ** 2), rel=1e-10)


def test_overlap_examples():
    assert QUARTIC.overlap_t([0.0]) == pytest.approx(1.0, abs=1e-14)
    for u in (1.0, -1.0, 1.7):
        assert QUARTIC.overlap_t([u]) == 0.0
    assert get_kernel("quartic2u", 2).overlap_t([0.2, 1.0]) == 0.0


def test_overlap_half_against_brute_force():
    m = 1_000_000
    x = (np.arange(m) + 0.5) / m - 0.5
    k = QUARTIC.eval(x[:, None])
    ks = QUARTIC.eval((x + 0.5)[:, None])
    brute = np.mean(k * ks) / np.mean(k * k)
    assert brute == pytest.approx(OVERLAP_HALF, abs=1e-9)
    assert QUARTIC.overlap_t([0.5]) == pytest.approx(OVERLAP_HALF, abs=1e-12)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_node_doubling(name):
    k = get_kernel(name)
    assert abs(k.int_K2(64) - k.int_K2(128)) < 1e-8
    u = np.linspace(-1.1, 1.1, 23)[:, None]
    assert np.max(np.abs(k.overlap_t(u, 64) - k.overlap_t(u, 128))) < 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.2, 1.2), st.sampled_from(sorted(KERNELS)))
def test_overlap_symmetric_and_bounded(u, name):
    k = get_kernel(name)
    a = float(k.overlap_t([u]))
    assert a == pytest.approx(float(k.overlap_t([-u])), abs=1e-12)
    assert -1e-12 <= a <= 1.0 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_overlap_separable(u1, u2):
    k2 = get_kernel("quartic2u", 2)
    expect = float(QUARTIC.overlap_t([u1])) * float(QUARTIC.overlap_t([u2]))
    assert float(k2.overlap_t([u1, u2])) == pytest.approx(expect, abs=1e-13)


def test_mixed_product_kernel():
    k = product([KERNELS["quartic2u"], KERNELS["uniform"]])
    assert k.eval([0.0, 0.3]) == pytest.approx(1.5)
    assert k.int_K2() == pytest.approx(1.2)


def test_custom_kernel_validation():
    with pytest.raises(ValueError, match="integrates"):
        Kernel1D(lambda u: np.where(np.abs(u) <= 0.5, 2.0, 0.0), sup_norm=2.0)
    with pytest.raises(ValueError, match="outside"):
        Kernel1D(lambda u: np.where(np.abs(u) <= 0.6, 1.0 / 1.2, 0.0), sup_norm=1.0)
    with pytest.raises(ValueError, match="sup-norm"):
        Kernel1D(lambda u: np.where(np.abs(u) <= 0.5, 1.0, 0.0), sup_norm=0.5)


def test_signed_kernel_flagged():
    # 1 + c(1 - 12 u^2) integrates to 1 and goes negative near the edges for c = 1
    signed = Kernel1D(lambda u: np.where(np.abs(u) <= 0.5, 1.0 + (1.0 - 12.0 * u * u), 0.0),
                      sup_norm=2.0, name="signed")
    assert signed.signed
    assert not KERNELS["quartic2u"].signed


def test_unknown_kernel():
    with pytest.raises((KeyError, ValueError)):
        get_kernel("gaussian")
