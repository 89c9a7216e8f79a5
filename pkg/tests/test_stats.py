"""Statistics battery: Welch, Shapiro-Wilk, MAD filtering, RSD.

Reference values live in reference_values.py, frozen from scipy.stats.
"""
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monksim.stats import (
    Sample,
    compare,
    mad_filter,
    rsd,
    shapiro_wilk,
    student_t_sf,
    welch_t,
)

from reference_values import (
    GAUSS_20, GAUSS_20_P, GAUSS_20_W, SMALL_SW, UNIFORM_50, UNIFORM_50_P, UNIFORM_50_W, WELCH_CASES,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("a, b, t, df, p", WELCH_CASES)
def test_welch_matches_reference(a, b, t, df, p):
    res = welch_t(Sample(a), Sample(b))
    assert res.t == pytest.approx(t, rel=1e-9)
    assert res.df == pytest.approx(df, rel=1e-9)
    assert abs(res.p - p) < 1e-6


def test_welch_identical_samples():
    a = Sample([1.0, 2.0, 3.5, 4.0])
    res = welch_t(a, a)
    assert res.t == 0.0
    assert res.p == 1.0


def test_welch_both_constant_equal_means():
    res = welch_t(Sample([2.0, 2.0]), Sample([2.0, 2.0, 2.0]))
    assert (res.t, res.p) == (0.0, 1.0)


def test_welch_needs_two_values():
    with pytest.raises(ValueError):
        welch_t(Sample([1.0]), Sample([1.0, 2.0]))


@pytest.mark.parametrize("a, b", [case[:2] for case in WELCH_CASES])
def test_welch_antisymmetric(a, b):
    ab = welch_t(Sample(a), Sample(b))
    ba = welch_t(Sample(b), Sample(a))
    assert ab.t == -ba.t
    assert ab.p == ba.p


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite, min_size=2, max_size=12),
    st.lists(finite, min_size=2, max_size=12),
    st.floats(min_value=-100, max_value=100),
)
def test_welch_location_shift(a, b, shift):
    if max(a) - min(a) < 1e-3 and max(b) - min(b) < 1e-3:
        return
    base = welch_t(Sample(a), Sample(b))
    moved = welch_t(Sample([x + shift for x in a]), Sample([x + shift for x in b]))
    assert moved.t == pytest.approx(base.t, rel=1e-6, abs=1e-6)
    assert moved.p == pytest.approx(base.p, rel=1e-6, abs=1e-9)


def test_welch_p_monotone_in_mean_difference():
    base = [0.1, -0.3, 0.25, 0.05, -0.1, 0.4]
    ps = [welch_t(Sample(base), Sample([x + d for x in base])).p for d in (0, 0.1, 0.2, 0.4, 0.8)]
    assert all(p1 >= p2 for p1, p2 in zip(ps, ps[1:]))


@pytest.mark.parametrize("df", [1, 2.5, 7, 30, 250])
@pytest.mark.parametrize("t", [0.0, 0.5, 1.96, 3.0, 8.0])
def test_student_t_survival(df, t):
    scipy_stats = pytest.importorskip("scipy.stats")
    assert student_t_sf(t, df) == pytest.approx(float(scipy_stats.t.sf(t, df)), abs=1e-10)


def test_shapiro_gaussian_reference():
    w, p = shapiro_wilk(Sample(GAUSS_20))
    assert abs(w - GAUSS_20_W) < 1e-3
    assert p == pytest.approx(GAUSS_20_P, abs=1e-3)


def test_shapiro_uniform_rejects():
    w, p = shapiro_wilk(Sample(UNIFORM_50))
    assert abs(w - UNIFORM_50_W) < 1e-3
    assert p < 0.05
    assert p == pytest.approx(UNIFORM_50_P, abs=1e-3)


@pytest.mark.parametrize("x, w_ref, p_ref", SMALL_SW)
def test_shapiro_small_samples(x, w_ref, p_ref):
    w, p = shapiro_wilk(Sample(x))
    assert abs(w - w_ref) < 1e-3
    assert p == pytest.approx(p_ref, abs=2e-3)


@pytest.mark.parametrize("n", [0, 1, 2, 5001])
def test_shapiro_size_bounds(n):
    with pytest.raises(ValueError):
        shapiro_wilk(Sample([float(i % 7) for i in range(n)]))


def test_mad_constant_data_keeps_all():
    kept, removed = mad_filter(Sample([4.0] * 6), k=3.0)
    assert removed == 0 and kept.values == [4.0] * 6


def test_mad_removes_single_outlier():
    # median 5.5, abs deviations median 2.5, bound 7.5
    kept, removed = mad_filter(Sample([1, 2, 3, 4, 5, 6, 7, 8, 9, 100]), k=3.0)
    assert removed == 1
    assert kept.values == [1, 2, 3, 4, 5, 6, 7, 8, 9]


def test_mad_consistency_constant_option():
    # median 5.5, MAD 2.5: 14 is 8.5 away
    data = Sample([1, 2, 3, 4, 5, 6, 7, 8, 9, 14])
    assert mad_filter(data, k=3.0)[1] == 1
    assert mad_filter(data, k=4.0)[1] == 0
    assert mad_filter(data, k=3.0, scale=1.4826)[1] == 0


@settings(max_examples=80, deadline=None)
@given(st.lists(finite, min_size=1, max_size=40), st.floats(min_value=0.5, max_value=6))
def test_mad_subset_and_order(xs, k):
    kept, removed = mad_filter(Sample(xs), k=k)
    it = iter(xs)
    assert all(any(v == w for w in it) for v in kept.values)
    assert removed == len(xs) - len(kept.values)


def test_rsd_examples():
    assert rsd(Sample([1, 2, 3])) == 50.0
    assert rsd(Sample([7.5, 7.5, 7.5])) == 0.0
    with pytest.raises(ValueError):
        rsd(Sample([-1.0, 1.0]))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(min_value=0.1, max_value=1e3), min_size=2, max_size=20),
    st.floats(min_value=0.01, max_value=100),
)
def test_rsd_scale_invariant(xs, c):
    assert rsd(Sample([x * c for x in xs])) == pytest.approx(rsd(Sample(xs)), rel=1e-9, abs=1e-9)


def test_sample_rejects_nonfinite():
    with pytest.raises(ValueError):
        Sample([1.0, math.nan])


def test_compare_report_fields():
    a = Sample([10.0, 11.0, 9.5, 10.2, 10.8])
    b = Sample([12.0, 12.5, 11.8, 12.2, 40.0])
    rep = compare(a, b, mad_k=3.0)
    assert rep.n_removed_outliers == 1
    assert 0.0 <= rep.p <= 1.0 and rep.df > 0
    assert rep.normality_p is not None
    assert rep.rsd_percent > 0
