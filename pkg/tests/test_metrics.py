import numpy as np
import pytest
from hypothesis import given, strategies as st

from alphamine.errors import EmptyOverlap
from alphamine.panel import compute_ic, compute_mut_ic
from oracles import daily_pearson_oracle, spearman_oracle


def rand_matrices(seed, shape=(10, 50)):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape), rng.standard_normal(shape)


def test_perfect_correlation():
    a, _ = rand_matrices(0)
    report = compute_ic(a, a.copy())
    assert report.ic == pytest.approx(1.0)
    assert report.rank_ic == pytest.approx(1.0)


def test_anti_correlation():
    a, _ = rand_matrices(1)
    report = compute_ic(a, -a)
    assert report.ic == pytest.approx(-1.0)
    assert report.rank_ic == pytest.approx(-1.0)


def test_three_stock_single_day_rank_example():
    alpha = np.array([[0.1], [0.2], [0.3]])
    target = np.array([[0.3], [0.2], [0.1]])
    report = compute_ic(alpha, target)
    assert report.ic == pytest.approx(-1.0)
    assert report.rank_ic == pytest.approx(-1.0)  # ranks (1,2,3) vs (3,2,1)


def test_matches_textbook_oracle_within_1e12():
    alpha, target = rand_matrices(7)
    mask = np.ones_like(alpha, dtype=bool)
    report = compute_ic(alpha, target)
    want = daily_pearson_oracle(alpha, target, mask)
    assert report.n_days == len(want)
    assert np.abs(report.daily_ic - np.array(want)).max() <= 1e-12
    want_rank = spearman_oracle(alpha, target, mask)
    assert np.abs(report.daily_rank_ic - np.array(want_rank)).max() <= 1e-12


def test_mut_ic_symmetric_and_affine():
    a, b = rand_matrices(3)
    assert compute_mut_ic(a, b) == pytest.approx(compute_mut_ic(b, a), abs=1e-15)
    assert compute_mut_ic(a, 2 * a + 3) == pytest.approx(1.0)
    assert compute_mut_ic(a, a) == pytest.approx(1.0)


def test_mut_ic_matches_oracle():
    a, b = rand_matrices(9, (5, 20))
    want = np.mean(daily_pearson_oracle(a, b, np.ones_like(a, dtype=bool)))
    assert compute_mut_ic(a, b) == pytest.approx(want, abs=1e-12)


def test_missing_and_mask_exclusion():
    a, t = rand_matrices(4, (6, 10))
    a[0, :] = np.nan
    valid = np.ones_like(a, dtype=bool)
    valid[1, :] = False  # non-tradable stock
    report = compute_ic(a, t, valid)
    sub_ok = ~np.isnan(a) & valid
    want = daily_pearson_oracle(a, t, sub_ok)
    assert np.abs(report.daily_ic - np.array(want)).max() <= 1e-12


def test_days_with_too_few_points_are_skipped():
    a, t = rand_matrices(5, (3, 4))
    a[1:, 0] = np.nan  # day 0 has a single valid cell
    report = compute_ic(a, t)
    assert report.n_days == 3


def test_empty_overlap_raises():
    a = np.full((3, 4), np.nan)
    t = np.zeros((3, 4))
    with pytest.raises(EmptyOverlap):
        compute_ic(a, t)
    with pytest.raises(EmptyOverlap):
        compute_mut_ic(a, a)


def test_constant_cross_section_days_skipped():
    a = np.ones((4, 3))
    t = np.random.default_rng(0).standard_normal((4, 3))
    with pytest.raises(EmptyOverlap):
        compute_ic(a, t)  # zero variance every day


@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.integers(0, 50))
def test_pearson_affine_invariance(scale, shift, seed):
    a, t = rand_matrices(seed)
    base = compute_ic(a, t)
    pos = compute_ic(scale * a + shift, t)
    neg = compute_ic(-scale * a + shift, t)
    assert pos.ic == pytest.approx(base.ic, abs=1e-9)
    assert neg.ic == pytest.approx(-base.ic, abs=1e-9)


@given(st.integers(0, 50))
def test_rank_ic_monotone_invariance(seed):
    a, t = rand_matrices(seed, (8, 12))
    base = compute_ic(a, t)
    warped = compute_ic(np.exp(a) + a**3, t)  # strictly increasing transform
    assert warped.rank_ic == pytest.approx(base.rank_ic, abs=1e-9)


@given(st.integers(0, 80))
def test_daily_values_bounded(seed):
    a, t = rand_matrices(seed, (5, 30))
    report = compute_ic(a, t)
    assert (np.abs(report.daily_ic) <= 1.0).all()
    assert (np.abs(report.daily_rank_ic) <= 1.0).all()


def test_icir_definition():
    a, t = rand_matrices(12)
    report = compute_ic(a, t)
    want = report.daily_ic.mean() / report.daily_ic.std(ddof=1)
    assert report.icir == pytest.approx(want)


def test_report_csv_shape():
    a, t = rand_matrices(6, (4, 6))
    report = compute_ic(a, t)
    lines = report.to_csv().strip().splitlines()
    assert lines[0] == "date,ic,rank_ic"
    assert len(lines) == report.n_days + 1
