import numpy as np
import pytest
from hypothesis import given, strategies as st

from rampc.core_model import TABLE1, SystemBounds, measure, sample_plant, truncation_error
from rampc.errors import AssumptionViolation, ConfigurationError
from rampc.set_membership import (
    FeasibleSet,
    FssTracker,
    MeasurementWindow,
    coordinate_rows,
    default_facets,
    initial_fss,
    nonfalsified_set,
    update_fss,
)

from conftest import brute_vertices


def box_facets(m):
    return np.vstack([np.eye(m), -np.eye(m)])


def test_initial_fss_box():
    fss = initial_fss(TABLE1, 2, box_facets(2))
    np.testing.assert_allclose(fss.b_h, [1, 1, -0.3, -0.3])


def test_initial_fss_envelope_rows():
    A = default_facets(12, 156)
    fss = initial_fss(TABLE1, 12, A)
    assert fss.b_h[0] == pytest.approx(1.0)
    assert fss.b_h[4] == pytest.approx(0.65)


@given(seed=st.integers(0, 10_000))
def test_initial_fss_extra_rows_are_box_supports(seed):
    rng = np.random.default_rng(seed)
    m = 5
    d = rng.normal(size=m)
    d /= np.linalg.norm(d)
    lo, hi = TABLE1.envelope(m)
    fss = initial_fss(TABLE1, m, np.vstack([box_facets(m), d]))
    oracle = sum(max(d[i] * hi[i], d[i] * lo[i]) for i in range(m))
    assert fss.b_h[-1] == pytest.approx(oracle, abs=1e-12)


def test_initial_fss_needs_coordinate_facets():
    with pytest.raises(ConfigurationError):
        initial_fss(TABLE1, 2, np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))


def test_coordinate_rows_accept_scaled_rows():
    A = np.array([[0.5, 0.0], [0.0, 2.0], [-3.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
    plus, minus = coordinate_rows(A)
    assert plus.tolist() == [0, 1] and minus.tolist() == [2, 3]
    fss = FeasibleSet(A, np.array([1.0, 2.0, 0.0, 0.0, 5.0]))
    upper, lower = fss.coordinate_supports()
    np.testing.assert_allclose(upper, [2.0, 1.0])
    np.testing.assert_allclose(lower, [0.0, 0.0])


@pytest.mark.parametrize("kind", ["random", "pairwise"])
def test_default_facets(kind):
    A = default_facets(4, 20, seed=3, kind=kind)
    assert A.shape == (20, 4)
    np.testing.assert_allclose(np.linalg.norm(A, axis=1), 1.0)
    np.testing.assert_array_equal(A[:8], box_facets(4))
    np.testing.assert_array_equal(A, default_facets(4, 20, seed=3, kind=kind))


def test_default_facets_errors():
    with pytest.raises(ConfigurationError):
        default_facets(4, 6)
    with pytest.raises(ConfigurationError):
        default_facets(4, 19, kind="pairwise")
    with pytest.raises(ConfigurationError):
        default_facets(4, 20, kind="spiral")


def test_nonfalsified_rows():
    w = MeasurementWindow(3, 2)
    w.push([1.0, 0.0], 0.5)
    A, b = nonfalsified_set(w, 0.1, 0.1)
    np.testing.assert_allclose(A, [[1, 0], [-1, 0]])
    np.testing.assert_allclose(b, [0.7, -0.3])


def test_zero_regressor_rows_are_vacuous():
    fss = initial_fss(TABLE1, 2, box_facets(2))
    w = MeasurementWindow(3, 2)
    w.push([0.0, 0.0], 0.05)
    A, b = nonfalsified_set(w, 0.1, 0.1)
    assert np.all(A == 0) and np.all(b > 0)
    np.testing.assert_array_equal(update_fss(fss, (A, b)).b_h, fss.b_h)


def test_window_keeps_latest():
    w = MeasurementWindow(2, 1)
    for k in range(5):
        w.push([float(k)], float(k))
    assert [y for _, y in w] == [3.0, 4.0]
    with pytest.raises(ValueError):
        w.push([1.0, 2.0], 0.0)


def test_update_1d_intersection():
    fss = FeasibleSet(np.array([[1.0], [-1.0]]), np.array([1.0, -0.3]))
    new = update_fss(fss, (np.array([[1.0]]), np.array([0.6])))
    np.testing.assert_allclose(new.b_h, [0.6, -0.3])


def test_update_empty_intersection_raises():
    fss = FeasibleSet(np.array([[1.0], [-1.0]]), np.array([1.0, -0.3]))
    with pytest.raises(AssumptionViolation):
        update_fss(fss, (np.array([[1.0]]), np.array([0.1])))


def _random_window(rng, m, s, bounds):
    plant = sample_plant(bounds, 40, seed=int(rng.integers(1 << 30)))
    eta = truncation_error(bounds, m)
    w = MeasurementWindow(s, m)
    hist = np.zeros(40)
    for _ in range(s + 3):
        meas = measure(plant, hist, rng, bounds.eps)
        w.push(hist[:m].copy(), meas.y_meas)
        hist = np.concatenate([[rng.uniform(-2, 2)], hist[:-1]])
    return plant, w, eta


@given(seed=st.integers(0, 10_000))
def test_update_matches_vertex_oracle(seed):
    rng = np.random.default_rng(seed)
    bounds = SystemBounds(mu=3)
    m = 3
    A_h = default_facets(m, 12, seed=seed)
    fss = initial_fss(bounds, m, A_h)
    plant, w, eta = _random_window(rng, m, 4, bounds)
    delta = nonfalsified_set(w, eta, bounds.eps)
    new = update_fss(fss, delta)
    V = brute_vertices(np.vstack([fss.A_h, delta[0]]), np.concatenate([fss.b_h, delta[1]]))
    np.testing.assert_allclose(new.b_h, (A_h @ V.T).max(axis=1), atol=1e-7)
    # the truncated true plant stays inside
    assert new.contains(plant.head(m))


@given(seed=st.integers(0, 10_000))
def test_over_approximation_of_sampled_points(seed):
    rng = np.random.default_rng(seed)
    bounds = SystemBounds(mu=3)
    m = 3
    fss = initial_fss(bounds, m, default_facets(m, 12, seed=1))
    _, w, eta = _random_window(rng, m, 4, bounds)
    A_d, b_d = nonfalsified_set(w, eta, bounds.eps)
    new = update_fss(fss, (A_d, b_d))
    lo, hi = bounds.envelope(m)
    pts = rng.uniform(lo, hi, size=(4000, m))
    inside = np.all(pts @ fss.A_h.T <= fss.b_h, axis=1) & np.all(pts @ A_d.T <= b_d, axis=1)
    assert np.all(pts[inside] @ new.A_h.T <= new.b_h + 1e-9)


def test_tracker_matches_repeated_updates_and_shrinks(rng):
    m, s = 4, 6
    bounds = SystemBounds(mu=2, rho=0.3)  # short memory, so m=4 leaves a small truncation error
    A_h = default_facets(m, 30, seed=2)
    fss0 = initial_fss(bounds, m, A_h)
    eta = truncation_error(bounds, m)
    tracker = FssTracker(fss0, s, eta, bounds.eps)
    plant = sample_plant(bounds, 40, seed=5)
    window = MeasurementWindow(s, m)
    ref = fss0
    hist = np.zeros(40)
    prev = fss0.b_h
    for _ in range(30):
        meas = measure(plant, hist, rng, bounds.eps)
        got = tracker.update(hist[:m].copy(), meas.y_meas)
        window.push(hist[:m].copy(), meas.y_meas)
        if np.any(hist[:m]):
            ref = update_fss(ref, nonfalsified_set(window, eta, bounds.eps))
        np.testing.assert_allclose(got.b_h, ref.b_h, atol=1e-9)
        assert np.all(got.b_h <= prev + 1e-12)
        assert got.p == fss0.p
        assert got.contains(plant.head(m), tol=1e-7)
        prev = got.b_h
        hist = np.concatenate([[rng.uniform(-2, 2)], hist[:-1]])
    assert tracker.fss.b_h.sum() < fss0.b_h.sum()


def test_tracker_copy_is_independent(rng):
    fss0 = initial_fss(TABLE1, 4, default_facets(4, 20))
    tr = FssTracker(fss0, 5, truncation_error(TABLE1, 4), 0.1)
    tr.update(np.array([1.0, 0.5, 0, 0]), 1.0)
    other = tr.copy()
    other.update(np.array([0.3, 1.0, 0.5, 0]), 1.2)
    assert len(tr.window) == 1 and len(other.window) == 2


def test_fss_csv_roundtrip(tmp_path):
    fss = initial_fss(TABLE1, 3, default_facets(3, 10))
    fss.to_csv(tmp_path / "fss.csv")
    back = FeasibleSet.from_csv(tmp_path / "fss.csv")
    np.testing.assert_array_equal(back.A_h, fss.A_h)
    np.testing.assert_array_equal(back.b_h, fss.b_h)
