import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightrain.ingest import Grid, SpaceTimeField, StrikeSet, parse_instant
from lightrain.rlr import (C_STAR, correction_factors, corrected_product, evaluate_reconstruction,
                           mm_to_volume, rlr_by_class, rlr_single, tapia_reconstruct)
from lightrain.scan import summarize_event

T0 = parse_instant("2004-08-05T12:00:00Z")
GRID = Grid(0, 0, 2, 2, 10000.0)
A = GRID.cell_area_m2


def event(n, cell_xy=(5000.0, 5000.0), t=T0 + 60, eid=0, spread_s=0):
    s = StrikeSet(np.full(n, t) + np.arange(n) * spread_s, np.full(n, cell_xy[0]), np.full(n, cell_xy[1]))
    return summarize_event(eid, s, np.arange(n), GRID, 15)


def sat(values):
    return SpaceTimeField(T0, 60, np.asarray(values, dtype=float))


def test_volume_units():
    # 1 mm over a 10 km cell = 1e5 m^3 = 100 (10^3 m^3)
    assert mm_to_volume(1.0, A) == pytest.approx(100.0)


def test_rlr_single_examples():
    # 0.5 mm over one cell = 50 units, 25 flashes -> 2
    assert rlr_single(event(25), sat([[0.5, 3.0, 3.0, 3.0]]), GRID) == pytest.approx(2.0)
    assert rlr_single(event(25), sat([[0.0, 3.0, 3.0, 3.0]]), GRID) == 0.0
    v = 0.37
    assert rlr_single(event(1), sat([[v, 0, 0, 0]]), GRID) == pytest.approx(mm_to_volume(v, A))


def test_rlr_single_no_flashes_in_support():
    ev = event(3, t=T0 - 7200)
    with pytest.raises(ValueError):
        rlr_single(ev, sat([[1.0, 0, 0, 0]]), GRID)


def test_correction_factors():
    g = np.array([[0.0, 1.0], [2.0, 0.0]])
    f1, f2 = correction_factors(sat(g), sat(g))
    assert (f1, f2) == (0.0, 1.0)
    s = np.array([[0.0, 1.0], [2.0, 0.0]])
    gauge = s + 1.0
    gauge[s == 0] = 0.0
    f1, f2 = correction_factors(sat(gauge), sat(s))
    assert f1 == pytest.approx(0.5)
    # twice as many satellite records as gauge records, equal zero counts
    gauge = np.array([[0.0, 1.0], [np.nan, np.nan]])
    sat_v = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert correction_factors(sat(gauge), sat(sat_v))[1] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        correction_factors(sat([[1.0]]), sat([[1.0]]))


def test_uniform_offset_f1():
    s = np.array([[0.0, 2.0], [3.0, 0.0]])
    f1, _ = correction_factors(sat(s + 1.0), sat(s))
    assert f1 == pytest.approx(1.0)


def test_corrected_product_floor():
    assert corrected_product(-0.5, 2.0) == pytest.approx(1e-6)
    assert corrected_product(0.5, 2.0) == 1.0


def _class_events(sizes_and_rain):
    """Events of given sizes, each alone in its own satellite hour."""
    evs, rows = [], []
    for k, (n, z) in enumerate(sizes_and_rain):
        evs.append(event(n, t=T0 + k * 3600 + 60, eid=k))
        row = np.zeros(4)
        row[0] = z * n / 100.0  # mm giving ratio z
        rows.append(row)
    return evs, sat(np.array(rows))


def test_rlr_by_class_examples():
    evs, s = _class_events([(60, 2.0), (60, 4.0), (500, 7.0), (9000, 5.0)])
    out = rlr_by_class(evs, s, GRID, 1.0, 1.0)
    assert out["Small"].mean == pytest.approx(3.0) and out["Small"].median == pytest.approx(3.0)
    assert out["Small"].sd == pytest.approx(np.std([2.0, 4.0], ddof=1))
    assert out["Medium"].mean == pytest.approx(7.0)
    assert out["Large"].mean == pytest.approx(5.0) and out["Large"].n_events == 1  # VeryLarge pooled
    scaled = rlr_by_class(evs, s, GRID, 1.0, 3.0)
    for k in out:
        assert scaled[k].mean == pytest.approx(3.0 * out[k].mean)


def test_rlr_by_class_skips_small_and_empty():
    evs, s = _class_events([(20, 2.0)])
    assert rlr_by_class(evs, s, GRID, 1.0, 1.0) == {}


def test_tapia_cell_mode():
    s = StrikeSet(np.array([T0 + 60]), np.array([5000.0]), np.array([5000.0]))
    f = tapia_reconstruct(s, 2.0, GRID, T0, 15, 2)
    scale = C_STAR / A * 2.0
    assert f.values[0, 0] == pytest.approx(scale)
    assert f.values[0, 1] == pytest.approx(scale / 8)
    assert np.all(f.values[1] == 0)
    assert np.all(tapia_reconstruct(StrikeSet.empty(), 2.0, GRID, T0, 15, 2).values == 0)
    with pytest.raises(ValueError):
        tapia_reconstruct(s, 0.0, GRID, T0, 15, 2)


@given(st.floats(0.1, 50))
def test_tapia_linear_in_Z(z):
    s = StrikeSet(np.array([T0 + 60, T0 + 1000]), np.array([5000.0, 15000.0]), np.array([5000.0, 5000.0]))
    for mode in ("cell", "uniform"):
        a = tapia_reconstruct(s, z, GRID, T0, 15, 2, mode=mode, resolution=40).values
        b = tapia_reconstruct(s, 2 * z, GRID, T0, 15, 2, mode=mode, resolution=40).values
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_tapia_uniform_single_flash():
    scale = C_STAR / A * 3.0
    # centred in a cell and in an interval: the whole patch lands in one cell-interval
    mid = StrikeSet(np.array([T0 + 450]), np.array([5000.0]), np.array([5000.0]))
    f = tapia_reconstruct(mid, 3.0, GRID, T0, 15, 2, mode="uniform")
    assert f.values[0, 0] == pytest.approx(scale)
    assert f.values.sum() == pytest.approx(scale)
    # on the shared corner of four cells and on an interval boundary: split evenly
    corner = StrikeSet(np.array([T0 + 900]), np.array([10000.0]), np.array([10000.0]))
    f = tapia_reconstruct(corner, 3.0, GRID, T0, 15, 2, mode="uniform")
    np.testing.assert_allclose(f.values, scale / 8, rtol=1e-12)


def test_evaluate_reconstruction():
    rec = SpaceTimeField(T0, 15, np.array([[0.0, 0.5], [1.0, 2.0]]))
    gauge = SpaceTimeField(T0, 15, np.array([[0.0, 0.5], [np.nan, 1.0]]))
    out = evaluate_reconstruction(rec, gauge)
    assert out["n_occurrences"] == 3
    assert out["rmse_mm"] == pytest.approx(np.sqrt(1 / 3))
    assert out["pod"] == 1.0 and out["pofd"] == 0.0
