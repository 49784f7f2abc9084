import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightrain.ingest import (GaugeReading, Grid, ParseError, SatelliteCellHour, StrikeSet,
                              aggregate_gauges, align_satellite, bin_lightning, filter_gauges,
                              format_instant, load_gauges, load_lightning, load_satellite,
                              parse_instant)

T0 = parse_instant("2004-08-05T12:00:00Z")


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_instant_round_trip():
    assert format_instant(parse_instant("2004-08-05T12:34:56Z")) == "2004-08-05T12:34:56Z"
    assert parse_instant("2004-08-05T12:00:00") == parse_instant("2004-08-05T12:00:00+00:00")


def test_load_lightning_rows(tmp_path):
    p = write(tmp_path, "l.csv", "timestamp,x_m,y_m\n"
              "2004-08-05T12:00:00Z,1.0,2.0\n2004-08-05T11:00:00Z,3,4\n2004-08-05T12:00:01Z,5,6\n")
    s = load_lightning(p)
    assert len(s) == 3
    assert s.t[1] < s.t[0]  # non-monotone order is kept


def test_load_lightning_header_only(tmp_path):
    assert len(load_lightning(write(tmp_path, "l.csv", "timestamp,x_m,y_m\n"))) == 0


def test_load_lightning_bad_row_names_line(tmp_path):
    p = write(tmp_path, "l.csv", "timestamp,x_m,y_m\n2004-08-05T12:00:00Z,abc,2\n")
    with pytest.raises(ParseError) as exc:
        load_lightning(p)
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


def test_load_gauges_and_satellite(tmp_path):
    g = write(tmp_path, "g.csv", "station_id,x_m,y_m,timestamp,accum_mm,interval_min\n"
              "A,1,1,2004-08-05T12:15:00Z,0.4,15\n")
    assert load_gauges(g)[0] == GaugeReading("A", 1.0, 1.0, T0 + 900, 0.4, 15)
    bad = write(tmp_path, "g2.csv", "station_id,x_m,y_m,timestamp,accum_mm,interval_min\n"
                "A,1,1,2004-08-05T12:15:00Z,-1,15\n")
    with pytest.raises(ParseError):
        load_gauges(bad)
    s = write(tmp_path, "s.csv", "row,col,hour_start,rain_mm\n0,1,2004-08-05T12:00:00Z,2.5\n")
    assert load_satellite(s)[0] == SatelliteCellHour((0, 1), T0, 2.5)


def test_grid_lookup():
    g = Grid(0, 0, 2, 3, 10.0)
    assert g.n_cells == 6
    assert g.cell_of(25.0, 15.0) == 1 * 3 + 2
    with pytest.raises(ValueError):
        g.cell_of(30.0, 0.0)
    assert g.cell_area_km2 == pytest.approx(1e-4)
    assert [len(nb) for nb in g.neighbors(2)] == [3, 5, 3, 3, 5, 3]


def _readings(sid, values, dt=15, start=T0, x=5.0, y=5.0):
    return [GaugeReading(sid, x, y, start + (i + 1) * dt * 60, v, dt)
            for i, v in enumerate(values) if v is not None]


def test_filter_gauges():
    full = _readings("ok", [0.0] * 10)
    gappy = _readings("bad", [0.0] * 8 + [None, None])
    kept = filter_gauges(full + gappy, 0.10, T0, 10, 15)
    assert {r.station_id for r in kept} == {"ok"}
    assert len(filter_gauges(full + gappy, 1.0, T0, 10, 15)) == 18


def test_bin_lightning_counts_and_boundaries():
    g = Grid(0, 0, 2, 2, 10.0)
    s = StrikeSet(np.array([T0] * 5 + [T0 + 900, T0]), np.array([1.0] * 6 + [100.0]), np.array([1.0] * 7))
    f = bin_lightning(s, g, T0, 15, 2)
    assert f.values[0, 0] == 5
    assert f.values[1, 0] == 1  # boundary strike belongs to the interval it opens
    assert f.dropped == 1
    assert f.values.sum() + f.dropped == len(s)
    with pytest.raises(ValueError):
        bin_lightning(s, g, T0, 15, 0)


@given(st.lists(st.tuples(st.integers(-1000, 5000), st.floats(-5, 25), st.floats(-5, 25)), max_size=60))
def test_bin_lightning_conservation(rows):
    g = Grid(0, 0, 2, 2, 10.0)
    s = StrikeSet.from_strikes([(T0 + t, x, y) for t, x, y in rows])
    f = bin_lightning(s, g, T0, 15, 4)
    assert f.values.sum() + f.dropped == len(rows)
    assert np.all(f.values >= 0) and np.all(f.values == np.round(f.values))


def test_aggregate_median():
    g = Grid(0, 0, 1, 2, 10.0)
    rs = _readings("a", [0.2]) + _readings("b", [0.6]) + _readings("c", [1.0], x=15.0)
    f = aggregate_gauges(rs, g, T0, 15, 1)
    assert f.values[0, 0] == pytest.approx(0.4)
    assert f.values[0, 1] == 1.0
    three = _readings("a", [0.2]) + _readings("b", [0.2]) + _readings("c", [5.0])
    assert aggregate_gauges(three, g, T0, 15, 1).values[0, 0] == 0.2


def test_aggregate_missing_and_mixed():
    g = Grid(0, 0, 1, 2, 10.0)
    f = aggregate_gauges(_readings("a", [0.2, None]), g, T0, 15, 2)
    assert np.isnan(f.values[1, 0]) and np.all(np.isnan(f.values[:, 1]))
    mixed = _readings("a", [0.2]) + _readings("b", [0.2], dt=30)
    with pytest.raises(ValueError):
        aggregate_gauges(mixed, g, T0, 15, 1)


def test_gauge_time_coding_round_trip():
    """End-stamped readings shifted by -dt and read with the start convention agree."""
    g = Grid(0, 0, 1, 1, 10.0)
    rs = _readings("a", [0.1, 0.7, 2.0])
    end = aggregate_gauges(rs, g, T0, 15, 3, stamp="end")
    shifted = [r._replace(timestamp=r.timestamp - 900) for r in rs]
    start = aggregate_gauges(shifted, g, T0, 15, 3, stamp="start")
    np.testing.assert_array_equal(end.values, start.values)


@given(st.permutations([0.2, 0.4, 5.0, 1.3]))
def test_median_permutation_invariant(values):
    g = Grid(0, 0, 1, 1, 10.0)
    rs = [r for i, v in enumerate(values) for r in _readings(f"s{i}", [v])]
    assert aggregate_gauges(rs, g, T0, 15, 1).values[0, 0] == pytest.approx(0.85)


def test_align_satellite():
    g = Grid(0, 0, 1, 2, 10.0)
    recs = [SatelliteCellHour((0, 0), T0, 1.0), SatelliteCellHour((0, 1), T0, 0.0),
            SatelliteCellHour((0, 0), T0 + 3600, 2.0)]
    f = align_satellite(recs, g, T0, 2)
    assert f.values[0].tolist() == [1.0, 0.0]
    assert f.values[1, 0] == 2.0 and np.isnan(f.values[1, 1])
    with pytest.raises(ValueError, match="duplicate"):
        align_satellite(recs + [recs[0]], g, T0, 2)
    with pytest.raises(ValueError, match=r"\(3, 3\)"):
        align_satellite([SatelliteCellHour((3, 3), T0, 1.0)], g, T0, 1)
