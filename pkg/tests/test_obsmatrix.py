import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrevents import completion
from lrevents.obsmatrix import (
    EntryKind,
    ObservationMatrix,
    TimeSeriesRecord,
    flatten,
    read_records_csv,
    write_records_csv,
)


class TestFlatten:
    def test_single_record(self):
        recs = [TimeSeriesRecord(sensor=0, day=0, period=0, value=7.0)]
        m = flatten(recs, days=1, periods=2, sensors=2)
        assert m.shape == (1, 4)
        assert m.num_entries == 1
        assert m.row[0] == 0 and m.col[0] == 0
        assert m.lower[0] == 7.0 and m.kind[0] == EntryKind.EXACT
        assert m.density == 0.25

    def test_empty_records(self):
        m = flatten([], days=2, periods=2, sensors=1)
        assert m.shape == (2, 2)
        assert m.num_entries == 0
        assert m.density == 0.0

    def test_column_layout(self):
        # column = sensor * periods + period
        recs = [TimeSeriesRecord(1, 0, 2, 5.0)]
        m = flatten(recs, days=1, periods=3, sensors=2)
        assert m.col[0] == 1 * 3 + 2

    def test_out_of_range_names_record(self):
        recs = [TimeSeriesRecord(0, 0, 0, 1.0), TimeSeriesRecord(5, 0, 0, 1.0)]
        with pytest.raises(ValueError, match="record 1.*sensor=5"):
            flatten(recs, days=1, periods=1, sensors=2)

    def test_duplicates_last_write_wins(self):
        recs = [
            TimeSeriesRecord(0, 0, 0, 1.0),
            TimeSeriesRecord(0, 0, 1, 8.0),
            TimeSeriesRecord(0, 0, 0, 3.0),
        ]
        with pytest.warns(UserWarning, match="1 duplicate"):
            m = flatten(recs, days=1, periods=2, sensors=1)
        assert m.num_entries == 2
        assert m.lower[m.col == 0][0] == 3.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(
        st.tuples(st.integers(0, 4), st.integers(0, 5), st.integers(0, 6)),
        min_size=1, max_size=30, unique=True,
    ))
    def test_distinct_cells_never_collide(self, triples):
        recs = [
            TimeSeriesRecord(s, d, p, float(i)) for i, (s, d, p) in enumerate(triples)
        ]
        m = flatten(recs, days=6, periods=7, sensors=5)
        assert m.num_entries == len(triples)
        # every record is recoverable at its own cell
        dense = m.to_dense()
        for i, (s, d, p) in enumerate(triples):
            assert dense[d, s * 7 + p] == float(i)


class TestWiden:
    def test_interval_from_value(self):
        m = ObservationMatrix.from_exact(1, 1, [0], [0], [5.0])
        w = m.widen(2.0)
        assert w.kind[0] == EntryKind.INTERVAL
        assert w.lower[0] == 3.0 and w.upper[0] == 7.0
        assert w.num_entries == m.num_entries

    def test_two_values(self):
        m = ObservationMatrix.from_exact(1, 2, [0, 0], [0, 1], [1.0, -1.0])
        w = m.widen(0.5)
        assert np.array_equal(w.lower, [0.5, -1.5])
        assert np.array_equal(w.upper, [1.5, -0.5])

    def test_zero_delta_objective_matches_exact(self):
        # degenerate intervals: the hinge pair reproduces the squared loss
        rng = np.random.default_rng(0)
        m = ObservationMatrix.from_exact(
            4, 5, [0, 1, 2, 3, 3], [0, 2, 4, 1, 3], rng.normal(size=5)
        )
        fact = completion.Factorization(rng.normal(size=(4, 2)), rng.normal(size=(2, 5)), 0.0)
        assert completion.objective(fact, m.widen(0.0)) == pytest.approx(
            completion.objective(fact, m), rel=1e-12
        )

    def test_rejects_negative_delta(self):
        m = ObservationMatrix.from_exact(1, 1, [0], [0], [5.0])
        with pytest.raises(ValueError):
            m.widen(-0.1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 100.0))
    def test_positions_and_order_preserved(self, seed, delta):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 20))
        rows = rng.integers(0, 6, size=k)
        cols = rng.integers(0, 7, size=k)
        flat = np.unique(rows * 7 + cols)
        m = ObservationMatrix.from_exact(6, 7, flat // 7, flat % 7, rng.normal(size=len(flat)))
        w = m.widen(delta)
        assert np.array_equal(w.row, m.row) and np.array_equal(w.col, m.col)
        assert (w.lower <= w.upper).all()


class TestInvariants:
    def test_rejects_duplicate_cell(self):
        with pytest.raises(ValueError, match="duplicate"):
            ObservationMatrix.from_exact(2, 2, [0, 0], [1, 1], [1.0, 2.0])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            ObservationMatrix.from_exact(2, 2, [0], [2], [1.0])

    def test_rejects_inverted_interval(self):
        with pytest.raises(ValueError, match="lower"):
            ObservationMatrix(1, 1, [0], [0], [2.0], [1.0], [EntryKind.INTERVAL])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            ObservationMatrix.from_exact(1, 1, [0], [0], [np.inf])

    def test_density_is_exact(self):
        m = ObservationMatrix.from_exact(3, 8, [0, 1, 2], [0, 1, 2], [1.0, 2.0, 3.0])
        assert m.density == 3 / 24

    def test_entries_immutable(self):
        m = ObservationMatrix.from_exact(1, 1, [0], [0], [1.0])
        with pytest.raises(ValueError):
            m.lower[0] = 2.0


class TestRoundTrip:
    def test_binary_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        k = 50
        flat = rng.choice(10 * 20, size=k, replace=False)
        kinds = rng.integers(0, 4, size=k).astype(np.uint8)
        lo = rng.normal(size=k)
        hi = lo + np.abs(rng.normal(size=k))
        lo2, hi2 = lo.copy(), hi.copy()
        lo2[kinds == EntryKind.UPPER] = hi[kinds == EntryKind.UPPER]
        hi2[kinds == EntryKind.LOWER] = lo[kinds == EntryKind.LOWER]
        hi2[kinds == EntryKind.EXACT] = lo[kinds == EntryKind.EXACT]
        m = ObservationMatrix(10, 20, flat // 20, flat % 20, lo2, hi2, kinds)

        path = tmp_path / "m.lrev"
        m.save(path)
        again = ObservationMatrix.load(path)
        assert again == m
        # bytes themselves stable under a second save
        again.save(tmp_path / "m2.lrev")
        assert (tmp_path / "m.lrev").read_bytes() == (tmp_path / "m2.lrev").read_bytes()

    def test_load_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.lrev"
        path.write_bytes(b"NOTIT" + b"\x00" * 24)
        with pytest.raises(ValueError, match="not an observation matrix"):
            ObservationMatrix.load(path)

    def test_csv_round_trip(self, tmp_path):
        recs = [
            TimeSeriesRecord(0, 0, 0, 1.25),
            TimeSeriesRecord(1, 2, 3, -0.5),
            TimeSeriesRecord(2, 1, 0, 0.0),
        ]
        path = tmp_path / "r.csv"
        write_records_csv(path, recs)
        assert read_records_csv(path) == recs

    def test_zeros_as_missing_filter(self, tmp_path):
        recs = [TimeSeriesRecord(0, 0, 0, 0.0), TimeSeriesRecord(0, 1, 0, 2.0)]
        path = tmp_path / "r.csv"
        write_records_csv(path, recs)
        kept = read_records_csv(path, zeros_as_missing=True)
        assert kept == [TimeSeriesRecord(0, 1, 0, 2.0)]

    def test_csv_rejects_bad_header(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("a,b,c,d\n1,2,3,4\n")
        with pytest.raises(ValueError, match="header"):
            read_records_csv(path)


class TestViews:
    def test_row_vector(self):
        m = ObservationMatrix.from_exact(2, 3, [0, 0], [0, 2], [1.0, 4.0])
        x = m.row_vector(0)
        assert x[0] == 1.0 and np.isnan(x[1]) and x[2] == 4.0
        assert np.isnan(m.row_vector(1)).all()

    def test_interval_midpoint_one_sided_nan(self):
        m = ObservationMatrix(
            1, 3, [0, 0, 0], [0, 1, 2],
            [1.0, 2.0, 5.0], [3.0, 2.0, 5.0],
            [EntryKind.INTERVAL, EntryKind.LOWER, EntryKind.UPPER],
        )
        x = m.row_vector(0)
        assert x[0] == 2.0
        assert np.isnan(x[1]) and np.isnan(x[2])

    def test_from_dense_round_trip(self):
        dense = np.array([[1.0, np.nan], [np.nan, 4.0]])
        m = ObservationMatrix.from_dense(dense)
        assert m.num_entries == 2
        out = m.to_dense()
        assert np.array_equal(np.isnan(out), np.isnan(dense))
        assert out[0, 0] == 1.0 and out[1, 1] == 4.0
