import pytest

from app.schemas.network import Protocol
from app.services.tables import (
    CSV_HEADER,
    build_query,
    format_tables,
    reproduce_tables,
    table_grid,
    write_tables,
)
from app.services.trace_writer import read_trace_csv


def test_grid_covers_both_gain_sets():
    grid = table_grid()
    assert len(grid) == 18
    assert sum(1 for row in grid if row[0] == "III") == 6
    assert all(row[2] == 3 for row in grid if row[0] == "III")


def test_mixed_gains_query():
    query = build_query(Protocol.RR, 3, 0.2, "mixed")
    assert query.gains.kp[:, 0, 0].tolist() == [10.0, 20.0, 30.0]
    assert query.gains.kd[:, 0, 0].tolist() == [20.0, 20.0, 20.0]


@pytest.fixture(scope="module")
def tables():
    return reproduce_tables(workers=4)


@pytest.mark.slow
@pytest.mark.parametrize(
    "n_slaves, mad, expected",
    [(2, 0.0, 0.6666), (2, 0.2, 0.5333), (2, 0.5, 0.3333), (3, 0.0, 0.5), (3, 0.2, 0.4), (3, 0.5, 0.25)],
)
def test_round_robin_table_one(tables, n_slaves, mad, expected):
    cell = tables.cell("I", Protocol.RR, n_slaves, mad)
    assert cell.computed == pytest.approx(expected, abs=0.005)
    assert not cell.discrepancy


@pytest.mark.slow
def test_round_robin_delays_follow_mati(tables):
    for n_slaves in (2, 3):
        for mad in (0.0, 0.2, 0.5):
            cell = tables.cell("II", Protocol.RR, n_slaves, mad)
            assert cell.computed == pytest.approx(n_slaves * cell.mati + mad)
    assert tables.cell("II", Protocol.RR, 3, 0.2).computed == pytest.approx(1.4, abs=0.01)
    assert tables.cell("IV", Protocol.RR, 3, 0.0).computed == pytest.approx(1.0, abs=0.01)


@pytest.mark.slow
def test_mixed_gain_table_flags_large_delay(tables):
    assert tables.cell("III", Protocol.RR, 3, 0.0).computed == pytest.approx(0.3333, abs=0.005)
    assert tables.cell("III", Protocol.RR, 3, 0.2).computed == pytest.approx(0.2333, abs=0.005)
    large = tables.cell("III", Protocol.RR, 3, 0.5)
    assert large.computed == pytest.approx(1.0 / 12.0, abs=0.005)
    assert large.discrepancy


@pytest.mark.slow
@pytest.mark.parametrize(
    "n_slaves, mad, expected",
    [(2, 0.0, 0.4531), (3, 0.0, 0.2411), (2, 0.2, 0.2431), (3, 0.2, 0.0411)],
)
def test_tod_table_one(tables, n_slaves, mad, expected):
    assert tables.cell("I", Protocol.TOD, n_slaves, mad).computed == pytest.approx(expected, abs=0.02)


@pytest.mark.slow
def test_tod_large_delay_is_infeasible(tables):
    for n_slaves in (2, 3):
        cell = tables.cell("I", Protocol.TOD, n_slaves, 0.5)
        assert not cell.feasible
        assert cell.computed is None
        assert not cell.discrepancy
    assert tables.cell("IV", Protocol.TOD, 3, 0.5).computed is None


@pytest.mark.slow
def test_tables_are_written(tables, tmp_path):
    text_path, csv_path = write_tables(tables, tmp_path)
    text = text_path.read_text()
    for name in ("I", "II", "III", "IV"):
        assert f"Table {name}:" in text
    assert "[0.1000]" in text
    assert "-" in format_tables(tables)
    rows = read_trace_csv(csv_path)
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + len(tables.cells)
