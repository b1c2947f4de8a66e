from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from app.core.logging import get_logger
from app.schemas.control import GainSet
from app.schemas.network import Protocol
from app.schemas.stability import MarginResult, StabilityQuery
from app.schemas.tables import TableCell, TableSet
from app.services.stability import analyze_margin
from app.services.trace_writer import write_csv

logger = get_logger("tables")

MADS = (0.0, 0.2, 0.5)

UNIFORM = "uniform"
MIXED = "mixed"
GAIN_SETS: Dict[str, Tuple[Sequence[float], float]] = {
    UNIFORM: ((20.0,), 20.0),
    MIXED: ((10.0, 20.0, 30.0), 20.0),
}

MATI_TOLERANCE = {Protocol.RR: 0.005, Protocol.TOD: 0.02}
HORIZON_TOLERANCE = 0.01

TITLES = {
    "I": "Max. allowable MATI, k_p = k_d = 20",
    "II": "Max. time delays at the Table I MATI (RR: h_S, TOD: h_M)",
    "III": "Max. allowable MATI, N = 3, k_p = 10/20/30, k_d = 20",
    "IV": "Max. time delays at the Table III MATI (RR: h_S, TOD: h_M)",
}

# Reference values keyed by (table, protocol, N); None marks an infeasible cell
REFERENCE: Dict[Tuple[str, Protocol, int], Tuple[Optional[float], ...]] = {
    ("I", Protocol.RR, 2): (0.6666, 0.5333, 0.3333),
    ("I", Protocol.RR, 3): (0.5, 0.4, 0.25),
    ("I", Protocol.TOD, 2): (0.4531, 0.2431, None),
    ("I", Protocol.TOD, 3): (0.2411, 0.0411, None),
    ("II", Protocol.RR, 2): (1.3332, 1.2666, 1.6666),
    ("II", Protocol.RR, 3): (1.5, 1.4, 1.25),
    ("II", Protocol.TOD, 2): (0.4531, 0.4531, None),
    ("II", Protocol.TOD, 3): (0.2411, 0.2411, None),
    ("III", Protocol.RR, 3): (0.3333, 0.2333, 0.1),
    ("III", Protocol.TOD, 3): (0.2066, 0.0066, None),
    ("IV", Protocol.RR, 3): (1.0, 0.8999, 0.8),
    ("IV", Protocol.TOD, 3): (0.2066, 0.2066, None),
}


def build_query(protocol: Protocol, n_slaves: int, mad: float, gain_set: str) -> StabilityQuery:
    kp, kd = GAIN_SETS[gain_set]
    kp_list = list(kp) if len(kp) == n_slaves else [kp[0]] * n_slaves
    return StabilityQuery(
        n_slaves=n_slaves,
        gains=GainSet.from_scalars(kp_list, [kd] * n_slaves),
        mad=mad,
        protocol=protocol,
    )


def table_grid() -> List[Tuple[str, Protocol, int, float, str]]:
    """(margin table, protocol, N, MAD, gain set) for every query, in output order."""
    grid = []
    for protocol in (Protocol.RR, Protocol.TOD):
        for n_slaves in (2, 3):
            for mad in MADS:
                grid.append(("I", protocol, n_slaves, mad, UNIFORM))
    for protocol in (Protocol.RR, Protocol.TOD):
        for mad in MADS:
            grid.append(("III", protocol, 3, mad, MIXED))
    return grid


def _discrepancy(computed: Optional[float], reference: Optional[float], tolerance: float) -> bool:
    if computed is None or reference is None:
        return (computed is None) != (reference is None)
    return abs(computed - reference) > tolerance


def _cells(table: str, derived: str, protocol: Protocol, n_slaves: int, mad: float, gain_set: str, margin: MarginResult) -> List[TableCell]:
    j = MADS.index(mad)
    cells = []
    horizon = margin.h_s if protocol == Protocol.RR else margin.h_m
    for name, quantity, value, tolerance in (
        (table, "mati", margin.mati, MATI_TOLERANCE[protocol]),
        (derived, "h_s" if protocol == Protocol.RR else "h_m", horizon, HORIZON_TOLERANCE),
    ):
        computed = value if margin.feasible else None
        reference = REFERENCE[(name, protocol, n_slaves)][j]
        cells.append(
            TableCell(
                table=name,
                quantity=quantity,
                protocol=protocol,
                n_slaves=n_slaves,
                mad=mad,
                gains=gain_set,
                mati=margin.mati,
                h_m=margin.h_m,
                h_s=margin.h_s,
                feasible=margin.feasible,
                computed=computed,
                reference=reference,
                discrepancy=_discrepancy(computed, reference, tolerance),
            )
        )
    return cells


def reproduce_tables(workers: int = 4, tol: Optional[float] = None) -> TableSet:
    """Run every margin query of the four tables; independent queries run concurrently."""
    grid = table_grid()
    queries = [build_query(protocol, n, mad, gains) for _, protocol, n, mad, gains in grid]
    logger.info(f"Reproducing tables: {len(queries)} margin queries on {workers} workers")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        margins = list(executor.map(lambda query: analyze_margin(query, tol), queries))

    cells: List[TableCell] = []
    for (table, protocol, n, mad, gains), margin in zip(grid, margins):
        derived = "II" if table == "I" else "IV"
        cells.extend(_cells(table, derived, protocol, n, mad, gains, margin))
    flagged = sum(cell.discrepancy for cell in cells)
    logger.info(f"Tables done: {flagged} cell(s) differ from the reference values")
    return TableSet(cells=cells, titles=dict(TITLES))


def _format_value(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def format_tables(tables: TableSet) -> str:
    """Aligned plain-text grids; '*' marks a discrepancy, the reference value follows in brackets."""
    lines: List[str] = []
    for name in ("I", "II", "III", "IV"):
        cells = tables.table(name)
        lines.append(f"Table {name}: {tables.titles[name]}")
        lines.append(f"{'Protocol':<10}{'N':<4}" + "".join(f"{'MAD=' + format(m, 'g'):<22}" for m in MADS))
        rows: Dict[Tuple[Protocol, int], List[TableCell]] = {}
        for cell in cells:
            rows.setdefault((cell.protocol, cell.n_slaves), []).append(cell)
        for (protocol, n_slaves), row in rows.items():
            entries = []
            for cell in sorted(row, key=lambda c: c.mad):
                text = _format_value(cell.computed)
                if cell.discrepancy:
                    text += f"* [{_format_value(cell.reference)}]"
                entries.append(f"{text:<22}")
            lines.append(f"{protocol.value.upper():<10}{n_slaves:<4}" + "".join(entries))
        lines.append("")
    return "\n".join(lines)


CSV_HEADER = [
    "table",
    "quantity",
    "protocol",
    "n_slaves",
    "mad",
    "gains",
    "mati",
    "h_m",
    "h_s",
    "feasible",
    "computed",
    "reference",
    "discrepancy",
]


def write_tables(tables: TableSet, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write tables.txt and tables.csv into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / "tables.txt"
    text_path.write_text(format_tables(tables))
    rows = [
        [
            cell.table,
            cell.quantity,
            cell.protocol.value,
            cell.n_slaves,
            cell.mad,
            cell.gains,
            cell.mati,
            cell.h_m,
            cell.h_s,
            cell.feasible,
            "-" if cell.computed is None else cell.computed,
            "-" if cell.reference is None else cell.reference,
            cell.discrepancy,
        ]
        for cell in tables.cells
    ]
    csv_path = write_csv(out_dir / "tables.csv", CSV_HEADER, rows)
    logger.info(f"Wrote {text_path} and {csv_path}")
    return text_path, csv_path
