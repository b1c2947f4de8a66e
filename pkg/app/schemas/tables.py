from typing import Dict, List, Optional

from pydantic import BaseModel

from app.schemas.network import Protocol


class TableCell(BaseModel):
    """One computed entry with its reference counterpart."""

    table: str
    quantity: str
    protocol: Protocol
    n_slaves: int
    mad: float
    gains: str
    mati: float
    h_m: float
    h_s: float
    feasible: bool
    computed: Optional[float] = None
    reference: Optional[float] = None
    discrepancy: bool = False


class TableSet(BaseModel):
    """All reproduced margin tables."""

    cells: List[TableCell]
    titles: Dict[str, str]

    def table(self, name: str) -> List[TableCell]:
        return [cell for cell in self.cells if cell.table == name]

    def cell(self, table: str, protocol: Protocol, n_slaves: int, mad: float) -> TableCell:
        for cell in self.table(table):
            if cell.protocol == Protocol(protocol) and cell.n_slaves == n_slaves and abs(cell.mad - mad) < 1e-12:
                return cell
        raise KeyError(f"no cell {table}/{protocol}/{n_slaves}/{mad}")
