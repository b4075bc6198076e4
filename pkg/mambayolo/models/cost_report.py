"""Parameter and multiply-accumulate accounting records."""
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostRow:
    """
    Cost of one layer.

    macs counts multiply-accumulates of convolutions, projections and the
    scan recurrence; aux_ops counts elementwise work (norms, activations,
    residual adds, gating) and is kept out of the MAC total.
    """

    path: str
    kind: str
    params: int
    macs: int = 0
    aux_ops: int = 0


@dataclass(frozen=True)
class BlockShape:
    name: str
    in_shape: tuple
    out_shape: tuple
    params: int
    macs: int


@dataclass
class CostReport:
    rows: list = field(default_factory=list)
    input_shape: tuple = None

    def add(self, row: CostRow) -> CostRow:
        self.rows.append(row)
        return row

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_aux_ops(self) -> int:
        return sum(r.aux_ops for r in self.rows)

    def subtotal(self, prefix: str) -> tuple:
        """(params, macs) over rows whose path starts with prefix."""
        selected = [r for r in self.rows if r.path == prefix or r.path.startswith(f"{prefix}.")]
        return sum(r.params for r in selected), sum(r.macs for r in selected)

    @property
    def flops(self) -> int:
        """Conventional FLOP figure: two per MAC."""
        return 2 * self.total_macs
