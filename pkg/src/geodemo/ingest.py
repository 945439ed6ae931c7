"""District survey-table ingestion.

Parses district-level CSV tables against an INI schema, flags cells that
fall under the statistical-disclosure suppression threshold, reconstructs
suppressed values from group totals, and converts counts to percentage
rates.
"""

from __future__ import annotations

import configparser
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadDistrictCode,
    DuplicateDistrict,
    EmptyTable,
    GroupTotalInconsistent,
    MissingColumn,
    NoGroupTotal,
    RateOutOfRange,
    SuppressedCellsRemain,
    ZeroDenominator,
)

log = logging.getLogger(__name__)

DEFAULT_REGION_PREFIXES = ("E06", "E07", "E08", "E09", "W06", "S12")
DEFAULT_SUPPRESSION_THRESHOLD = 500.0
DEFAULT_SUPPRESSION_SENTINEL = "!"

# totals may disagree with the sum of their cells by survey rounding
TOTALS_ROUNDING_TOLERANCE = 0.5


@dataclass(frozen=True)
class DistrictCode:
    """GSS-style district identifier plus display name."""

    code: str
    name: str

    def __post_init__(self):
        if not self.code:
            raise BadDistrictCode("empty district code")


@dataclass
class CellValue:
    """One table cell: a count or percentage, with suppression state."""

    value: float | None
    suppressed: bool = False
    reconstructed: bool = False

    def __post_init__(self):
        if self.suppressed and not self.reconstructed and self.value is not None:
            raise ValueError("suppressed cell must not carry a value before reconstruction")
        if self.reconstructed and self.value is None:
            raise ValueError("reconstructed cell must carry a value")


@dataclass
class MeasureSpec:
    """Schema entry for one measure column."""

    name: str
    domain: str = "Social"
    dimension: str = ""
    polarity: str = "AsIs"
    kind: str = "count"          # "count" or "percentage"
    group: str | None = None     # suppression group, if any
    denominator: str | None = None


@dataclass
class TableSchema:
    """Declares the measure columns of a district table.

    Loaded from an INI file with sections:

    [options]       suppression_threshold, suppression_sentinel, region_prefixes
    [measures]      column = Domain/Dimension[/Polarity[/kind]]
    [groups]        column = group-name
    [totals]        group-name = total-column
    [denominators]  column = denominator-column
    """

    measures: list[MeasureSpec]
    totals: dict[str, str] = field(default_factory=dict)  # group -> total column
    suppression_threshold: float = DEFAULT_SUPPRESSION_THRESHOLD
    suppression_sentinel: str = DEFAULT_SUPPRESSION_SENTINEL
    region_prefixes: tuple[str, ...] = DEFAULT_REGION_PREFIXES

    def measure_names(self) -> list[str]:
        return [m.name for m in self.measures]

    def measure(self, name: str) -> MeasureSpec:
        for m in self.measures:
            if m.name == name:
                return m
        raise KeyError(name)


def load_schema(path: str | Path) -> TableSchema:
    """Parse a TableSchema from an INI file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep measure names case-sensitive
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    if not cp.has_section("measures"):
        raise MissingColumn(f"schema {path} has no [measures] section")

    measures = []
    for name, decl in cp.items("measures"):
        parts = [p.strip() for p in decl.split("/")]
        spec = MeasureSpec(name=name)
        if len(parts) >= 1 and parts[0]:
            spec.domain = parts[0]
        if len(parts) >= 2 and parts[1]:
            spec.dimension = parts[1]
        if len(parts) >= 3 and parts[2]:
            spec.polarity = parts[2]
        if len(parts) >= 4 and parts[3]:
            spec.kind = parts[3]
        measures.append(spec)
    by_name = {m.name: m for m in measures}

    if cp.has_section("groups"):
        for name, group in cp.items("groups"):
            if name not in by_name:
                raise MissingColumn(f"[groups] references unknown measure {name!r}")
            by_name[name].group = group
    if cp.has_section("denominators"):
        for name, denom in cp.items("denominators"):
            if name not in by_name:
                raise MissingColumn(f"[denominators] references unknown measure {name!r}")
            by_name[name].denominator = denom

    totals = dict(cp.items("totals")) if cp.has_section("totals") else {}

    threshold = DEFAULT_SUPPRESSION_THRESHOLD
    sentinel = DEFAULT_SUPPRESSION_SENTINEL
    prefixes = DEFAULT_REGION_PREFIXES
    if cp.has_section("options"):
        opts = dict(cp.items("options"))
        if "suppression_threshold" in opts:
            threshold = float(opts["suppression_threshold"])
        if "suppression_sentinel" in opts:
            sentinel = opts["suppression_sentinel"]
        if "region_prefixes" in opts:
            prefixes = tuple(p.strip() for p in opts["region_prefixes"].split(",") if p.strip())

    return TableSchema(
        measures=measures,
        totals=totals,
        suppression_threshold=threshold,
        suppression_sentinel=sentinel,
        region_prefixes=prefixes,
    )


@dataclass
class RawTable:
    """District rows of raw cells plus group totals."""

    schema: TableSchema
    districts: list[DistrictCode]
    cells: list[dict[str, CellValue]]            # parallel to districts
    totals: dict[str, dict[str, float]]          # group -> code -> total
    denominators: dict[str, dict[str, float]]    # column -> code -> value
    clamped_cells: list[tuple[str, str]] = field(default_factory=list)

    @property
    def n_districts(self) -> int:
        return len(self.districts)

    def suppressed_cells(self) -> list[tuple[str, str]]:
        out = []
        for dc, row in zip(self.districts, self.cells):
            for name, cell in row.items():
                if cell.suppressed and not cell.reconstructed:
                    out.append((dc.code, name))
        return out

    def reconstructed_cells(self) -> list[tuple[str, str]]:
        out = []
        for dc, row in zip(self.districts, self.cells):
            for name, cell in row.items():
                if cell.reconstructed:
                    out.append((dc.code, name))
        return out


@dataclass
class RateTable:
    """Districts by variables matrix of percentage rates."""

    districts: list[DistrictCode]
    variables: list[str]
    values: np.ndarray  # (n_districts, n_variables) float64

    @property
    def n_districts(self) -> int:
        return len(self.districts)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.variables.index(name)]

    def select(self, names: list[str]) -> "RateTable":
        idx = [self.variables.index(n) for n in names]
        return RateTable(self.districts, list(names), self.values[:, idx].copy())


def _parse_cell(raw: str, spec: MeasureSpec, schema: TableSchema) -> CellValue:
    raw = raw.strip()
    if raw == schema.suppression_sentinel or raw == "":
        return CellValue(value=None, suppressed=True)
    value = float(raw)
    if value < 0:
        raise RateOutOfRange(f"negative cell value {value} in column {spec.name!r}")
    if spec.kind == "count" and value < schema.suppression_threshold:
        # below-threshold counts are disclosure risks: treat like the sentinel
        return CellValue(value=None, suppressed=True)
    return CellValue(value=value)


def load_district_table(path: str | Path, schema: TableSchema) -> RawTable:
    """Load a district CSV against `schema`.

    The first column is the district code, the second the district name;
    remaining columns must include every schema measure, every group-total
    column and every denominator column. Cells matching the suppression
    sentinel, or counts below the suppression threshold, are flagged
    suppressed.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path} is empty") from None
        rows = [r for r in reader if any(f.strip() for f in r)]

    if len(header) < 2:
        raise MissingColumn(f"{path} must start with district code and name columns")
    colpos = {name.strip(): i for i, name in enumerate(header)}

    needed = list(schema.measure_names())
    needed += [c for c in schema.totals.values()]
    needed += [m.denominator for m in schema.measures if m.denominator]
    missing = [c for c in dict.fromkeys(needed) if c not in colpos]
    if missing:
        raise MissingColumn(f"{path} is missing columns: {', '.join(missing)}")

    if not rows:
        raise EmptyTable(f"{path} has zero data rows")

    districts: list[DistrictCode] = []
    cells: list[dict[str, CellValue]] = []
    totals: dict[str, dict[str, float]] = {g: {} for g in schema.totals}
    denominators: dict[str, dict[str, float]] = {
        m.denominator: {} for m in schema.measures if m.denominator
    }
    seen: set[str] = set()

    for row in rows:
        code = row[0].strip()
        name = row[1].strip()
        if code in seen:
            raise DuplicateDistrict(f"district code {code!r} appears more than once")
        seen.add(code)
        if not any(code.startswith(p) for p in schema.region_prefixes):
            raise BadDistrictCode(
                f"district code {code!r} does not match region prefixes "
                f"{', '.join(schema.region_prefixes)}"
            )
        dc = DistrictCode(code=code, name=name)
        districts.append(dc)

        row_cells: dict[str, CellValue] = {}
        for spec in schema.measures:
            row_cells[spec.name] = _parse_cell(row[colpos[spec.name]], spec, schema)
        cells.append(row_cells)

        for group, col in schema.totals.items():
            raw = row[colpos[col]].strip()
            if raw and raw != schema.suppression_sentinel:
                totals[group][code] = float(raw)
        for col in denominators:
            raw = row[colpos[col]].strip()
            if raw and raw != schema.suppression_sentinel:
                denominators[col][code] = float(raw)

    table = RawTable(
        schema=schema,
        districts=districts,
        cells=cells,
        totals=totals,
        denominators=denominators,
    )
    _check_totals_consistency(table)
    log.info(
        "loaded %d districts x %d measures from %s (%d suppressed cells)",
        table.n_districts, len(schema.measures), path, len(table.suppressed_cells()),
    )
    return table


def _check_totals_consistency(table: RawTable) -> None:
    """Group totals must cover the sum of their known cells (within rounding)."""
    for group, col in table.schema.totals.items():
        members = [m.name for m in table.schema.measures if m.group == group]
        for dc, row in zip(table.districts, table.cells):
            total = table.totals[group].get(dc.code)
            if total is None:
                continue
            known = sum(row[m].value for m in members if row[m].value is not None)
            if known - total > TOTALS_ROUNDING_TOLERANCE:
                raise GroupTotalInconsistent(
                    f"district {dc.code}: group {group!r} cells sum to {known} "
                    f"but total column {col!r} holds {total}"
                )


def reconstruct_suppressed(table: RawTable) -> RawTable:
    """Fill suppressed cells from group totals.

    A single suppressed cell in a group takes the residual
    total - sum(known); several suppressed cells share it equally.
    Negative residuals clamp to zero with a logged warning.
    """
    if not table.suppressed_cells():
        return table

    new_cells = [dict(row) for row in table.cells]
    clamped: list[tuple[str, str]] = []

    for i, dc in enumerate(table.districts):
        row = table.cells[i]
        by_group: dict[str, list[str]] = {}
        for spec in table.schema.measures:
            cell = row[spec.name]
            if cell.suppressed and not cell.reconstructed:
                if spec.group is None:
                    raise NoGroupTotal(
                        f"district {dc.code}: suppressed cell {spec.name!r} "
                        "belongs to no group"
                    )
                by_group.setdefault(spec.group, []).append(spec.name)

        for group, names in by_group.items():
            total = table.totals.get(group, {}).get(dc.code)
            if total is None:
                raise NoGroupTotal(
                    f"district {dc.code}: group {group!r} has suppressed cells "
                    "but no total"
                )
            members = [m.name for m in table.schema.measures if m.group == group]
            known = sum(
                row[m].value for m in members
                if row[m].value is not None
            )
            residual = total - known
            share = residual / len(names)
            if share < 0:
                log.warning(
                    "district %s group %s: negative residual %s clamped to 0",
                    dc.code, group, residual,
                )
                share = 0.0
                clamped.extend((dc.code, n) for n in names)
            for n in names:
                new_cells[i][n] = CellValue(value=share, suppressed=True, reconstructed=True)

    return RawTable(
        schema=table.schema,
        districts=table.districts,
        cells=new_cells,
        totals=table.totals,
        denominators=table.denominators,
        clamped_cells=clamped,
    )


def to_percentages(table: RawTable) -> RateTable:
    """Convert counts to percentage rates; percentage columns pass through."""
    remaining = table.suppressed_cells()
    if remaining:
        raise SuppressedCellsRemain(
            f"{len(remaining)} suppressed cells not reconstructed, e.g. {remaining[0]}"
        )
    names = table.schema.measure_names()
    values = np.empty((table.n_districts, len(names)), dtype=np.float64)
    for j, spec in enumerate(table.schema.measures):
        for i, dc in enumerate(table.districts):
            count = table.cells[i][spec.name].value
            if spec.kind == "percentage":
                rate = count
            else:
                if spec.denominator is None:
                    raise ZeroDenominator(
                        f"count measure {spec.name!r} declares no denominator"
                    )
                denom = table.denominators[spec.denominator].get(dc.code)
                if denom is None or denom <= 0:
                    raise ZeroDenominator(
                        f"district {dc.code}: denominator {spec.denominator!r} "
                        f"is {denom!r}"
                    )
                rate = 100.0 * count / denom
            if rate < 0.0 or rate > 100.0:
                raise RateOutOfRange(
                    f"district {dc.code} measure {spec.name!r}: rate {rate} "
                    "outside [0, 100]"
                )
            values[i, j] = rate
    return RateTable(districts=list(table.districts), variables=names, values=values)


def ingestion_report(table: RawTable) -> list[dict[str, str]]:
    """Rows for the ingestion report CSV: every suppressed/reconstructed cell."""
    clamped = set(table.clamped_cells)
    rows = []
    for dc, row in zip(table.districts, table.cells):
        for name, cell in row.items():
            if not cell.suppressed:
                continue
            if cell.reconstructed:
                status = "clamped" if (dc.code, name) in clamped else "reconstructed"
                value = repr(cell.value)
            else:
                status = "suppressed"
                value = ""
            rows.append({
                "district_code": dc.code,
                "district_name": dc.name,
                "measure": name,
                "status": status,
                "value": value,
            })
    return rows
