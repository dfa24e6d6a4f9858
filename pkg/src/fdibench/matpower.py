"""Parser for a restricted MATPOWER-style case format.

Only the columns needed for the DC measurement model are kept: bus id, bus
type and solved voltage angle from the bus block; endpoints, reactance and
status from the branch block. Everything else is parsed and discarded.
Angles stay in degrees here; conversion to radians happens in dc_grid.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources

from .errors import CaseParseError, CaseStructureError, CaseValidationError

BUILTIN_NAMES = ("ieee9", "ieee57", "ieee118")
_BUILTIN_FILES = {"ieee9": "case9.m", "ieee57": "case57.m", "ieee118": "case118.m"}


class BusType(enum.Enum):
    PQ = 1
    PV = 2
    REFERENCE = 3


class BranchStatus(enum.Enum):
    OUT_OF_SERVICE = 0
    IN_SERVICE = 1


@dataclass(frozen=True)
class BusRecord:
    id: int
    voltage_angle: float  # degrees, as read from the solved case
    bus_type: BusType


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    reactance: float  # per-unit
    status: BranchStatus


@dataclass(frozen=True)
class CaseSystem:
    name: str
    base_mva: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]

    def in_service_branches(self):
        return [b for b in self.branches if b.status is BranchStatus.IN_SERVICE]


_BLOCK_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([-\d.eE+]+)\s*;")


def _strip_comment(line):
    pos = line.find("%")
    return line[:pos] if pos >= 0 else line


def _parse_blocks(text):
    """Return ({block name: list of (line_no, row floats)}, {scalar name: value})."""
    blocks = {}
    scalars = {}
    current = None
    rows = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            m = _SCALAR_RE.search(line)
            if m:
                scalars[m.group(1)] = float(m.group(2))
                continue
            m = _BLOCK_RE.search(line)
            if m:
                current = m.group(1)
                rows = []
                continue
            continue
        if line.startswith("]"):
            blocks[current] = rows
            current = None
            continue
        if not line.endswith(";"):
            raise CaseParseError("matrix row not terminated by ';'", line=lineno)
        fields = line[:-1].split()
        try:
            row = [float(f) for f in fields]
        except ValueError as exc:
            raise CaseParseError(f"non-numeric field in matrix row: {exc}", line=lineno)
        rows.append((lineno, row))
    if current is not None:
        raise CaseParseError(f"block 'mpc.{current}' never closed", line=lineno)
    return blocks, scalars


def parse_case(text, name="case"):
    """Parse restricted MATPOWER case text into a CaseSystem.

    Raises CaseParseError on malformed rows (with the line number),
    CaseStructureError when a required block is missing, and
    CaseValidationError on duplicate bus ids or zero in-service reactances.
    """
    blocks, scalars = _parse_blocks(text)
    if "baseMVA" not in scalars:
        raise CaseStructureError("missing 'mpc.baseMVA' assignment")
    for required in ("bus", "branch"):
        if required not in blocks:
            raise CaseStructureError(f"missing 'mpc.{required} = [...]' block")

    buses = []
    seen = set()
    for lineno, row in blocks["bus"]:
        if len(row) < 9:
            raise CaseParseError("bus row needs at least 9 columns", line=lineno)
        bus_id = int(row[0])
        if bus_id in seen:
            raise CaseValidationError(f"duplicate bus id {bus_id}")
        seen.add(bus_id)
        try:
            bus_type = BusType(int(row[1]))
        except ValueError:
            raise CaseParseError(f"unknown bus type {row[1]!r}", line=lineno)
        buses.append(BusRecord(id=bus_id, voltage_angle=row[8], bus_type=bus_type))

    n_ref = sum(1 for b in buses if b.bus_type is BusType.REFERENCE)
    if n_ref != 1:
        raise CaseValidationError(f"expected exactly one reference bus, found {n_ref}")

    branches = []
    for lineno, row in blocks["branch"]:
        if len(row) < 11:
            raise CaseParseError("branch row needs at least 11 columns", line=lineno)
        f, t = int(row[0]), int(row[1])
        if f == t:
            raise CaseValidationError(f"branch {f}-{t} is a self-loop")
        if f not in seen or t not in seen:
            raise CaseValidationError(f"branch {f}-{t} references an unknown bus")
        status = BranchStatus.IN_SERVICE if int(row[10]) != 0 else BranchStatus.OUT_OF_SERVICE
        x = row[3]
        if status is BranchStatus.IN_SERVICE and x == 0.0:
            raise CaseValidationError(f"zero reactance on in-service branch {f}-{t}")
        branches.append(BranchRecord(from_bus=f, to_bus=t, reactance=x, status=status))

    return CaseSystem(
        name=name,
        base_mva=scalars["baseMVA"],
        buses=tuple(buses),
        branches=tuple(branches),
    )


def serialize_case(case):
    """Emit a CaseSystem back in the restricted format (re-parseable)."""
    lines = [f"function mpc = {case.name}", f"mpc.baseMVA = {case.base_mva!r};"]
    lines.append("mpc.bus = [")
    for b in case.buses:
        lines.append(f"\t{b.id}\t{b.bus_type.value}\t0\t0\t0\t0\t1\t1\t{b.voltage_angle!r}\t1\t1\t1.1\t0.9;")
    lines.append("];")
    lines.append("mpc.branch = [")
    for br in case.branches:
        lines.append(
            f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.reactance!r}\t0\t0\t0\t0\t0\t0"
            f"\t{br.status.value}\t-360\t360;"
        )
    lines.append("];")
    return "\n".join(lines) + "\n"


def builtin_case_text(name):
    """Verbatim bundled case text for one of ieee9 / ieee57 / ieee118."""
    if name not in _BUILTIN_FILES:
        raise ValueError(f"unknown builtin case {name!r}; choose from {BUILTIN_NAMES}")
    ref = resources.files("fdibench") / "cases" / _BUILTIN_FILES[name]
    return ref.read_text()


def load_builtin(name):
    """Parse one of the three bundled IEEE test cases."""
    return parse_case(builtin_case_text(name), name=name)
