"""Orbital-object catalogue: ingest, validation, and mutation.

The canonical interchange format is a CSV with one row per object
(header ``id,name,epoch_unix,sma_km,ecc,inc_deg,raan_deg,argp_deg,
mean_anom_deg,cross_section_m2``). Two-line element sets can be
ingested as well; they are converted to the same mean-element
representation, deriving the semi-major axis from the mean motion via
Kepler's third law.

Angles are stored in radians internally. The CSV carries degrees, so
serialization performs the unit conversion with 50-digit decimal
arithmetic and emits 30 significant digits; parsing converts back the
same way. This makes ``parse(serialize(c)) == c`` hold bit-exactly,
which plain double-precision multiplication by pi/180 cannot guarantee.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal, localcontext

from .constants import MU_EARTH_KM3_S2, R_EARTH_KM, TWO_PI


class CatalogueError(Exception):
    """Base class for catalogue ingest and mutation failures."""


class ChecksumError(CatalogueError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"TLE checksum mismatch on line {line_no}")


class FormatError(CatalogueError):
    def __init__(self, line_no: int, column, message: str = ""):
        self.line_no = line_no
        self.column = column
        detail = f": {message}" if message else ""
        super().__init__(f"malformed input at line {line_no}, {column}{detail}")


class RangeError(CatalogueError):
    def __init__(self, row: int, field: str, message: str = ""):
        self.row = row
        self.field = field
        detail = f": {message}" if message else ""
        super().__init__(f"value out of range at row {row}, field {field!r}{detail}")


class DuplicateId(CatalogueError):
    def __init__(self, object_id: str):
        self.object_id = object_id
        super().__init__(f"duplicate object id {object_id!r}")


class UnknownId(CatalogueError):
    def __init__(self, object_id: str):
        self.object_id = object_id
        super().__init__(f"unknown object id {object_id!r}")


def _normalize_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    if theta >= TWO_PI:  # fmod artefact for values just below a multiple
        theta -= TWO_PI
    return theta


@dataclass(frozen=True)
class KeplerianElements:
    """Mean Keplerian elements at a per-object epoch.

    epoch is UTC unix seconds; the semi-major axis is in km; the four
    angles are radians, normalized to [0, 2*pi) on construction.
    """

    epoch: float
    semi_major_axis_km: float
    eccentricity: float
    inclination_rad: float
    raan_rad: float
    arg_perigee_rad: float
    mean_anomaly_rad: float

    def __post_init__(self):
        if not math.isfinite(self.epoch):
            raise ValueError("epoch must be finite")
        if not (self.semi_major_axis_km > R_EARTH_KM):
            raise ValueError(
                f"semi-major axis {self.semi_major_axis_km} km must exceed "
                f"the Earth radius {R_EARTH_KM} km"
            )
        if not (0.0 <= self.eccentricity < 1.0):
            raise ValueError(f"eccentricity {self.eccentricity} outside [0, 1)")
        perigee_alt = self.semi_major_axis_km * (1.0 - self.eccentricity) - R_EARTH_KM
        if not (perigee_alt > 0.0):
            raise ValueError(f"perigee altitude {perigee_alt} km not above the surface")
        for field in ("inclination_rad", "raan_rad", "arg_perigee_rad", "mean_anomaly_rad"):
            value = getattr(self, field)
            if not math.isfinite(value):
                raise ValueError(f"{field} must be finite")
            object.__setattr__(self, field, _normalize_angle(value))


@dataclass(frozen=True)
class CatalogueObject:
    """One catalogued orbital object."""

    id: str
    name: str
    elements: KeplerianElements
    cross_section_m2: float = 1.0

    def __post_init__(self):
        if not self.id:
            raise ValueError("object id must be non-empty")
        if not (self.cross_section_m2 > 0.0):
            raise ValueError(f"cross section {self.cross_section_m2} must be positive")


@dataclass(frozen=True)
class Catalogue:
    """Immutable, id-sorted collection of catalogue objects."""

    objects: tuple[CatalogueObject, ...]
    source_label: str = ""

    def __post_init__(self):
        ordered = tuple(sorted(self.objects, key=lambda o: o.id))
        seen = set()
        for obj in ordered:
            if obj.id in seen:
                raise DuplicateId(obj.id)
            seen.add(obj.id)
        object.__setattr__(self, "objects", ordered)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def ids(self) -> tuple[str, ...]:
        return tuple(obj.id for obj in self.objects)

    def get(self, object_id: str) -> CatalogueObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise UnknownId(object_id)

    def __contains__(self, object_id: str) -> bool:
        return any(obj.id == object_id for obj in self.objects)


# ---------------------------------------------------------------------------
# Exact degree <-> radian conversion for the CSV interchange format.

_PI_50 = Decimal("3.14159265358979323846264338327950288419716939937511")


def _rad_to_deg_text(rad: float) -> str:
    with localcontext() as ctx:
        ctx.prec = 50
        deg = Decimal(rad) * Decimal(180) / _PI_50
        ctx.prec = 30
        return str(+deg)


def _deg_text_to_rad(text: str) -> float:
    with localcontext() as ctx:
        ctx.prec = 50
        return float(Decimal(text) * _PI_50 / Decimal(180))


# ---------------------------------------------------------------------------
# CSV interchange

CSV_HEADER = (
    "id,name,epoch_unix,sma_km,ecc,inc_deg,raan_deg,argp_deg,"
    "mean_anom_deg,cross_section_m2"
)
_CSV_FIELDS = CSV_HEADER.split(",")


def serialize_catalogue_csv(catalogue: Catalogue) -> str:
    """Render a catalogue as canonical CSV (UTF-8 text, LF endings)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for obj in catalogue:
        el = obj.elements
        writer.writerow(
            [
                obj.id,
                obj.name,
                repr(el.epoch),
                repr(el.semi_major_axis_km),
                repr(el.eccentricity),
                _rad_to_deg_text(el.inclination_rad),
                _rad_to_deg_text(el.raan_rad),
                _rad_to_deg_text(el.arg_perigee_rad),
                _rad_to_deg_text(el.mean_anomaly_rad),
                repr(obj.cross_section_m2),
            ]
        )
    return buf.getvalue()


def catalogue_digest(catalogue: Catalogue) -> str:
    """SHA-256 hex digest of the canonical CSV serialization."""
    return hashlib.sha256(serialize_catalogue_csv(catalogue).encode("utf-8")).hexdigest()


def parse_catalogue_csv(text: str, source_label: str = "csv") -> Catalogue:
    """Parse canonical catalogue CSV.

    Leading ``#`` comment lines (tool provenance headers) are skipped;
    the first non-comment line must be the exact canonical header.
    """
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    if start >= len(lines) or all(not ln.strip() for ln in lines[start:]):
        return Catalogue(objects=(), source_label=source_label)
    if lines[start] != CSV_HEADER:
        raise FormatError(start + 1, "header", "expected canonical catalogue header")

    reader = csv.reader(io.StringIO("\n".join(lines[start + 1 :])))
    objects = []
    seen = set()
    for row_offset, row in enumerate(reader):
        row_no = start + 2 + row_offset
        if not row:
            continue
        if len(row) != len(_CSV_FIELDS):
            raise FormatError(row_no, "row", f"expected {len(_CSV_FIELDS)} fields, got {len(row)}")
        (
            obj_id,
            name,
            epoch_s,
            sma_s,
            ecc_s,
            inc_s,
            raan_s,
            argp_s,
            manom_s,
            cs_s,
        ) = row
        try:
            epoch = float(epoch_s)
            sma = float(sma_s)
            ecc = float(ecc_s)
            cross_section = float(cs_s)
            inc = _deg_text_to_rad(inc_s)
            raan = _deg_text_to_rad(raan_s)
            argp = _deg_text_to_rad(argp_s)
            manom = _deg_text_to_rad(manom_s)
        except (ValueError, ArithmeticError) as exc:
            raise FormatError(row_no, "numeric field", str(exc)) from exc
        if not (0.0 <= ecc < 1.0):
            raise RangeError(row_no, "ecc", f"eccentricity {ecc} outside [0, 1)")
        if not (sma > R_EARTH_KM):
            raise RangeError(row_no, "sma_km", f"semi-major axis {sma} km below Earth radius")
        if not (sma * (1.0 - ecc) > R_EARTH_KM):
            raise RangeError(row_no, "sma_km", "perigee below the surface")
        if not (cross_section > 0.0):
            raise RangeError(row_no, "cross_section_m2", "must be positive")
        if obj_id in seen:
            raise DuplicateId(obj_id)
        seen.add(obj_id)
        elements = KeplerianElements(
            epoch=epoch,
            semi_major_axis_km=sma,
            eccentricity=ecc,
            inclination_rad=inc,
            raan_rad=raan,
            arg_perigee_rad=argp,
            mean_anomaly_rad=manom,
        )
        objects.append(
            CatalogueObject(id=obj_id, name=name, elements=elements, cross_section_m2=cross_section)
        )
    return Catalogue(objects=tuple(objects), source_label=source_label)


# ---------------------------------------------------------------------------
# Two-line element ingest

_TLE_LINE_LEN = 69


def tle_checksum(line: str) -> int:
    """Mod-10 checksum over the first 68 columns: digits count their
    value, '-' counts 1, everything else 0."""
    total = 0
    for ch in line[: _TLE_LINE_LEN - 1]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def _check_tle_line(line: str, line_no: int) -> None:
    if len(line) != _TLE_LINE_LEN:
        raise FormatError(line_no, f"column {len(line) + 1}", "TLE line must be 69 characters")
    if not line[_TLE_LINE_LEN - 1].isdigit():
        raise FormatError(line_no, f"column {_TLE_LINE_LEN}", "checksum column must be a digit")
    if tle_checksum(line) != int(line[_TLE_LINE_LEN - 1]):
        raise ChecksumError(line_no)


def _tle_field(line: str, line_no: int, start: int, end: int, label: str) -> float:
    raw = line[start:end].strip()
    try:
        return float(raw)
    except ValueError as exc:
        raise FormatError(line_no, f"column {start + 1}", f"bad {label}: {raw!r}") from exc


def _tle_epoch_to_unix(line1: str, line_no: int) -> float:
    yy_raw = line1[18:20].strip()
    day_raw = line1[20:32].strip()
    try:
        yy = int(yy_raw)
        day = float(day_raw)
    except ValueError as exc:
        raise FormatError(line_no, "column 19", f"bad epoch: {yy_raw!r} {day_raw!r}") from exc
    year = 2000 + yy if yy < 57 else 1900 + yy
    jan1 = datetime(year, 1, 1, tzinfo=timezone.utc).timestamp()
    return jan1 + (day - 1.0) * 86400.0


def semi_major_axis_from_mean_motion(mean_motion_rev_day: float) -> float:
    """a = (mu / n^2)^(1/3) with n in rad/s."""
    n_rad_s = mean_motion_rev_day * TWO_PI / 86400.0
    return (MU_EARTH_KM3_S2 / (n_rad_s * n_rad_s)) ** (1.0 / 3.0)


def parse_tle(text: str, source_label: str = "tle") -> Catalogue:
    """Parse a sequence of TLE records (optional name line, then the
    two 69-column element lines) into a catalogue."""
    objects = []
    seen = set()
    pending_name = ""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i].rstrip("\r\n")
        line_no = i + 1
        if not raw.strip():
            i += 1
            continue
        if not raw.startswith("1 "):
            # A name line for the record that follows.
            pending_name = raw.strip()
            i += 1
            continue
        if i + 1 >= len(lines):
            raise FormatError(line_no + 1, "column 1", "missing second TLE line")
        line1 = raw
        line2 = lines[i + 1].rstrip("\r\n")
        if not line2.startswith("2 "):
            raise FormatError(line_no + 1, "column 1", "expected line starting with '2 '")
        _check_tle_line(line1, line_no)
        _check_tle_line(line2, line_no + 1)

        obj_id = line1[2:7].strip()
        if line2[2:7].strip() != obj_id:
            raise FormatError(line_no + 1, "column 3", "catalog number differs between lines")
        epoch = _tle_epoch_to_unix(line1, line_no)
        inc_deg = _tle_field(line2, line_no + 1, 8, 16, "inclination")
        raan_deg = _tle_field(line2, line_no + 1, 17, 25, "RAAN")
        ecc_raw = line2[26:33].strip()
        try:
            ecc = float("0." + ecc_raw)
        except ValueError as exc:
            raise FormatError(line_no + 1, "column 27", f"bad eccentricity: {ecc_raw!r}") from exc
        argp_deg = _tle_field(line2, line_no + 1, 34, 42, "argument of perigee")
        manom_deg = _tle_field(line2, line_no + 1, 43, 51, "mean anomaly")
        mean_motion = _tle_field(line2, line_no + 1, 52, 63, "mean motion")
        if mean_motion <= 0.0:
            raise FormatError(line_no + 1, "column 53", "mean motion must be positive")
        sma = semi_major_axis_from_mean_motion(mean_motion)
        try:
            elements = KeplerianElements(
                epoch=epoch,
                semi_major_axis_km=sma,
                eccentricity=ecc,
                inclination_rad=math.radians(inc_deg),
                raan_rad=math.radians(raan_deg),
                arg_perigee_rad=math.radians(argp_deg),
                mean_anomaly_rad=math.radians(manom_deg),
            )
        except ValueError as exc:
            raise FormatError(line_no + 1, "column 53", str(exc)) from exc
        if obj_id in seen:
            raise DuplicateId(obj_id)
        seen.add(obj_id)
        objects.append(
            CatalogueObject(
                id=obj_id,
                name=pending_name,
                elements=elements,
                cross_section_m2=1.0,
            )
        )
        pending_name = ""
        i += 2
    return Catalogue(objects=tuple(objects), source_label=source_label)


def remove_object(catalogue: Catalogue, object_id: str) -> Catalogue:
    """Return a new catalogue with exactly the given object removed."""
    if object_id not in catalogue:
        raise UnknownId(object_id)
    survivors = tuple(obj for obj in catalogue if obj.id != object_id)
    return Catalogue(objects=survivors, source_label=catalogue.source_label)
