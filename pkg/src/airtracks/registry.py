"""National aircraft registries and the four-tier storage hierarchy.

Registered airframes are keyed by the 24-bit transponder address carried
in every surveillance broadcast and classified into twelve general type
categories plus Unknown. The storage hierarchy derived from a year's
registries is ``year / type / seat bin / address range``; no tier may
enumerate more than 1000 children. Aircraft absent from every registry
fall into an Unknown branch whose third tier is the observation hour and
whose bottom ranges are generated at runtime from the addresses actually
observed in that hour.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import enum
import io
import json
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from airtracks.errors import ConfigError, InputError

# 2^24 - 2 usable addresses; all-zeros and all-ones are reserved.
ICAO24_MIN = 0x000001
ICAO24_MAX = 0xFFFFFE

DEFAULT_MAX_PER_DIR = 1000

_HEX_RE = re.compile(r"^[0-9A-Fa-f]{1,6}$")


def parse_icao24(text: str) -> int:
    """Parse a hex transponder address, rejecting reserved values."""
    token = text.strip()
    if not _HEX_RE.match(token):
        raise ValueError(f"not a hex transponder address: {text!r}")
    value = int(token, 16)
    if not ICAO24_MIN <= value <= ICAO24_MAX:
        raise ValueError(f"transponder address out of range: {text!r}")
    return value


def format_icao24(value: int) -> str:
    """Canonical 6-digit uppercase hex form. Round-trips with parse_icao24."""
    if not ICAO24_MIN <= value <= ICAO24_MAX:
        raise ValueError(f"transponder address out of range: {value:#x}")
    return f"{value:06X}"


class AircraftClass(enum.Enum):
    """Twelve general aircraft type categories plus Unknown.

    Enum values double as directory names in the storage hierarchy.
    """

    FIXED_WING_SINGLE_ENGINE = "FixedWingSingleEngine"
    FIXED_WING_MULTI_ENGINE = "FixedWingMultiEngine"
    ROTORCRAFT = "Rotorcraft"
    GLIDER = "Glider"
    BALLOON = "Balloon"
    AIRSHIP = "Airship"
    GYROPLANE = "Gyroplane"
    WEIGHT_SHIFT_CONTROL = "WeightShiftControl"
    POWERED_PARACHUTE = "PoweredParachute"
    HYBRID_LIFT = "HybridLift"
    UNMANNED_OR_OTHER = "UnmannedOrOther"
    NON_POWERED_OTHER = "NonPoweredOther"
    UNKNOWN = "Unknown"


KNOWN_CLASSES: tuple[AircraftClass, ...] = tuple(
    c for c in AircraftClass if c is not AircraftClass.UNKNOWN
)


@dataclass(frozen=True, order=True)
class HourStamp:
    """One UTC hour of data, e.g. 2020-03-16 hour 05."""

    day: dt.date
    hour: int

    def __post_init__(self) -> None:
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour out of range: {self.hour}")

    @property
    def label(self) -> str:
        return f"{self.day.isoformat()}_{self.hour:02d}"

    @property
    def year(self) -> int:
        return self.day.year

    @classmethod
    def parse(cls, text: str) -> "HourStamp":
        m = re.match(r"^(\d{4})-(\d{2})-(\d{2})[_-](\d{2})$", text.strip())
        if not m:
            raise ValueError(f"not an hour stamp: {text!r}")
        y, mo, d, h = (int(g) for g in m.groups())
        return cls(dt.date(y, mo, d), h)

    @classmethod
    def from_unix(cls, seconds: float) -> "HourStamp":
        t = dt.datetime.fromtimestamp(seconds, dt.timezone.utc)
        return cls(t.date(), t.hour)


@dataclass(frozen=True)
class SeatBin:
    """One seat-count range directory, or the dedicated Unknown bin."""

    lo: int
    hi: int
    label: str
    unknown: bool = False

    def contains(self, seats: int) -> bool:
        return not self.unknown and self.lo <= seats <= self.hi


def default_seat_bins(width: int = 10, max_seats: int = 200) -> tuple[SeatBin, ...]:
    """Seats_Unknown, Seats_001_010 .. Seats_191_200, then Seats_201_plus."""
    bins = [SeatBin(0, 0, "Seats_Unknown", unknown=True)]
    lo = 1
    while lo <= max_seats:
        hi = lo + width - 1
        bins.append(SeatBin(lo, hi, f"Seats_{lo:03d}_{hi:03d}"))
        lo = hi + 1
    bins.append(SeatBin(max_seats + 1, 10**9, f"Seats_{max_seats + 1:03d}_plus"))
    return tuple(bins)


def seat_bin_for(seats: int | None, bins: Sequence[SeatBin]) -> SeatBin:
    if seats is None or seats < 1:
        return bins[0]
    for b in bins[1:]:
        if b.contains(seats):
            return b
    return bins[-1]


@dataclass(frozen=True)
class IcaoRange:
    """Half-open address range [lo, hi); the label is 'LOHEX_HIHEX'."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"empty address range: {self.lo:#x}..{self.hi:#x}")

    @property
    def label(self) -> str:
        return f"{self.lo:06X}_{self.hi:06X}"

    def contains(self, addr: int) -> bool:
        return self.lo <= addr < self.hi


def partition_icao_ranges(
    addresses: Sequence[int], max_per_dir: int = DEFAULT_MAX_PER_DIR
) -> list[IcaoRange]:
    """Partition sorted unique addresses into half-open ranges.

    Each range holds at most ``max_per_dir`` member addresses. Interior
    range bounds abut (hi of one range is lo of the next) so the union
    covers every member with no gaps; the final bound is one past the
    last address, which keeps the upper bound exclusive.
    """
    if max_per_dir < 1:
        raise ValueError("max_per_dir must be positive")
    addrs = list(addresses)
    for prev, cur in zip(addrs, addrs[1:]):
        if cur <= prev:
            raise ValueError("addresses must be strictly ascending")
    ranges: list[IcaoRange] = []
    for start in range(0, len(addrs), max_per_dir):
        chunk = addrs[start : start + max_per_dir]
        if start + max_per_dir < len(addrs):
            hi = addrs[start + max_per_dir]
        else:
            hi = chunk[-1] + 1
        ranges.append(IcaoRange(chunk[0], hi))
    return ranges


@dataclass(frozen=True)
class RegistryEntry:
    """One registered airframe from one country's registry for one year."""

    icao24: int
    aircraft_class: AircraftClass
    seats: int | None
    expiry: dt.date | None
    registry_year: int
    source_country: str


@dataclass(frozen=True)
class HierarchyPath:
    """A four-tier storage address: year / class / seat-or-hour / range."""

    year: int
    class_dir: str
    seat_dir: str
    range_dir: str

    @property
    def parts(self) -> tuple[str, str, str, str]:
        return (str(self.year), self.class_dir, self.seat_dir, self.range_dir)

    def as_posix(self) -> str:
        return "/".join(self.parts)


# Normalized registry type strings and single-character type codes mapped
# to the twelve categories. A class-map config file can extend or replace
# this table.
DEFAULT_CLASS_MAP: dict[str, AircraftClass] = {
    "fixed wing single-engine": AircraftClass.FIXED_WING_SINGLE_ENGINE,
    "fixed wing single engine": AircraftClass.FIXED_WING_SINGLE_ENGINE,
    "4": AircraftClass.FIXED_WING_SINGLE_ENGINE,
    "fixed wing multi-engine": AircraftClass.FIXED_WING_MULTI_ENGINE,
    "fixed wing multi engine": AircraftClass.FIXED_WING_MULTI_ENGINE,
    "5": AircraftClass.FIXED_WING_MULTI_ENGINE,
    "rotorcraft": AircraftClass.ROTORCRAFT,
    "helicopter": AircraftClass.ROTORCRAFT,
    "6": AircraftClass.ROTORCRAFT,
    "glider": AircraftClass.GLIDER,
    "1": AircraftClass.GLIDER,
    "balloon": AircraftClass.BALLOON,
    "2": AircraftClass.BALLOON,
    "airship": AircraftClass.AIRSHIP,
    "blimp/dirigible": AircraftClass.AIRSHIP,
    "3": AircraftClass.AIRSHIP,
    "gyroplane": AircraftClass.GYROPLANE,
    "9": AircraftClass.GYROPLANE,
    "weight-shift-control": AircraftClass.WEIGHT_SHIFT_CONTROL,
    "7": AircraftClass.WEIGHT_SHIFT_CONTROL,
    "powered parachute": AircraftClass.POWERED_PARACHUTE,
    "8": AircraftClass.POWERED_PARACHUTE,
    "hybrid lift": AircraftClass.HYBRID_LIFT,
    "h": AircraftClass.HYBRID_LIFT,
    "other": AircraftClass.UNMANNED_OR_OTHER,
    "uas": AircraftClass.UNMANNED_OR_OTHER,
    "unmanned": AircraftClass.UNMANNED_OR_OTHER,
    "o": AircraftClass.UNMANNED_OR_OTHER,
    "non-powered other": AircraftClass.NON_POWERED_OTHER,
}
# Canonical class names map to themselves.
DEFAULT_CLASS_MAP.update({c.value.lower(): c for c in KNOWN_CLASSES})


@dataclass(frozen=True)
class RegistrySchema:
    """Column names for one country's registry file format."""

    delimiter: str
    address_col: str
    type_col: str
    seats_col: str | None
    expiry_col: str | None


DEFAULT_SCHEMAS: dict[str, RegistrySchema] = {
    "US": RegistrySchema(",", "mode_s_code_hex", "type_aircraft", "no_seats", "expiration_date"),
    "CA": RegistrySchema(",", "mode_s_hex", "aircraft_type", "seats", "expiry_date"),
    "NL": RegistrySchema(",", "icao24", "kind", "seat_count", "valid_until"),
    "IE": RegistrySchema(",", "hex_id", "category", "seats", "expires"),
}

# Duplicate addresses across registries: latest expiry wins, then this order.
COUNTRY_PRECEDENCE = ("US", "CA", "NL", "IE")

_DATE_FORMATS = ("%Y-%m-%d", "%Y%m%d", "%m/%d/%Y")


def _parse_date(text: str) -> dt.date | None:
    token = text.strip()
    if not token:
        return None
    for fmt in _DATE_FORMATS:
        try:
            return dt.datetime.strptime(token, fmt).date()
        except ValueError:
            continue
    return None


def normalize_type_string(raw: str) -> str:
    return " ".join(raw.strip().lower().split())


def load_class_map(path: Path | str) -> tuple[dict[str, AircraftClass], tuple[SeatBin, ...]]:
    """Read the editable class-map file (JSON).

    Keys under "classes" map registry type strings to canonical class
    names; "seat_bin_width" / "seat_bin_max" override the seat binning.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read class map {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"class map {path} is not valid JSON: {exc}") from exc
    class_map = dict(DEFAULT_CLASS_MAP)
    by_name = {c.value: c for c in AircraftClass}
    for key, name in raw.get("classes", {}).items():
        if name not in by_name:
            raise ConfigError(f"class map {path}: unknown class {name!r}")
        class_map[normalize_type_string(key)] = by_name[name]
    bins = default_seat_bins(
        width=int(raw.get("seat_bin_width", 10)),
        max_seats=int(raw.get("seat_bin_max", 200)),
    )
    return class_map, bins


def parse_registry(
    source: Path | str | bytes,
    fmt: str,
    year: int,
    *,
    schemas: Mapping[str, RegistrySchema] | None = None,
    class_map: Mapping[str, AircraftClass] | None = None,
) -> tuple[list[RegistryEntry], int]:
    """Parse one country's registry file into entries.

    Returns (entries, skipped) where skipped counts rows whose transponder
    address failed to parse. Registered airframes whose type string has no
    mapping fall into UnmannedOrOther so that the Unknown branch stays
    reserved for aircraft absent from every registry.
    """
    schema = (schemas or DEFAULT_SCHEMAS).get(fmt)
    if schema is None:
        raise ConfigError(f"unknown registry format tag: {fmt!r}")
    cmap = class_map or DEFAULT_CLASS_MAP

    if isinstance(source, bytes):
        text = source.decode("utf-8", errors="replace")
        origin = "<bytes>"
    else:
        try:
            text = Path(source).read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            raise InputError(f"cannot read registry {source}: {exc}") from exc
        origin = str(source)

    reader = csv.DictReader(io.StringIO(text), delimiter=schema.delimiter)
    if reader.fieldnames is None:
        return [], 0
    header = {name.strip().lower() for name in reader.fieldnames}
    if schema.address_col not in header:
        raise InputError(f"registry {origin} lacks column {schema.address_col!r}")

    entries: list[RegistryEntry] = []
    skipped = 0
    for row in reader:
        row = {(k or "").strip().lower(): (v or "") for k, v in row.items()}
        try:
            addr = parse_icao24(row.get(schema.address_col, ""))
        except ValueError:
            skipped += 1
            continue
        cls = cmap.get(
            normalize_type_string(row.get(schema.type_col, "")),
            AircraftClass.UNMANNED_OR_OTHER,
        )
        seats: int | None = None
        if schema.seats_col:
            try:
                n = int(row.get(schema.seats_col, "").strip() or "0")
                seats = n if n >= 1 else None
            except ValueError:
                seats = None
        expiry = _parse_date(row.get(schema.expiry_col, "")) if schema.expiry_col else None
        entries.append(RegistryEntry(addr, cls, seats, expiry, year, fmt))
    return entries, skipped


class RegistryLookup:
    """Immutable per-year address lookup plus precomputed range partitions.

    Safe for unsynchronized concurrent reads; building is single-threaded.
    """

    def __init__(
        self,
        year: int,
        entries: Mapping[int, RegistryEntry],
        bins: Sequence[SeatBin],
        max_per_dir: int = DEFAULT_MAX_PER_DIR,
    ):
        self.year = year
        self.max_per_dir = max_per_dir
        self._bins = tuple(bins)
        self._entries = dict(entries)
        self._expired = frozenset(
            a
            for a, e in self._entries.items()
            if e.expiry is not None and e.expiry < dt.date(year, 1, 1)
        )
        groups: dict[tuple[AircraftClass, str], list[int]] = defaultdict(list)
        for addr, entry in self._entries.items():
            b = seat_bin_for(entry.seats, self._bins)
            groups[(entry.aircraft_class, b.label)].append(addr)
        self._ranges: dict[tuple[AircraftClass, str], list[IcaoRange]] = {}
        self._range_los: dict[tuple[AircraftClass, str], list[int]] = {}
        for key, addrs in groups.items():
            rr = partition_icao_ranges(sorted(addrs), max_per_dir)
            self._ranges[key] = rr
            self._range_los[key] = [r.lo for r in rr]

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, icao24: int) -> RegistryEntry | None:
        return self._entries.get(icao24)

    def is_expired(self, icao24: int) -> bool:
        """Registered with an expiry before this data year. Flag only;
        classification still uses the entry."""
        return icao24 in self._expired

    def classify(self, icao24: int) -> tuple[AircraftClass, SeatBin | None]:
        """Class and seat bin, or (UNKNOWN, None) for the hour branch."""
        entry = self._entries.get(icao24)
        if entry is None:
            return AircraftClass.UNKNOWN, None
        return entry.aircraft_class, seat_bin_for(entry.seats, self._bins)

    def ranges_for(self, aircraft_class: AircraftClass, seat_label: str) -> list[IcaoRange]:
        return list(self._ranges.get((aircraft_class, seat_label), []))

    def range_for(
        self, aircraft_class: AircraftClass, seat_label: str, icao24: int
    ) -> IcaoRange | None:
        los = self._range_los.get((aircraft_class, seat_label))
        if not los:
            return None
        i = bisect.bisect_right(los, icao24) - 1
        if i < 0:
            return None
        r = self._ranges[(aircraft_class, seat_label)][i]
        return r if r.contains(icao24) else None

    def hierarchy_path(
        self,
        icao24: int,
        hour_stamp: HourStamp | None = None,
        unknown_ranges: Sequence[IcaoRange] | None = None,
    ) -> HierarchyPath:
        """Full four-tier path for one address.

        Unregistered addresses need the observation hour plus the range
        partition computed from that hour's unregistered addresses.
        """
        cls, seat_bin = self.classify(icao24)
        if seat_bin is None:
            if hour_stamp is None:
                raise ValueError("hour stamp required for the Unknown branch")
            if not unknown_ranges:
                raise ValueError("unknown-branch ranges required for unregistered aircraft")
            r = _find_range(unknown_ranges, icao24)
            if r is None:
                raise ValueError(f"{format_icao24(icao24)} not in supplied unknown ranges")
            return HierarchyPath(self.year, AircraftClass.UNKNOWN.value, hour_stamp.label, r.label)
        r = self.range_for(cls, seat_bin.label, icao24)
        if r is None:
            raise ValueError(f"{format_icao24(icao24)} missing from range partition")
        return HierarchyPath(self.year, cls.value, seat_bin.label, r.label)


def _find_range(ranges: Sequence[IcaoRange], icao24: int) -> IcaoRange | None:
    los = [r.lo for r in ranges]
    i = bisect.bisect_right(los, icao24) - 1
    if i < 0:
        return None
    return ranges[i] if ranges[i].contains(icao24) else None


def build_lookup(
    entries: Iterable[RegistryEntry],
    year: int,
    *,
    bins: Sequence[SeatBin] | None = None,
    max_per_dir: int = DEFAULT_MAX_PER_DIR,
    precedence: Sequence[str] = COUNTRY_PRECEDENCE,
) -> RegistryLookup:
    """Merge one year's entries into a lookup, resolving duplicates.

    A transponder address registered in several countries resolves to the
    entry with the latest expiry; ties break on the precedence order.
    """
    order = {c: i for i, c in enumerate(precedence)}
    best: dict[int, RegistryEntry] = {}
    for e in entries:
        if e.registry_year != year:
            raise ValueError(f"entry for year {e.registry_year} in build for {year}")
        cur = best.get(e.icao24)
        if cur is None or _dup_rank(e, order) > _dup_rank(cur, order):
            best[e.icao24] = e
    return RegistryLookup(year, best, bins or default_seat_bins(), max_per_dir)


def _dup_rank(e: RegistryEntry, order: Mapping[str, int]) -> tuple[dt.date, int]:
    expiry = e.expiry or dt.date.min
    # Higher tuple wins: later expiry, then earlier precedence position.
    return (expiry, -order.get(e.source_country, len(order)))


def classify(
    icao24: int, year: int, lookup: RegistryLookup
) -> tuple[AircraftClass, SeatBin | None]:
    if lookup.year != year:
        raise ValueError(f"lookup built for {lookup.year}, not {year}")
    return lookup.classify(icao24)


def derive_path(
    icao24: int,
    year: int,
    lookup: RegistryLookup,
    hour_stamp: HourStamp | None = None,
    unknown_ranges: Sequence[IcaoRange] | None = None,
) -> HierarchyPath:
    if lookup.year != year:
        raise ValueError(f"lookup built for {lookup.year}, not {year}")
    return lookup.hierarchy_path(icao24, hour_stamp, unknown_ranges)


def fanout_violations(
    paths: Iterable[str], limit: int = DEFAULT_MAX_PER_DIR
) -> list[tuple[str, int]]:
    """Directories in a path set with more than ``limit`` children."""
    children: dict[str, set[str]] = defaultdict(set)
    for p in paths:
        parts = [s for s in str(p).split("/") if s]
        parent = ""
        for part in parts:
            children[parent].add(part)
            parent = f"{parent}/{part}" if parent else part
    return sorted((d, len(kids)) for d, kids in children.items() if len(kids) > limit)
