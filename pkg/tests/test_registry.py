import datetime as dt
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airtracks.errors import ConfigError
from airtracks.registry import (
    AircraftClass,
    HourStamp,
    RegistryEntry,
    build_lookup,
    classify,
    default_seat_bins,
    derive_path,
    fanout_violations,
    format_icao24,
    parse_icao24,
    parse_registry,
    partition_icao_ranges,
    seat_bin_for,
)

US_HEADER = "mode_s_code_hex,type_aircraft,no_seats,expiration_date,n_number"


def us_csv(rows):
    return ("\n".join([US_HEADER, *rows]) + "\n").encode()


def entry(addr, cls=AircraftClass.ROTORCRAFT, seats=5, expiry=dt.date(2022, 12, 31),
          year=2020, country="US"):
    return RegistryEntry(addr, cls, seats, expiry, year, country)


class TestIcao24:
    def test_round_trip(self):
        for v in (0x000001, 0xA00C12, 0xFFFFFE):
            assert parse_icao24(format_icao24(v)) == v

    def test_lowercase_accepted(self):
        assert parse_icao24("a00c12") == 0xA00C12

    @pytest.mark.parametrize("bad", ["", "GGGGGG", "000000", "FFFFFF", "1234567", "0xA0"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_icao24(bad)


class TestParseRegistry:
    def test_us_row(self):
        entries, skipped = parse_registry(
            us_csv(["A00C12,Rotorcraft,5,2022-12-31,N123"]), "US", 2020
        )
        assert skipped == 0
        (e,) = entries
        assert e.icao24 == 0xA00C12
        assert e.aircraft_class is AircraftClass.ROTORCRAFT
        assert e.seats == 5
        assert e.expiry == dt.date(2022, 12, 31)

    def test_empty_file(self):
        entries, skipped = parse_registry(us_csv([]), "US", 2020)
        assert entries == [] and skipped == 0

    def test_bad_hex_rows_skipped_and_counted(self):
        rows = [f"{0xA00000 + i:06X},Glider,2,2021-01-01,N{i}" for i in range(8)]
        rows.insert(3, "ZZZZZZ,Glider,2,2021-01-01,NBAD1")
        rows.insert(7, ",Glider,2,2021-01-01,NBAD2")
        entries, skipped = parse_registry(us_csv(rows), "US", 2020)
        assert len(entries) == 8
        assert skipped == 2

    def test_unknown_format_tag(self):
        with pytest.raises(ConfigError):
            parse_registry(us_csv([]), "XX", 2020)

    def test_unmapped_type_falls_into_catchall(self):
        entries, _ = parse_registry(us_csv(["A00001,Ornithopter,2,2021-01-01,N1"]), "US", 2020)
        assert entries[0].aircraft_class is AircraftClass.UNMANNED_OR_OTHER

    def test_blank_seats_become_unknown(self):
        entries, _ = parse_registry(us_csv(["A00001,Rotorcraft,,2021-01-01,N1"]), "US", 2020)
        assert entries[0].seats is None


class TestSeatBins:
    def test_labels(self):
        bins = default_seat_bins()
        assert seat_bin_for(5, bins).label == "Seats_001_010"
        assert seat_bin_for(11, bins).label == "Seats_011_020"
        assert seat_bin_for(200, bins).label == "Seats_191_200"
        assert seat_bin_for(250, bins).label == "Seats_201_plus"
        assert seat_bin_for(None, bins).label == "Seats_Unknown"
        assert seat_bin_for(0, bins).unknown

    def test_bins_disjoint_and_covering(self):
        bins = default_seat_bins()
        for seats in range(1, 300):
            hits = [b for b in bins if b.contains(seats)]
            assert len(hits) == 1


class TestPartition:
    def test_under_capacity_single_range(self):
        addrs = list(range(1000, 1500))
        (r,) = partition_icao_ranges(addrs)
        assert r.lo == 1000 and r.hi == 1500
        assert all(r.contains(a) for a in addrs)

    def test_counts_1000_1000_500(self):
        addrs = list(range(1, 2501))
        ranges = partition_icao_ranges(addrs)
        counts = [sum(1 for a in addrs if r.contains(a)) for r in ranges]
        assert counts == [1000, 1000, 500]

    def test_dense_band_label_half_open(self):
        addrs = list(range(0xA00C12, 0xA00D1F + 1))
        (r,) = partition_icao_ranges(addrs)
        assert r.label == "A00C12_A00D20"
        assert r.contains(0xA00D1F) and not r.contains(0xA00D20)

    def test_empty(self):
        assert partition_icao_ranges([]) == []

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            partition_icao_ranges([5, 4])

    @given(
        st.sets(st.integers(min_value=1, max_value=0xFFFFFE), min_size=1, max_size=400),
        st.integers(min_value=1, max_value=50),
    )
    @settings(max_examples=150, deadline=None)
    def test_partition_properties(self, addr_set, cap):
        addrs = sorted(addr_set)
        ranges = partition_icao_ranges(addrs, cap)
        # ascending, disjoint, half-open
        for a, b in zip(ranges, ranges[1:]):
            assert a.hi <= b.lo
        for r in ranges:
            assert r.lo < r.hi
            members = [x for x in addrs if r.contains(x)]
            assert 0 < len(members) <= cap
        # every address in exactly one range
        for x in addrs:
            assert sum(1 for r in ranges if r.contains(x)) == 1

    def test_many_random_draws(self):
        rng = random.Random(7)
        total = 0
        while total < 10_000:
            addrs = sorted(rng.sample(range(1, 0xFFFFFE), rng.randint(1, 400)))
            total += len(addrs)
            ranges = partition_icao_ranges(addrs, rng.choice([10, 100, 1000]))
            for x in addrs:
                assert sum(1 for r in ranges if r.contains(x)) == 1
            for a, b in zip(ranges, ranges[1:]):
                assert a.hi <= b.lo


class TestLookup:
    def test_classify_registered(self):
        lk = build_lookup([entry(0xA00C12)], 2020)
        cls, bin_ = classify(0xA00C12, 2020, lk)
        assert cls is AircraftClass.ROTORCRAFT
        assert bin_.label == "Seats_001_010"

    def test_classify_absent_is_unknown_branch(self):
        lk = build_lookup([], 2020)
        cls, bin_ = lk.classify(0xB00001)
        assert cls is AircraftClass.UNKNOWN
        assert bin_ is None

    def test_classify_no_seats(self):
        lk = build_lookup([entry(0xA00C12, seats=None)], 2020)
        _, bin_ = lk.classify(0xA00C12)
        assert bin_.label == "Seats_Unknown"

    def test_duplicate_same_class_resolves_to_single_entry(self):
        e_us = entry(0xA00C12, expiry=dt.date(2022, 1, 1), country="US")
        e_ca = entry(0xA00C12, expiry=dt.date(2021, 1, 1), country="CA")
        lk = build_lookup([e_ca, e_us], 2020)
        assert len(lk) == 1
        assert lk.entry(0xA00C12).source_country == "US"

    def test_duplicate_latest_expiry_wins(self):
        e_us = entry(0xA00C12, cls=AircraftClass.GLIDER, expiry=dt.date(2021, 1, 1), country="US")
        e_ca = entry(0xA00C12, expiry=dt.date(2023, 1, 1), country="CA")
        lk = build_lookup([e_us, e_ca], 2020)
        assert lk.entry(0xA00C12).source_country == "CA"

    def test_duplicate_tie_uses_precedence(self):
        same = dt.date(2022, 1, 1)
        e_nl = entry(0xA00C12, expiry=same, country="NL")
        e_ca = entry(0xA00C12, expiry=same, country="CA")
        lk = build_lookup([e_nl, e_ca], 2020)
        assert lk.entry(0xA00C12).source_country == "CA"

    def test_expired_entry_flagged_but_classified(self):
        lk = build_lookup([entry(0xA00C12, expiry=dt.date(2019, 5, 1))], 2020)
        assert lk.is_expired(0xA00C12)
        assert lk.classify(0xA00C12)[0] is AircraftClass.ROTORCRAFT

    def test_wrong_year_rejected(self):
        with pytest.raises(ValueError):
            build_lookup([entry(0xA00C12, year=2019)], 2020)

    def test_year_isolation(self):
        lk19 = build_lookup([entry(0xA00C12, cls=AircraftClass.GLIDER, year=2019)], 2019)
        lk20 = build_lookup([entry(0xA00C12, year=2020)], 2020)
        assert lk19.classify(0xA00C12)[0] is AircraftClass.GLIDER
        assert lk20.classify(0xA00C12)[0] is AircraftClass.ROTORCRAFT
        assert lk19.classify(0xB00001)[0] is AircraftClass.UNKNOWN


class TestDerivePath:
    def make_lookup(self):
        entries = [entry(a) for a in range(0xA00C12, 0xA00D1F + 1)]
        return build_lookup(entries, 2020)

    def test_exemplar_path(self):
        lk = self.make_lookup()
        p = derive_path(0xA00C12, 2020, lk)
        assert p.as_posix() == "2020/Rotorcraft/Seats_001_010/A00C12_A00D20"

    def test_deterministic(self):
        lk = self.make_lookup()
        assert derive_path(0xA00C12, 2020, lk) == derive_path(0xA00C12, 2020, lk)

    def test_unknown_branch_uses_hour_directory(self):
        lk = self.make_lookup()
        hs = HourStamp.parse("2020-03-16_05")
        ranges = partition_icao_ranges([0xB00001, 0xB00177])
        p = derive_path(0xB00001, 2020, lk, hour_stamp=hs, unknown_ranges=ranges)
        assert p.parts[:3] == ("2020", "Unknown", "2020-03-16_05")

    def test_unknown_branch_requires_hour(self):
        lk = self.make_lookup()
        with pytest.raises(ValueError):
            derive_path(0xB00001, 2020, lk)


class TestFanout:
    def test_violation_detected(self):
        paths = [f"2020/Unknown/h{i}/r" for i in range(1001)]
        bad = fanout_violations(paths, limit=1000)
        assert bad and bad[0][0] == "2020/Unknown"

    def test_clean_tree(self):
        paths = [f"2020/Rotorcraft/Seats_001_010/r{i}" for i in range(1000)]
        assert fanout_violations(paths, limit=1000) == []


class TestHourStamp:
    def test_round_trip(self):
        hs = HourStamp.parse("2020-03-16_05")
        assert hs.label == "2020-03-16_05"
        assert hs.year == 2020

    def test_bad_hour(self):
        with pytest.raises(ValueError):
            HourStamp(dt.date(2020, 3, 16), 24)
