"""Leaf-directory zip archives with verification and incremental update.

Every non-empty bottom-tier directory of organized hourly files becomes a
single zip named after the address range it holds, so each leaf occupies
one storage object instead of thousands of sub-megabyte files. Loose
files are removed only after the finished archive verifies. Updates are
atomic: a replacement archive is built next to the original and renamed
over it only after verification, so a fault mid-update leaves the prior
archive readable.
"""

from __future__ import annotations

import datetime as dt
import os
import zipfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from airtracks.errors import ArchiveError, RebuildRequiredError
from airtracks.ingest import ORGANIZED_FILE_RE

# Deflate at a fast level: organized files are compressible text and
# packing throughput matters more than ratio.
COMPRESS_LEVEL = 1


@dataclass(frozen=True)
class MemberInfo:
    name: str
    size: int
    crc32: int


@dataclass
class LeafArchive:
    path: Path
    members: list[MemberInfo]

    @property
    def member_count(self) -> int:
        return len(self.members)


def _crc_file(path: Path) -> tuple[int, int]:
    data = path.read_bytes()
    return len(data), zlib.crc32(data)


def write_manifest(archive: LeafArchive) -> Path:
    """Text sidecar listing member names, sizes, and checksums."""
    lines = [f"{m.name}\t{m.size}\t{m.crc32:08x}" for m in sorted(archive.members, key=lambda m: m.name)]
    sidecar = archive.path.with_name(archive.path.name + ".manifest")
    sidecar.write_text("\n".join(lines) + ("\n" if lines else ""))
    return sidecar


def read_manifest(path: Path | str) -> list[MemberInfo]:
    out = []
    for line in Path(path).read_text().splitlines():
        name, size, crc = line.split("\t")
        out.append(MemberInfo(name, int(size), int(crc, 16)))
    return out


def _verify(path: Path, expected: Sequence[MemberInfo]) -> None:
    try:
        with zipfile.ZipFile(path) as zf:
            bad = zf.testzip()
            if bad is not None:
                raise ArchiveError(f"{path}: corrupt member {bad}")
            infos = {i.filename: i for i in zf.infolist()}
    except zipfile.BadZipFile as exc:
        raise ArchiveError(f"{path}: not a valid archive: {exc}") from exc
    want = {m.name: m for m in expected}
    if set(infos) != set(want):
        raise ArchiveError(f"{path}: member set mismatch")
    for name, m in want.items():
        info = infos[name]
        if info.file_size != m.size or info.CRC != m.crc32:
            raise ArchiveError(f"{path}: member {name} fails verification")


def pack_leaf(
    leaf_dir: Path | str,
    archive_path: Path | str,
    *,
    remove_sources: bool = True,
) -> LeafArchive | None:
    """Pack one bottom-tier directory into a verified zip.

    Empty directories are skipped (None). Source files are deleted, and
    the emptied directory removed, only after the archive verifies; on
    verification failure the loose files are kept and the partial archive
    discarded.
    """
    leaf_dir = Path(leaf_dir)
    archive_path = Path(archive_path)
    files = sorted(p for p in leaf_dir.iterdir() if p.is_file())
    if not files:
        return None

    expected = []
    archive_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = archive_path.with_name(archive_path.name + ".tmp")
    try:
        with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED, compresslevel=COMPRESS_LEVEL) as zf:
            for f in files:
                size, crc = _crc_file(f)
                expected.append(MemberInfo(f.name, size, crc))
                zf.write(f, f.name)
        _verify(tmp, expected)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, archive_path)

    archive = LeafArchive(archive_path, expected)
    write_manifest(archive)
    if remove_sources:
        for f in files:
            f.unlink()
        try:
            leaf_dir.rmdir()
        except OSError:
            pass
    return archive


def update_archive(
    archive_path: Path | str,
    new_files: Sequence[Path | str],
    *,
    _pre_replace_hook: Callable[[], None] | None = None,
) -> LeafArchive:
    """Merge new files into an existing archive atomically.

    The result's member set is the union of old and new names; a name
    collision keeps whichever side is newer (file mtime vs stored member
    time). The original archive stays intact until the replacement has
    been written and verified. ``_pre_replace_hook`` is a fault-injection
    seam for crash-safety tests.
    """
    archive_path = Path(archive_path)
    try:
        with zipfile.ZipFile(archive_path) as zf:
            if zf.testzip() is not None:
                raise RebuildRequiredError(f"{archive_path}: corrupt member")
            old_infos = zf.infolist()
    except (zipfile.BadZipFile, OSError) as exc:
        raise RebuildRequiredError(f"{archive_path}: unreadable: {exc}") from exc

    incoming: dict[str, Path] = {}
    for f in new_files:
        f = Path(f)
        incoming[f.name] = f

    keep_old: list[str] = []
    for info in old_infos:
        new = incoming.get(info.filename)
        if new is None:
            keep_old.append(info.filename)
            continue
        member_time = dt.datetime(*info.date_time)
        new_time = dt.datetime.fromtimestamp(new.stat().st_mtime)
        if new_time < member_time:
            # Existing member is newer; ignore the stale incoming file.
            del incoming[new.name]
            keep_old.append(info.filename)

    expected: list[MemberInfo] = []
    tmp = archive_path.with_name(archive_path.name + ".update-tmp")
    try:
        with zipfile.ZipFile(archive_path) as old, zipfile.ZipFile(
            tmp, "w", zipfile.ZIP_DEFLATED, compresslevel=COMPRESS_LEVEL
        ) as zf:
            for name in keep_old:
                info = old.getinfo(name)
                data = old.read(name)
                zi = zipfile.ZipInfo(name, date_time=info.date_time)
                zi.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(zi, data)
                expected.append(MemberInfo(name, len(data), zlib.crc32(data)))
            for name in sorted(incoming):
                size, crc = _crc_file(incoming[name])
                zf.write(incoming[name], name)
                expected.append(MemberInfo(name, size, crc))
        _verify(tmp, expected)
        if _pre_replace_hook is not None:
            _pre_replace_hook()
    except Exception:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, archive_path)
    archive = LeafArchive(archive_path, expected)
    write_manifest(archive)
    return archive


def validate_leaf_archive(archive: LeafArchive) -> list[str]:
    """Leaf invariant check: hourly member names, addresses within range.

    Returns human-readable violations (empty when clean). The address
    range is taken from the archive file name 'LOHEX_HIHEX.zip'.
    """
    problems: list[str] = []
    names = [m.name for m in archive.members]
    if len(set(names)) != len(names):
        problems.append("duplicate member names")
    stem = archive.path.name[: -len(".zip")]
    lo_hi = stem.split("_")
    lo = hi = None
    if len(lo_hi) == 2:
        try:
            lo, hi = int(lo_hi[0], 16), int(lo_hi[1], 16)
        except ValueError:
            problems.append(f"archive name {stem!r} is not an address range")
    for name in names:
        m = ORGANIZED_FILE_RE.match(name)
        if not m:
            problems.append(f"member {name!r} does not match the hourly pattern")
            continue
        if lo is not None and hi is not None:
            addr = int(m.group(3), 16)
            if not lo <= addr < hi:
                problems.append(f"member {name!r} outside range {stem}")
    return problems


def iter_leaf_dirs(organized_root: Path | str) -> list[Path]:
    """Non-empty bottom-tier directories under the organized root."""
    root = Path(organized_root)
    leaves = []
    for path in sorted(root.glob("*/*/*/*")):
        if path.is_dir() and any(p.is_file() for p in path.iterdir()):
            leaves.append(path)
    return leaves


def archive_path_for(leaf_dir: Path, organized_root: Path | str, archive_root: Path | str) -> Path:
    """Mirror the first three tiers; the leaf becomes '<range>.zip'."""
    rel = Path(leaf_dir).relative_to(organized_root)
    return Path(archive_root).joinpath(*rel.parts[:-1]) / (rel.parts[-1] + ".zip")
