#!/usr/bin/env python3
"""On-disk cache of contour enumerations.

Each enumeration (a, b, max_len, wall) is stored once as a binary payload

    b"PLCC" | u16 version | u16 key length | key | varint count
    | per contour: varint length, 2-bit packed steps
    | md5 of everything above

and indexed in a sqlite table through sqlalchemy. A payload that fails to
decode is dropped and recomputed.
"""
import json
import logging
import os
import struct
from hashlib import md5
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
import sqlalchemy as sa

try:
    from src.contours import STEP_ORDER, OpenContour, enumerate_contours_parallel
    from src.errors import CacheCorruptionError
    from src.lattice import LatticePoint
except ImportError:
    from contours import STEP_ORDER, OpenContour, enumerate_contours_parallel
    from errors import CacheCorruptionError
    from lattice import LatticePoint


logger = logging.getLogger(__name__)

CACHE_ROOT = Path(os.environ.get("POLYMER_LAB_CACHE", "~/.cache/polymer-lab"))
MAGIC = b"PLCC"
VERSION = 1
DIGEST_SIZE = 16

ENUMERATIONS_SCHEMA = [
    ("key", "TEXT PRIMARY KEY"),  # md5 of the enumeration parameters
    ("path", "TEXT"),  # payload file, relative to the cache root
    ("n_contours", "INTEGER"),
    ("checksum", "TEXT"),  # md5 trailer of the payload
    ("params", "TEXT"),  # the parameters as JSON, for inspection
]

CODE = {s: i for i, s in enumerate(STEP_ORDER)}


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_varint(data: bytes, pos: int):
    shift = value = 0
    while True:
        if pos >= len(data):
            raise CacheCorruptionError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def _pack_steps(steps: str) -> bytes:
    packed = bytearray((len(steps) + 3) // 4)
    for i, s in enumerate(steps):
        packed[i // 4] |= CODE[s] << (2 * (i % 4))
    return bytes(packed)


def _unpack_steps(data: bytes, length: int) -> str:
    return "".join(STEP_ORDER[(data[i // 4] >> (2 * (i % 4))) & 3] for i in range(length))


def encode_payload(key: str, step_strings: Sequence[str]) -> bytes:
    key_bytes = key.encode()
    body = bytearray(MAGIC)
    body += struct.pack("<HH", VERSION, len(key_bytes))
    body += key_bytes
    body += _varint(len(step_strings))
    for steps in step_strings:
        body += _varint(len(steps))
        body += _pack_steps(steps)
    return bytes(body) + md5(body).digest()


def decode_payload(data: bytes, key: Optional[str] = None) -> List[str]:
    """Step strings of a payload; raises CacheCorruptionError on any mismatch."""
    if len(data) < len(MAGIC) + 4 + DIGEST_SIZE:
        raise CacheCorruptionError("payload too short")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if md5(body).digest() != digest:
        raise CacheCorruptionError("checksum mismatch")
    if body[:4] != MAGIC:
        raise CacheCorruptionError("bad magic")
    version, key_len = struct.unpack_from("<HH", body, 4)
    if version != VERSION:
        raise CacheCorruptionError(f"unsupported payload version {version}")
    pos = 8 + key_len
    stored_key = body[8:pos].decode()
    if key is not None and stored_key != key:
        raise CacheCorruptionError(f"payload holds {stored_key}, expected {key}")
    count, pos = _read_varint(body, pos)
    out = []
    for _ in range(count):
        length, pos = _read_varint(body, pos)
        nbytes = (length + 3) // 4
        if pos + nbytes > len(body):
            raise CacheCorruptionError("truncated contour")
        out.append(_unpack_steps(body[pos : pos + nbytes], length))
        pos += nbytes
    if pos != len(body):
        raise CacheCorruptionError("trailing bytes after the last contour")
    return out


def enumeration_params(a, b, max_len: int, wall) -> dict:
    return {
        "a": list(LatticePoint(*a)),
        "b": list(LatticePoint(*b)),
        "max_len": int(max_len),
        "wall": None if wall is None else [wall.a, wall.b],
        "version": VERSION,
    }


def enumeration_key(a, b, max_len: int, wall) -> str:
    params = json.dumps(enumeration_params(a, b, max_len, wall), sort_keys=True)
    return md5(params.encode()).hexdigest()


class EnumerationCache:
    con: sa.engine.Engine
    table = "enumerations"

    def __init__(self, cache_dir=None, echo=False):
        """Open (and create) a cache rooted at cache_dir.

        Arguments
        ---------
        cache_dir: str or Path
            Directory for the index and payloads [default: $POLYMER_LAB_CACHE]
        echo: bool
            Whether to show the SQL being run.
        """
        self.root = Path(cache_dir or CACHE_ROOT).expanduser()
        (self.root / "payloads").mkdir(parents=True, exist_ok=True)
        self.con = sa.create_engine(f"sqlite:///{self.root / 'index.sqlite'}", echo=echo)
        columns = ", ".join(f"{name} {kind}" for name, kind in ENUMERATIONS_SCHEMA)
        with self.con.begin() as conn:
            conn.execute(sa.text(f"CREATE TABLE IF NOT EXISTS {self.table} ({columns})"))

    def payload_path(self, key: str) -> Path:
        return self.root / "payloads" / f"{key}.plcc"

    def store(self, key: str, step_strings: Sequence[str], params: Optional[dict] = None):
        data = encode_payload(key, step_strings)
        path = self.payload_path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
        with self.con.begin() as conn:
            conn.execute(
                sa.text(
                    f"INSERT OR REPLACE INTO {self.table} (key, path, n_contours, checksum, params) "
                    "VALUES (:key, :path, :n, :checksum, :params)"
                ),
                {
                    "key": key,
                    "path": str(path.relative_to(self.root)),
                    "n": len(step_strings),
                    "checksum": data[-DIGEST_SIZE:].hex(),
                    "params": json.dumps(params or {}),
                },
            )

    def load(self, key: str) -> Optional[List[str]]:
        """Cached step strings, None when absent; raises CacheCorruptionError."""
        with self.con.connect() as conn:
            row = conn.execute(
                sa.text(f"SELECT path, n_contours, checksum FROM {self.table} WHERE key = :key"),
                {"key": key},
            ).fetchone()
        if row is None:
            return None
        path = self.root / row[0]
        if not path.exists():
            raise CacheCorruptionError(f"payload {path} is missing")
        data = path.read_bytes()
        if data[-DIGEST_SIZE:].hex() != row[2]:
            raise CacheCorruptionError(f"payload {path} does not match its index entry")
        steps = decode_payload(data, key)
        if len(steps) != row[1]:
            raise CacheCorruptionError(f"payload {path} holds {len(steps)} contours, index says {row[1]}")
        return steps

    def evict(self, key: str):
        self.payload_path(key).unlink(missing_ok=True)
        with self.con.begin() as conn:
            conn.execute(sa.text(f"DELETE FROM {self.table} WHERE key = :key"), {"key": key})

    def contours(self, a, b, max_len: int, wall=None, threads: int = 1) -> List[OpenContour]:
        """Enumeration of contours a -> b, read from the cache or computed and stored."""
        a = LatticePoint(*a)
        key = enumeration_key(a, b, max_len, wall)
        try:
            steps = self.load(key)
        except CacheCorruptionError as e:
            logger.warning(f"Cache entry {key} is corrupt ({e}); recomputing")
            self.evict(key)
            steps = None
        if steps is not None:
            logger.debug(f"Cache hit {key}: {len(steps)} contours")
            return [OpenContour(a, s) for s in steps]
        found = enumerate_contours_parallel(a, b, max_len, wall, threads=threads)
        self.store(key, [g.steps for g in found], enumeration_params(a, b, max_len, wall))
        logger.debug(f"Cache miss {key}: stored {len(found)} contours")
        return found

    def entries(self) -> pd.DataFrame:
        cols = [name for name, _ in ENUMERATIONS_SCHEMA]
        with self.con.connect() as conn:
            rows = conn.execute(sa.text(f"SELECT {', '.join(cols)} FROM {self.table}")).fetchall()
        return pd.DataFrame(rows, columns=cols)
