import pytest

from src.cache_db import EnumerationCache, decode_payload, encode_payload, enumeration_key
from src.contours import enumerate_contours
from src.errors import CacheCorruptionError
from src.lattice import ORIGIN, HORIZONTAL_WALL

STEPS = ["E", "NES", "SEN", "EENWWNEEE"]


def test_payload_decodes():
    data = encode_payload("k", STEPS)
    assert data[:4] == b"PLCC"
    assert decode_payload(data, "k") == STEPS
    assert decode_payload(encode_payload("k", []), "k") == []


@pytest.mark.parametrize("position", [0, 5, 12, -1])
def test_flipped_byte_is_detected(position):
    data = bytearray(encode_payload("k", STEPS))
    data[position] ^= 0x01
    with pytest.raises(CacheCorruptionError):
        decode_payload(bytes(data), "k")


def test_truncated_and_foreign_payloads():
    data = encode_payload("k", STEPS)
    with pytest.raises(CacheCorruptionError):
        decode_payload(data[:10])
    with pytest.raises(CacheCorruptionError):
        decode_payload(data, "other")


def test_keys_depend_on_every_parameter():
    keys = {
        enumeration_key(ORIGIN, (2, 1), 5, None),
        enumeration_key(ORIGIN, (2, 1), 7, None),
        enumeration_key(ORIGIN, (1, 2), 5, None),
        enumeration_key(ORIGIN, (2, 1), 5, HORIZONTAL_WALL),
    }
    assert len(keys) == 4
    assert enumeration_key((0, 0), [2, 1], 5, None) == enumeration_key(ORIGIN, (2, 1), 5, None)


def test_cache_round_trip(tmp_path):
    cache = EnumerationCache(tmp_path)
    direct = list(enumerate_contours(ORIGIN, (2, 1), 5, HORIZONTAL_WALL))
    assert cache.contours(ORIGIN, (2, 1), 5, HORIZONTAL_WALL) == direct
    entries = cache.entries()
    assert len(entries) == 1
    assert entries.n_contours.iloc[0] == len(direct)
    reopened = EnumerationCache(tmp_path)
    key = entries.key.iloc[0]
    assert reopened.load(key) == [g.steps for g in direct]
    assert reopened.contours(ORIGIN, (2, 1), 5, HORIZONTAL_WALL) == direct


def test_corrupt_entry_is_recomputed(tmp_path):
    cache = EnumerationCache(tmp_path)
    direct = cache.contours(ORIGIN, (3, 1), 6)
    key = cache.entries().key.iloc[0]
    path = cache.payload_path(key)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CacheCorruptionError):
        cache.load(key)
    assert cache.contours(ORIGIN, (3, 1), 6) == direct
    assert cache.load(key) == [g.steps for g in direct]


def test_missing_payload(tmp_path):
    cache = EnumerationCache(tmp_path)
    cache.contours(ORIGIN, (1, 0), 3)
    key = cache.entries().key.iloc[0]
    cache.payload_path(key).unlink()
    with pytest.raises(CacheCorruptionError):
        cache.load(key)
    cache.evict(key)
    assert cache.load(key) is None
