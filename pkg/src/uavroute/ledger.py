"""Hash-chained, append-only authentication log.

Each record commits to its predecessor, so editing, dropping or reordering
any stored record breaks verification. The byte layout is fixed:
``seq, uav_id, hop`` as unsigned 64-bit big-endian integers, ``delta`` as
one byte, ``timestamp`` as a big-endian IEEE-754 double, then the 32-byte
previous hash. The digest is SHA-256.
"""
from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, List

GENESIS_HASH = bytes(32)
_PAYLOAD = struct.Struct(">QQQBd32s")
RECORD_SIZE = _PAYLOAD.size + 32


class TamperedLedgerError(RuntimeError):
    pass


@dataclass(frozen=True)
class AuthRecord:
    seq: int
    uav_id: int
    hop: int
    delta_data: int
    timestamp: float
    prev_hash: bytes
    record_hash: bytes

    def payload(self) -> bytes:
        return _PAYLOAD.pack(self.seq, self.uav_id, self.hop, self.delta_data, self.timestamp, self.prev_hash)

    def to_bytes(self) -> bytes:
        return self.payload() + self.record_hash

    @classmethod
    def from_bytes(cls, raw: bytes) -> "AuthRecord":
        seq, uav, hop, delta, ts, prev = _PAYLOAD.unpack(raw[:_PAYLOAD.size])
        return cls(seq, uav, hop, delta, ts, prev, raw[_PAYLOAD.size:RECORD_SIZE])


def record_digest(seq, uav_id, hop, delta_data, timestamp, prev_hash) -> bytes:
    return hashlib.sha256(_PAYLOAD.pack(seq, uav_id, hop, delta_data, timestamp, prev_hash)).digest()


def verify_chain(records: Iterable[AuthRecord]) -> bool:
    prev = GENESIS_HASH
    for k, rec in enumerate(records):
        if rec.seq != k or rec.prev_hash != prev:
            return False
        try:
            expected = hashlib.sha256(rec.payload()).digest()
        except struct.error:
            return False
        if expected != rec.record_hash:
            return False
        prev = rec.record_hash
    return True


class Ledger:
    """Single-writer hash chain of :class:`AuthRecord`."""

    def __init__(self, records: Iterable[AuthRecord] = ()):
        self._records: List[AuthRecord] = list(records)

    def __len__(self):
        return len(self._records)

    def __iter__(self) -> Iterator[AuthRecord]:
        return iter(self._records)

    def __getitem__(self, k):
        return self._records[k]

    @property
    def tail_hash(self) -> bytes:
        return self._records[-1].record_hash if self._records else GENESIS_HASH

    def append(self, uav_id: int, hop: int, delta_data: int, timestamp: float) -> AuthRecord:
        if delta_data not in (0, 1):
            raise ValueError("delta_data must be 0 or 1")
        seq = len(self._records)
        prev = self.tail_hash
        digest = record_digest(seq, uav_id, hop, delta_data, float(timestamp), prev)
        rec = AuthRecord(seq, int(uav_id), int(hop), int(delta_data), float(timestamp), prev, digest)
        self._records.append(rec)
        return rec

    def verify(self) -> bool:
        return verify_chain(self._records)

    def copy(self) -> "Ledger":
        return Ledger(self._records)

    # -- serialization ---------------------------------------------------

    def to_bytes(self) -> bytes:
        return b"".join(r.to_bytes() for r in self._records)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Ledger":
        if len(raw) % RECORD_SIZE:
            raise ValueError("truncated ledger blob")
        return cls(AuthRecord.from_bytes(raw[k:k + RECORD_SIZE]) for k in range(0, len(raw), RECORD_SIZE))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for r in self._records:
                w.writerow([r.seq, r.uav_id, r.hop, r.delta_data, repr(r.timestamp),
                            r.prev_hash.hex(), r.record_hash.hex()])

    @classmethod
    def read_csv(cls, path) -> "Ledger":
        out = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                seq, uav, hop, delta, ts, prev, digest = row
                out.append(AuthRecord(int(seq), int(uav), int(hop), int(delta), float(ts),
                                      bytes.fromhex(prev), bytes.fromhex(digest)))
        return cls(out)


def append_record(ledger: Ledger, uav_id: int, hop: int, delta_data: int, timestamp: float) -> AuthRecord:
    return ledger.append(uav_id, hop, delta_data, timestamp)
