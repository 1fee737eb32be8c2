"""
Binary weight checkpoint.

    b"FIPC" | u32 LE header length | UTF-8 JSON header | f64 LE payload (n values) | 8-byte blake2b of payload

The header repeats the checksum as hex so a reader can inspect it without touching the payload.
"""
from __future__ import annotations

import hashlib
import struct
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from shared_models.errors import (
    BadCheckpointMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from shared_models.network import NetworkSpec, WeightVector
from shared_models.path import CODE_VERSION

MAGIC = b"FIPC"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)
CHECKSUM_BYTES = 8
_HEADER_LEN = struct.Struct("<I")


def payload_checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=CHECKSUM_BYTES).digest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class AppliedOperation(BaseModel):
    """One link of the provenance chain, e.g. train-base, fip-path, append-head, hard-sparsify"""
    operation: str
    params: Dict[str, Any] = dict()
    parent_checksum: Optional[str] = None


class CheckpointHeader(BaseModel):
    format_version: int = FORMAT_VERSION
    spec: NetworkSpec
    n: int
    created_at: str = Field(default_factory=utc_now)
    code_version: str = CODE_VERSION
    run_id: Optional[str] = None
    provenance: List[AppliedOperation] = []
    checksum: str = ""


class Checkpoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    header: CheckpointHeader
    weights: WeightVector

    @classmethod
    def create(
        cls,
        spec: NetworkSpec,
        w: WeightVector,
        provenance: Optional[List[AppliedOperation]] = None,
        run_id: Optional[str] = None,
    ) -> Checkpoint:
        w.check(spec)
        payload = cls._payload(w)
        header = CheckpointHeader(
            spec=spec, n=w.n, run_id=run_id, provenance=list(provenance or []),
            checksum=payload_checksum(payload).hex(),
        )
        return Checkpoint(header=header, weights=w)

    @property
    def spec(self) -> NetworkSpec:
        return self.header.spec

    @property
    def checksum(self) -> str:
        return self.header.checksum

    def derive(self, operation: str, spec: NetworkSpec, w: WeightVector, **params: Any) -> Checkpoint:
        """New checkpoint whose provenance chain extends this one by `operation`"""
        link = AppliedOperation(operation=operation, params=params, parent_checksum=self.checksum)
        return Checkpoint.create(spec, w, provenance=[*self.header.provenance, link], run_id=self.header.run_id)

    @staticmethod
    def _payload(w: WeightVector) -> bytes:
        return w.values.astype("<f8").tobytes()

    def to_bytes(self) -> bytes:
        payload = self._payload(self.weights)
        header = self.header.model_dump_json().encode("utf8")
        return MAGIC + _HEADER_LEN.pack(len(header)) + header + payload + payload_checksum(payload)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Checkpoint:
        prefix = len(MAGIC) + _HEADER_LEN.size
        if len(raw) < prefix:
            raise TruncatedCheckpointError(f"Checkpoint is {len(raw)} bytes, shorter than its fixed prefix")
        if raw[:len(MAGIC)] != MAGIC:
            raise BadCheckpointMagicError(f"Expected magic {MAGIC!r}, got {raw[:len(MAGIC)]!r}")
        (header_len,) = _HEADER_LEN.unpack_from(raw, len(MAGIC))
        if len(raw) < prefix + header_len:
            raise TruncatedCheckpointError("Checkpoint ends inside its header", header_len=header_len)
        header = CheckpointHeader.model_validate_json(raw[prefix:prefix + header_len])
        if header.format_version not in SUPPORTED_VERSIONS:
            raise UnsupportedVersionError(
                f"Checkpoint format version {header.format_version} is not supported",
                version=header.format_version, supported=list(SUPPORTED_VERSIONS),
            )
        if header.n != header.spec.param_count:
            raise DimensionMismatchError(
                f"Header declares n={header.n}, its spec has {header.spec.param_count} parameters",
                expected=header.spec.param_count, got=header.n,
            )
        body = raw[prefix + header_len:]
        payload_len = 8 * header.n
        if len(body) != payload_len + CHECKSUM_BYTES:
            raise TruncatedCheckpointError(
                f"Expected {payload_len} payload bytes plus a {CHECKSUM_BYTES}-byte checksum, got {len(body)} bytes",
                expected=payload_len + CHECKSUM_BYTES, got=len(body),
            )
        payload, trailer = body[:payload_len], body[payload_len:]
        actual = payload_checksum(payload)
        if actual != trailer or actual.hex() != header.checksum:
            raise ChecksumMismatchError(
                "Checkpoint payload does not match its checksum",
                stored=header.checksum, trailer=trailer.hex(), actual=actual.hex(),
            )
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        return Checkpoint(header=header, weights=WeightVector(values=values, spec_hash=header.spec.spec_hash))
