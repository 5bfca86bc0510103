"""Clip manifests, packed feature tensors, and temporal pooling.

A dataset is described by two files: a line-delimited manifest (one JSON
object per line: clip_id, domain, category, row_index) and a binary
feature pack holding an N x T x D float32 tensor. The manifest addresses
rows of the pack via row_index, so the two can be validated independently
and joined late.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FEATURE_PACK_MAGIC = b"EGF1"

MANIFEST_FIELDS = ("clip_id", "domain", "category", "row_index")


@dataclass(frozen=True)
class ClipRecord:
    """One manifest entry: a clip identity plus its feature-pack row."""

    clip_id: str
    domain: str
    category: str
    row_index: int


@dataclass(frozen=True)
class Manifest:
    """Validated clip records plus their domain/category vocabularies."""

    records: tuple[ClipRecord, ...]
    domains: tuple[str, ...]
    categories: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, ClipRecord]:
        return {r.clip_id: r for r in self.records}


@dataclass
class FeatureSet:
    """Packed clip features: values has shape (n_clips, temporal_count, feature_dim).

    clip_ids is optional; it is only known once a manifest has been joined
    against the pack (the binary format itself carries no identities).
    """

    n_clips: int
    temporal_count: int
    feature_dim: int
    values: np.ndarray
    clip_ids: list[str] | None = None


def _make_manifest(records: list[ClipRecord]) -> Manifest:
    domains = tuple(sorted({r.domain for r in records}))
    categories = tuple(sorted({r.category for r in records}))
    return Manifest(records=tuple(records), domains=domains, categories=categories)


def load_manifest(path: str | Path, n_rows: int | None = None) -> Manifest:
    """Parse and validate a line-delimited JSON manifest.

    Records come back in file order. clip_ids must be unique and every
    row_index must be a nonnegative integer (and < n_rows when the pack
    size is known). Raises ValueError naming the offending line or id.
    """
    path = Path(path)
    records: list[ClipRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed manifest line: {exc}") from None
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: manifest line is not an object")
            missing = [f for f in MANIFEST_FIELDS if f not in obj]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing field(s) {missing}")
            clip_id = obj["clip_id"]
            row_index = obj["row_index"]
            if not isinstance(clip_id, str) or not isinstance(obj["domain"], str) \
                    or not isinstance(obj["category"], str):
                raise ValueError(f"{path}:{lineno}: clip_id/domain/category must be strings")
            if not isinstance(row_index, int) or isinstance(row_index, bool):
                raise ValueError(f"{path}:{lineno}: row_index must be an integer")
            if clip_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate clip_id {clip_id!r}")
            if row_index < 0 or (n_rows is not None and row_index >= n_rows):
                bound = f"[0, {n_rows})" if n_rows is not None else "[0, inf)"
                raise ValueError(
                    f"{path}:{lineno}: row_index {row_index} out of range {bound} "
                    f"for clip {clip_id!r}"
                )
            seen.add(clip_id)
            records.append(ClipRecord(clip_id, obj["domain"], obj["category"], row_index))
    return _make_manifest(records)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in manifest.records:
            fh.write(json.dumps({
                "clip_id": r.clip_id,
                "domain": r.domain,
                "category": r.category,
                "row_index": r.row_index,
            }, sort_keys=True) + "\n")


def load_feature_pack(path: str | Path) -> FeatureSet:
    """Read an EGF1 feature pack and validate that every value is finite.

    Layout: magic "EGF1", then little-endian uint32 N, T, D, then
    N*T*D float32 values row-major (clip, temporal, feature).
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_PACK_MAGIC:
        raise ValueError(f"{path}: bad feature pack magic (expected {FEATURE_PACK_MAGIC!r})")
    n, t, d = struct.unpack("<III", raw[4:16])
    expected = 16 + n * t * d * 4
    if len(raw) != expected:
        raise ValueError(
            f"{path}: size mismatch: header declares N={n} T={t} D={d} "
            f"({expected} bytes) but file has {len(raw)} bytes"
        )
    values = np.frombuffer(raw[16:], dtype="<f4").reshape(n, t, d)
    finite = np.isfinite(values)
    if not finite.all():
        bad_row = int(np.argwhere(~finite)[0][0])
        raise ValueError(f"{path}: non-finite feature value at row {bad_row}")
    return FeatureSet(n_clips=n, temporal_count=t, feature_dim=d, values=values)


def write_feature_pack(features: FeatureSet, path: str | Path) -> None:
    values = np.ascontiguousarray(features.values, dtype="<f4")
    if values.shape != (features.n_clips, features.temporal_count, features.feature_dim):
        raise ValueError(
            f"feature values shape {values.shape} inconsistent with declared "
            f"({features.n_clips}, {features.temporal_count}, {features.feature_dim})"
        )
    header = FEATURE_PACK_MAGIC + struct.pack(
        "<III", features.n_clips, features.temporal_count, features.feature_dim
    )
    Path(path).write_bytes(header + values.tobytes())


def attach_clip_ids(features: FeatureSet, manifest: Manifest) -> FeatureSet:
    """Fill clip_ids from manifest row indices; rows a manifest never names stay None."""
    ids: list[str | None] = [None] * features.n_clips
    for r in manifest.records:
        if r.row_index >= features.n_clips:
            raise ValueError(
                f"clip {r.clip_id!r} row_index {r.row_index} exceeds pack rows "
                f"{features.n_clips}"
            )
        ids[r.row_index] = r.clip_id
    features.clip_ids = ids  # type: ignore[assignment]
    return features


def pool_temporal(features: FeatureSet, mode: str = "mean") -> np.ndarray:
    """Collapse the temporal axis: mean -> (N, D); flatten -> (N, T*D)."""
    if mode == "mean":
        return features.values.mean(axis=1)
    if mode == "flatten":
        return features.values.reshape(features.n_clips, -1)
    raise ValueError(f"unknown pooling mode {mode!r} (expected 'mean' or 'flatten')")


def load_category_mapping(path: str | Path) -> dict[str, str]:
    """Read a two-column tab-separated fine-label -> category mapping."""
    path = Path(path)
    mapping: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated columns")
            mapping[parts[0]] = parts[1]
    return mapping


def apply_category_mapping(manifest: Manifest, mapping: dict[str, str]) -> Manifest:
    """Replace each record's category via the mapping; all labels must be covered."""
    missing = sorted({r.category for r in manifest.records} - set(mapping))
    if missing:
        raise ValueError(f"unmapped category label(s): {missing}")
    remapped = [replace(r, category=mapping[r.category]) for r in manifest.records]
    return _make_manifest(remapped)
