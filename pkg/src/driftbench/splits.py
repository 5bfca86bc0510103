"""Leave-one-domain-out train/val/test partitions.

The held-out domain becomes the test set in full. Validation clips are
drawn from the remaining (source) domains only, stratified per
(domain, category) cell: each stratum is shuffled with a seed derived
from the cell name and the first round(val_fraction * size) clips go to
val. Changing the seed therefore reshuffles val membership but can never
move a test clip.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Manifest

ROLES = ("train", "val", "test")
DEFAULT_VAL_FRACTION = 0.24


@dataclass(frozen=True)
class SplitSpec:
    held_out_domain: str
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    val_fraction: float
    seed: int


def _stratum_rng(seed: int, domain: str, category: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{domain}\x1f{category}".encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def build_lodo_split(manifest: Manifest, held_out_domain: str,
                     val_fraction: float = DEFAULT_VAL_FRACTION,
                     seed: int = 0) -> SplitSpec:
    if held_out_domain not in manifest.domains:
        raise ValueError(
            f"unknown domain {held_out_domain!r}; manifest has {list(manifest.domains)}"
        )
    if len(manifest.domains) < 2:
        raise ValueError("need at least two domains to build a leave-one-out split")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")

    strata: dict[tuple[str, str], list[str]] = {}
    for r in manifest.records:
        if r.domain != held_out_domain:
            strata.setdefault((r.domain, r.category), []).append(r.clip_id)

    val_set: set[str] = set()
    for (domain, category), ids in sorted(strata.items()):
        n_val = int(np.floor(val_fraction * len(ids) + 0.5))
        order = _stratum_rng(seed, domain, category).permutation(len(ids))
        val_set.update(ids[i] for i in order[:n_val])

    train_ids, val_ids, test_ids = [], [], []
    for r in manifest.records:  # manifest order keeps output deterministic
        if r.domain == held_out_domain:
            test_ids.append(r.clip_id)
        elif r.clip_id in val_set:
            val_ids.append(r.clip_id)
        else:
            train_ids.append(r.clip_id)
    return SplitSpec(
        held_out_domain=held_out_domain,
        train_ids=tuple(train_ids),
        val_ids=tuple(val_ids),
        test_ids=tuple(test_ids),
        val_fraction=val_fraction,
        seed=seed,
    )


def build_all_lodo_splits(manifest: Manifest,
                          val_fraction: float = DEFAULT_VAL_FRACTION,
                          seed: int = 0) -> dict[str, SplitSpec]:
    return {
        domain: build_lodo_split(manifest, domain, val_fraction, seed)
        for domain in manifest.domains
    }


def write_split_file(split: SplitSpec, path: str | Path) -> None:
    """Two tab-separated columns per line: clip_id, role."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for role, ids in (("train", split.train_ids), ("val", split.val_ids),
                          ("test", split.test_ids)):
            for clip_id in ids:
                fh.write(f"{clip_id}\t{role}\n")


def read_split_file(path: str | Path, manifest: Manifest) -> SplitSpec:
    """Rebuild a SplitSpec from a split file plus the manifest it indexes.

    val_fraction and seed are construction-time parameters not stored in
    the file; they come back as NaN-ish placeholders (0.0 / -1).
    """
    roles: dict[str, str] = {}
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ROLES:
                raise ValueError(f"{path}:{lineno}: expected 'clip_id<TAB>train|val|test'")
            if parts[0] in roles:
                raise ValueError(f"{path}:{lineno}: duplicate clip_id {parts[0]!r}")
            roles[parts[0]] = parts[1]

    by_id = manifest.by_id()
    unknown = sorted(set(roles) - set(by_id))
    if unknown:
        raise ValueError(f"split references clip_ids missing from manifest: {unknown[:5]}")
    test_domains = {by_id[cid].domain for cid, role in roles.items() if role == "test"}
    if len(test_domains) != 1:
        raise ValueError(
            f"test rows must cover exactly one domain, found {sorted(test_domains)}"
        )
    grouped: dict[str, list[str]] = {role: [] for role in ROLES}
    for r in manifest.records:
        role = roles.get(r.clip_id)
        if role is not None:
            grouped[role].append(r.clip_id)
    return SplitSpec(
        held_out_domain=next(iter(test_domains)),
        train_ids=tuple(grouped["train"]),
        val_ids=tuple(grouped["val"]),
        test_ids=tuple(grouped["test"]),
        val_fraction=0.0,
        seed=-1,
    )
