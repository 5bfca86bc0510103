"""Clustering-based covariate shift scoring.

Each group (a domain, a class, or a domain-class cell) is summarized by a
prototype: the mean of the k-means centroids its members fall nearest to.
A group's shift score is mu + tau * sigma over its Euclidean distances to
every other prototype, with sigma the population standard deviation.
Higher scores mark groups that sit farther from the rest of the data.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import ClusterModel, kmeans_fit
from .dataset import ClipRecord

DEFAULT_TAU = 2.0
DEFAULT_K_CLUSTERS = 64


class GroupingMode(str, enum.Enum):
    DOMAIN = "domain"
    CLASS = "class"
    DOMAIN_CLASS = "domain-class"


@dataclass(frozen=True)
class GroupKey:
    mode: GroupingMode
    domain: str | None = None
    category: str | None = None

    def __post_init__(self) -> None:
        want_domain = self.mode in (GroupingMode.DOMAIN, GroupingMode.DOMAIN_CLASS)
        want_category = self.mode in (GroupingMode.CLASS, GroupingMode.DOMAIN_CLASS)
        if (self.domain is not None) != want_domain or \
                (self.category is not None) != want_category:
            raise ValueError(f"fields inconsistent with mode {self.mode.value}: {self}")

    @property
    def label(self) -> str:
        if self.mode is GroupingMode.DOMAIN:
            return self.domain  # type: ignore[return-value]
        if self.mode is GroupingMode.CLASS:
            return self.category  # type: ignore[return-value]
        return f"{self.domain}/{self.category}"


@dataclass(frozen=True)
class GroupPrototype:
    key: GroupKey
    prototype: np.ndarray  # (D,)
    member_count: int


@dataclass(frozen=True)
class GroupDistances:
    """Distances from one group's prototype to all other prototypes."""

    key: GroupKey
    member_count: int
    deltas: np.ndarray  # (n_groups - 1,)


@dataclass(frozen=True)
class GroupScore:
    key: GroupKey
    member_count: int
    deltas: np.ndarray
    mu: float
    sigma: float
    score: float


@dataclass(frozen=True)
class ShiftReport:
    tau: float
    k_clusters: int
    mode: GroupingMode
    groups: tuple[GroupScore, ...]  # sorted by descending score

    def score_of(self, label: str) -> float:
        for g in self.groups:
            if g.key.label == label:
                return g.score
        raise KeyError(label)


def _group_label_fn(mode: GroupingMode):
    if mode is GroupingMode.DOMAIN:
        return lambda r: GroupKey(mode, domain=r.domain)
    if mode is GroupingMode.CLASS:
        return lambda r: GroupKey(mode, category=r.category)
    return lambda r: GroupKey(mode, domain=r.domain, category=r.category)


def group_prototypes(X: np.ndarray, records: list[ClipRecord] | tuple[ClipRecord, ...],
                     model: ClusterModel, mode: GroupingMode) -> list[GroupPrototype]:
    """Mean assigned centroid per group, one prototype per nonempty group.

    Rows of X align with records; model.assignments gives each row's
    nearest centroid. Prototype order follows sorted group labels so
    downstream output is stable.
    """
    X = np.asarray(X)
    if len(records) == 0:
        raise ValueError("empty dataset: no records to group")
    if X.shape[0] != len(records) or len(model.assignments) != len(records):
        raise ValueError(
            f"alignment mismatch: {X.shape[0]} feature rows, {len(records)} records, "
            f"{len(model.assignments)} assignments"
        )
    key_of = _group_label_fn(mode)
    members: dict[GroupKey, list[int]] = {}
    for i, rec in enumerate(records):
        members.setdefault(key_of(rec), []).append(i)
    prototypes = []
    for key in sorted(members, key=lambda k: k.label):
        idx = members[key]
        assigned = model.centroids[model.assignments[idx]]
        prototypes.append(GroupPrototype(
            key=key, prototype=assigned.mean(axis=0), member_count=len(idx),
        ))
    return prototypes


def prototype_distances(prototypes: list[GroupPrototype]) -> list[GroupDistances]:
    """Euclidean distance from each prototype to every other one."""
    if len(prototypes) < 2:
        raise ValueError(f"need >= 2 groups to compare, got {len(prototypes)}")
    P = np.stack([p.prototype for p in prototypes])
    full = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    out = []
    for i, p in enumerate(prototypes):
        deltas = np.delete(full[i], i)
        out.append(GroupDistances(key=p.key, member_count=p.member_count, deltas=deltas))
    return out


def shift_scores(distances: list[GroupDistances], tau: float = DEFAULT_TAU, *,
                 k_clusters: int = 0,
                 mode: GroupingMode = GroupingMode.DOMAIN) -> ShiftReport:
    """Per-group mu, population sigma, and score = mu + tau * sigma.

    Groups come back sorted by descending score (score ties broken by label).
    """
    groups = []
    for gd in distances:
        if gd.deltas.size == 0:
            raise ValueError(f"group {gd.key.label!r} has an empty distance set")
        mu = float(gd.deltas.mean())
        sigma = float(np.sqrt(((gd.deltas - mu) ** 2).mean()))  # population divisor
        groups.append(GroupScore(
            key=gd.key, member_count=gd.member_count, deltas=gd.deltas,
            mu=mu, sigma=sigma, score=mu + tau * sigma,
        ))
    groups.sort(key=lambda g: (-g.score, g.key.label))
    return ShiftReport(tau=tau, k_clusters=k_clusters, mode=mode, groups=tuple(groups))


def score_dataset(X: np.ndarray, records, k_clusters: int = DEFAULT_K_CLUSTERS,
                  seed: int = 0, mode: GroupingMode = GroupingMode.DOMAIN,
                  tau: float = DEFAULT_TAU) -> ShiftReport:
    """End-to-end pipeline: kmeans -> prototypes -> distances -> scores."""
    model = kmeans_fit(X, k_clusters=k_clusters, seed=seed)
    prototypes = group_prototypes(X, records, model, mode)
    distances = prototype_distances(prototypes)
    return shift_scores(distances, tau, k_clusters=k_clusters, mode=mode)


def write_shift_report_csv(report: ShiftReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "mu", "sigma", "score", "member_count"])
        for g in report.groups:
            writer.writerow([g.key.label, f"{g.mu:.6f}", f"{g.sigma:.6f}",
                             f"{g.score:.6f}", g.member_count])


def shift_report_to_dict(report: ShiftReport) -> dict:
    return {
        "tau": report.tau,
        "k_clusters": report.k_clusters,
        "mode": report.mode.value,
        "groups": [
            {
                "group": g.key.label,
                "mu": g.mu,
                "sigma": g.sigma,
                "score": g.score,
                "member_count": g.member_count,
                "distances": [float(d) for d in g.deltas],
            }
            for g in report.groups
        ],
    }


def write_shift_report_json(report: ShiftReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(shift_report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
