"""Partitions of vertices into cores, semi-periphery and periphery."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

CORE = "core"
SEMI_PERIPHERY = "semi-periphery"
PERIPHERY = "periphery"


@dataclass(frozen=True, order=True)
class Role:
    kind: str
    index: int | None = None

    def __post_init__(self):
        if self.kind not in (CORE, SEMI_PERIPHERY, PERIPHERY):
            raise ValueError(f"unknown role kind {self.kind!r}")
        if (self.kind == CORE) != (self.index is not None):
            raise ValueError("core roles need an index; other roles must not have one")

    @classmethod
    def core(cls, index: int) -> "Role":
        return cls(CORE, int(index))

    @property
    def is_core(self) -> bool:
        return self.kind == CORE

    def __str__(self):
        return f"core {self.index}" if self.is_core else self.kind

    @classmethod
    def parse(cls, text: str) -> "Role":
        text = text.strip()
        if text.startswith(CORE + " "):
            return cls.core(int(text.split()[1]))
        return cls(text)


SEMI = Role(SEMI_PERIPHERY)
PERI = Role(PERIPHERY)


@dataclass(frozen=True)
class Partition:
    """Vertex to cluster map, optionally with a role per cluster.

    A flat partition (no roles) is what hierarchical clustering produces.
    """

    assignment: Mapping
    roles: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(self.assignment))
        object.__setattr__(self, "roles", dict(self.roles))
        if self.roles:
            missing = set(self.assignment.values()) - set(self.roles)
            if missing:
                raise ValueError(f"clusters without a role: {sorted(missing)}")
            kinds = [r.kind for c, r in self.roles.items()]
            if kinds.count(SEMI_PERIPHERY) > 1 or kinds.count(PERIPHERY) > 1:
                raise ValueError("at most one semi-periphery and one periphery cluster")
            core_idx = [r.index for r in self.roles.values() if r.is_core]
            if len(set(core_idx)) != len(core_idx) or any(i < 1 for i in core_idx):
                raise ValueError("core indices must be distinct positive integers")

    @property
    def units(self) -> frozenset:
        return frozenset(self.assignment)

    def __len__(self):
        return len(self.assignment)

    def clusters(self) -> dict:
        """Cluster ID to member list (members in insertion order)."""
        out: dict = {}
        for v, c in self.assignment.items():
            out.setdefault(c, []).append(v)
        return out

    def role_of(self, vertex) -> Role | None:
        if not self.roles:
            return None
        return self.roles[self.assignment[vertex]]

    def cores(self) -> dict[int, list]:
        """Core index to members, ordered by core index."""
        if not self.roles:
            raise ValueError("partition has no role labels")
        by_cluster = self.clusters()
        out = {}
        for c, role in sorted(self.roles.items(), key=lambda kv: kv[1]):
            if role.is_core and c in by_cluster:
                out[role.index] = by_cluster[c]
        return dict(sorted(out.items()))

    def members_with(self, kind: str) -> list:
        return [v for v, c in self.assignment.items() if self.roles[c].kind == kind]

    def core_members(self) -> set:
        return set(self.members_with(CORE))

    def to_dict(self) -> dict:
        clusters = []
        by_cluster = self.clusters()
        for c in sorted(by_cluster, key=_cluster_sort_key(self.roles)):
            entry = {"id": c, "members": list(by_cluster[c])}
            if self.roles:
                entry["role"] = str(self.roles[c])
            clusters.append(entry)
        return {"clusters": clusters}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Partition":
        assignment, roles = {}, {}
        for entry in data["clusters"]:
            cid = entry["id"]
            for v in entry["members"]:
                if v in assignment:
                    raise ValueError(f"vertex {v!r} assigned twice")
                assignment[v] = cid
            if "role" in entry:
                roles[cid] = Role.parse(entry["role"])
        return cls(assignment, roles)

    @classmethod
    def from_roles(cls, groups: Mapping[Role, Iterable]) -> "Partition":
        """Build from ``{role: members}``; cluster IDs are the role strings."""
        assignment, roles = {}, {}
        for role, members in groups.items():
            cid = str(role)
            roles[cid] = role
            for v in members:
                assignment[v] = cid
        return cls(assignment, roles)


def _cluster_sort_key(roles):
    order = {CORE: 0, SEMI_PERIPHERY: 1, PERIPHERY: 2}

    def key(c):
        if not roles:
            return (0, 0, str(c))
        r = roles[c]
        return (order[r.kind], r.index or 0, str(c))

    return key


def dump_partition(p: Partition, **extra) -> str:
    doc = p.to_dict()
    doc.update(extra)
    return json.dumps(doc, indent=1) + "\n"


def load_partition(text: str) -> Partition:
    return Partition.from_dict(json.loads(text))
