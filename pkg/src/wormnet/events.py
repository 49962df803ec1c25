"""Event log shared by the encounter simulator and the trace replay."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np


class EventKind(enum.IntEnum):
    PREY_INFECT = 0      # node_a gets prey from node_b (-1: seeded)
    VACCINATE = 1        # susceptible node_a gets predator from node_b
    TERMINATE = 2        # prey on node_a terminated by predator on node_b
    ARRIVE = 3           # node_a joins (or rejoins) the network; node_b = group
    ON_OFF_TOGGLE = 4    # node_b = new on state (0/1)
    INJECT = 5           # node_a seeded with predator
    REMOVE = 6           # manual removal / vaccination into R
    RESUSCEPTIBLE = 7    # infected node_a becomes susceptible again
    DEPART = 8           # node_a leaves the network
    MIGRATE = 9          # node_a moves to group node_b
    ARRIVE_IMMUNE = 10   # node_a joins as prey-immune susceptible; node_b = group


_NAMES = {
    EventKind.PREY_INFECT: "PreyInfect",
    EventKind.VACCINATE: "Vaccinate",
    EventKind.TERMINATE: "Terminate",
    EventKind.ARRIVE: "Arrive",
    EventKind.ON_OFF_TOGGLE: "OnOffToggle",
    EventKind.INJECT: "Inject",
    EventKind.REMOVE: "Remove",
    EventKind.RESUSCEPTIBLE: "Resusceptible",
    EventKind.DEPART: "Depart",
    EventKind.MIGRATE: "Migrate",
    EventKind.ARRIVE_IMMUNE: "ArriveImmune",
}
_BY_NAME = {v: k for k, v in _NAMES.items()}


def kind_name(kind) -> str:
    return _NAMES[EventKind(int(kind))]


@dataclass
class EventLog:
    t: np.ndarray
    kind: np.ndarray
    node_a: np.ndarray
    node_b: np.ndarray

    @classmethod
    def empty(cls) -> "EventLog":
        return cls(np.zeros(0), np.zeros(0, np.int8), np.zeros(0, np.int64), np.zeros(0, np.int64))

    @classmethod
    def from_records(cls, records) -> "EventLog":
        records = list(records)
        if not records:
            return cls.empty()
        t, k, a, b = zip(*records)
        return cls(np.array(t, float), np.array([int(x) for x in k], np.int8),
                   np.array(a, np.int64), np.array(b, np.int64))

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for j in range(len(self.t)):
            yield float(self.t[j]), EventKind(int(self.kind[j])), int(self.node_a[j]), int(self.node_b[j])

    def without(self, kind: EventKind) -> "EventLog":
        keep = self.kind != int(kind)
        return EventLog(self.t[keep], self.kind[keep], self.node_a[keep], self.node_b[keep])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "event", "node_a", "node_b"])
        for t, k, a, b in self:
            w.writerow([repr(t), _NAMES[k], a, b])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EventLog":
        rows = csv.DictReader(io.StringIO(text))
        return cls.from_records(
            (float(r["t"]), _BY_NAME[r["event"]], int(r["node_a"]), int(r["node_b"])) for r in rows
        )
