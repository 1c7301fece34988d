"""Empty transactions with concurrency control disabled: what is left is the
cost of handing a request from a client thread to an executor and back."""

from __future__ import annotations

from ..runtime import ReactorType
from .base import Workload


def noop(tx):
    return None


class NoopWorkload(Workload):
    name = "noop"
    cc_enabled = False

    def __init__(self, spec):
        super().__init__(spec)
        self._names = [f"wh{i}" for i in range(max(1, spec.scale_factor))]

    def default_executors(self):
        return len(self._names)

    def reactor_names(self):
        return self._names

    def declarations(self):
        return [(n, "Noop") for n in self._names]

    def types(self):
        return [ReactorType("Noop", {"noop": noop})]

    def generator(self, wid, rng):
        names = self._names
        home = names[wid % len(names)]
        return lambda: (home, "noop", ())
