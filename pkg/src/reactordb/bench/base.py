"""Interface every workload implements for the harness."""

from __future__ import annotations

from ..deployment import build_strategy


class Workload:
    name = "abstract"
    cc_enabled = True
    default_strategy = "s3"

    def __init__(self, spec):
        self.spec = spec
        self.db = None

    def reactor_names(self):
        raise NotImplementedError

    def declarations(self):
        raise NotImplementedError

    def types(self):
        raise NotImplementedError

    def default_executors(self):
        return 1

    def default_plan(self, strategy=None, n_executors=None):
        return build_strategy(strategy or self.default_strategy, n_executors or self.default_executors(),
                              self.reactor_names())

    def load(self, db):
        """Populate committed rows before the database starts."""

    def bind(self, db):
        self.db = db
        self.container_of = {name: d.container_id for name, d in db.reactors.items()}

    def generator(self, wid, rng):
        """Return a callable producing (reactor, procedure, args) per call."""
        raise NotImplementedError

    def check(self, db):
        """Consistency oracles; {name: bool}."""
        return {}
