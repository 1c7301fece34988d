"""Commitment of root transactions.

A root that touched a single container commits with plain local OCC.  Across
several containers a two-phase protocol runs inline on the root's worker:

* phase 1 latches the write sets of all containers (ascending container id),
  then validates the reads of all containers;
* phase 2 installs everywhere under one TID, or releases everywhere.

Validating a container only after every container's write latches are held
matters: validating and moving on container by container lets two
transactions that read on one container and write on the other both pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import occ
from .errors import ConflictAbort

PENDING = "pending"
COMMIT = "commit"
ABORT = "abort"


@dataclass
class CommitPlan:
    root_txn_id: int
    touched_containers: tuple
    states: dict = field(repr=False)
    decision: str = PENDING
    tid: int | None = None
    failure: BaseException | None = None

    def decide(self, decision):
        if self.decision != PENDING:
            raise RuntimeError(f"txn {self.root_txn_id} already decided {self.decision}")
        self.decision = decision


def plan_for(ctx) -> CommitPlan:
    touched = tuple(sorted(ctx.touched | set(ctx.states)))
    states = {cid: ctx.state_for(cid) for cid in touched}
    return CommitPlan(ctx.txn_id, touched, states)


def _installer(ctx):
    tracer = ctx.db.tracer
    if tracer is None:
        return None

    def on_install(entry, table, key):
        tracer.op(ctx, entry.subtxn, entry.reactor, table.name, key[1:], "w")

    return on_install


def execute(plan: CommitPlan, tids: occ.TidGenerator, on_install=None):
    """Run the commit protocol for a plan; returns the TID or raises the
    conflict that aborted it (after releasing every container)."""
    states = [plan.states[c] for c in plan.touched_containers]
    if len(states) == 1:
        try:
            plan.tid = occ.commit_single(states[0], tids, on_install)
        except ConflictAbort as exc:
            plan.failure = exc
            plan.decide(ABORT)
            raise
        plan.decide(COMMIT)
        return plan.tid
    try:
        for st in states:
            occ.lock_write_set(st)
        for st in states:
            occ.validate_reads(st)
    except ConflictAbort as exc:
        for st in states:
            occ.release(st)
        plan.failure = exc
        plan.decide(ABORT)
        raise
    floor = max(st.max_observed_tid() for st in states)
    plan.tid = tids.next_tid(floor)
    plan.decide(COMMIT)
    for st in states:
        st.status = occ.VALIDATED
        occ.install_and_unlock(st, plan.tid, on_install)
    return plan.tid


def commit_root(ctx):
    plan = plan_for(ctx)
    ctx.commit_plan = plan
    return execute(plan, ctx.db.tids, _installer(ctx))


def abort_root(ctx):
    """Drop the transaction's footprint on every container it touched."""
    for st in list(ctx.states.values()):
        if st.status != occ.COMMITTED:
            occ.release(st)
