"""Two bank branches as reactors, deployed shared-nothing.

A transfer debits locally and credits the other branch through an
asynchronous call; the future is awaited before returning.  Run a few
hundred concurrent transfers and confirm that money is conserved.
"""

import random

from reactordb.deployment import parse_plan
from reactordb.runtime import ReactorType, instantiate_database

ACCOUNTS = 500

PLAN = {
    "strategy_label": "two-containers",
    "router": "affinity",
    "containers": [{"id": 0, "executors": [{"id": 0, "mpl": 4}]},
                   {"id": 1, "executors": [{"id": 0, "mpl": 4}]}],
    "reactor_map": [{"reactor": "north", "container": 0, "executor": 0},
                    {"reactor": "south", "container": 1, "executor": 0}],
}


def balance(tx, acct):
    return tx.read("accounts", acct)


def credit(tx, acct, amount):
    tx.write("accounts", acct, tx.read("accounts", acct) + amount)


def transfer(tx, acct, other_branch, other_acct, amount):
    have = tx.read("accounts", acct)
    if have < amount:
        tx.abort("insufficient funds")
    tx.write("accounts", acct, have - amount)
    # the credit runs on the other container while we return here
    fut = tx.call(other_branch, "credit", other_acct, amount)
    fut.get()
    return have - amount


BRANCH = ReactorType("Branch", {"balance": balance, "credit": credit, "transfer": transfer},
                     tables=[("accounts", 1)])


def main():
    db = instantiate_database([("north", "Branch"), ("south", "Branch")], [BRANCH], parse_plan(PLAN))
    for branch in ("north", "south"):
        for acct in range(ACCOUNTS):
            db.load(branch, "accounts", acct, 100)
    db.start()
    rng = random.Random(1)
    futs = []
    for _ in range(300):
        src, dst = rng.sample(["north", "south"], 2)
        futs.append(db.submit(src, "transfer", rng.randrange(ACCOUNTS), dst, rng.randrange(ACCOUNTS), rng.randint(1, 40)))
    outs = [f.wait(30) for f in futs]
    db.shutdown()

    reasons = {}
    for o in outs:
        reasons[o.reason or "committed"] = reasons.get(o.reason or "committed", 0) + 1
    total = sum(sum(db.reactor_rows(b, "accounts").values()) for b in ("north", "south"))
    print("outcomes (conflicts are not retried):", reasons)
    print(f"money in the system: {total} (started with {2 * 100 * ACCOUNTS})")


if __name__ == "__main__":
    main()
