"""Why some call graphs are refused.

Reactor a calls b and c concurrently, and both of them call d.  The second
visit to d reaches it while the first visit (same root transaction) is still
running there, so the runtime aborts the root with a dangerous-structure
error instead of letting two sub-transactions of one transaction race on d's
state.  Awaiting b before calling c removes the overlap and the transaction
commits.
"""

import time

from reactordb.deployment import build_strategy
from reactordb.runtime import ReactorType, instantiate_database


def slow_touch(tx):
    v = tx.read("kv", 0) or 0
    time.sleep(0.05)  # stay active on d long enough for the second visit to arrive
    tx.write("kv", 0, v + 1)
    return v + 1


def relay(tx, dest):
    return tx.call(dest, "slow_touch").get()


def diamond(tx, b, c, d):
    fb = tx.call(b, "relay", d)
    fc = tx.call(c, "relay", d)
    return fb.get(), fc.get()


def sequential(tx, b, c, d):
    first = tx.call(b, "relay", d).get()
    return first, tx.call(c, "relay", d).get()


NODE = ReactorType("Node", {"slow_touch": slow_touch, "relay": relay, "diamond": diamond,
                            "sequential": sequential}, tables=[("kv", 1)])


def main():
    names = ["a", "b", "c", "d"]
    # one container per reactor, two threads per executor so d can admit both visits
    db = instantiate_database([(n, "Node") for n in names], [NODE], build_strategy("s3", 4, names, mpl=2))
    db.start()
    try:
        out = db.run("a", "diamond", "b", "c", "d")
        print(f"diamond:    committed={out.committed} reason={out.reason}")
        out = db.run("a", "sequential", "b", "c", "d")
        print(f"sequential: committed={out.committed} value={out.value}")
        print("d's counter:", db.reactor_rows("d", "kv"))
    finally:
        db.shutdown()


if __name__ == "__main__":
    main()
