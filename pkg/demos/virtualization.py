"""One application, three architectures.

The same TPC-C code and seed run under shared-everything without affinity
(S1), shared-everything with affinity (S2) and shared-nothing (S3).  With a
single client the final database contents are identical; with several
clients the plans differ in throughput and abort rate.
"""

from reactordb.bench import WorkloadSpec, run

PLANS = {"s1": "shared-everything, round-robin", "s2": "shared-everything, affinity",
         "s3": "shared-nothing"}


def main():
    states = {}
    for s in PLANS:
        spec = WorkloadSpec("tpcc", scale_factor=4, n_workers=1, txns_per_worker=200, epochs=1, seed=3,
                            remote_pct=20)
        states[s] = run(spec, strategy=s, n_executors=4).db.logical_state()
    print("single client, same final state under all plans:", states["s1"] == states["s2"] == states["s3"])

    print(f"\n{'plan':<34}{'txn/s':>10}{'abort rate':>12}")
    for s, label in PLANS.items():
        spec = WorkloadSpec("tpcc", scale_factor=4, n_workers=8, epochs=10, seed=3)
        res = run(spec, strategy=s, n_executors=4)
        print(f"{s + ' ' + label:<34}{res.throughput_tps:>10.0f}{res.abort_rate:>12.2%}")


if __name__ == "__main__":
    main()
