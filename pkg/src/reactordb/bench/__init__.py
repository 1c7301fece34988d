"""Benchmark workloads and the closed-loop harness."""

from .exchange import ExchangeWorkload
from .harness import EpochStats, RunResult, WorkloadSpec, make_workload, run, write_epochs_csv
from .noop import NoopWorkload
from .smallbank import SmallbankWorkload
from .tpcc import TpccWorkload
from .ycsb import YcsbWorkload

WORKLOADS = {
    "smallbank": SmallbankWorkload,
    "noop": NoopWorkload,
    "tpcc": TpccWorkload,
    "ycsb": YcsbWorkload,
    "exchange": ExchangeWorkload,
}

__all__ = ["EpochStats", "RunResult", "WORKLOADS", "WorkloadSpec", "make_workload", "run", "write_epochs_csv"]
