"""Predicting latency before running the program.

Calibrate communication and processing costs on the simplest multi-transfer
(one synchronous remote credit), then predict the four formulations at a
larger size and compare with measurements.  Prediction adds the measured
commit plus input-generation time, which the model does not cover.
"""

from reactordb.bench import WorkloadSpec, run
from reactordb.bench.predict import calibrate_smallbank, predict_smallbank
from reactordb.costmodel import FORMULATIONS

SIZE = 5


def main():
    cal, _ = calibrate_smallbank(7, epochs=10)
    print(f"calibrated send={cal.params.send:.1f}us recv={cal.params.recv:.1f}us")
    print(f"\n{'formulation':<18}{'predicted':>11}{'measured':>11}{'error':>8}")
    for f in FORMULATIONS:
        spec = WorkloadSpec("smallbank", scale_factor=7, formulation=f, txn_size=SIZE, epochs=10)
        res = run(spec, strategy="s3", n_executors=7, profile=True)
        pred = predict_smallbank(cal, f, SIZE, 7) + res.mean_breakdown().commit_plus_inputgen
        meas = res.mean_latency_us
        print(f"{f:<18}{pred:>9.0f}us{meas:>9.0f}us{(pred - meas) / meas:>8.1%}")


if __name__ == "__main__":
    main()
