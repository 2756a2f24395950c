"""Smoke test for the kfrev Python module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import datetime as dt
import math
import tempfile
from pathlib import Path

import kfrev


def main():
    steps = kfrev.filter_series([100.0 + 0.1 * i for i in range(200)], q=1.0, r=1.0)
    assert len(steps) == 200
    golden = (math.sqrt(5) - 1) / 2
    assert abs(steps[-1].gain - golden) < 1e-8
    assert abs(kfrev.steady_state_gain(1.0, 1.0) - golden) < 1e-12

    assert kfrev.forecast(101.0, 100.0) < 0
    assert kfrev.forecast(101.0, 100.0, sign="literal") > 0

    z = kfrev.normalize_cross_section({"A": 0.01, "B": -0.02, "C": 0.005})
    assert abs(sum(z.values())) < 1e-12
    book = kfrev.build_positions(dt.date(2020, 1, 2), z, gross_target=1e6)
    assert abs(sum(abs(v) for v in book.values()) - 1e6) < 1e-6

    s = kfrev.summarize([1.0, 2.0, 3.0])
    assert s.n_days == 3 and abs(s.mean_rog_bps - 2.0) < 1e-12

    run = kfrev.backtest_synthetic("ou", n_instruments=20, n_days=400, seed=3, max_lag=5)
    exec2 = run.summaries["exec2"]
    assert exec2.mean_rog_bps > 0, exec2
    assert len(run.lag_profile) == 5
    assert isinstance(run.daily("exec2")[0][0], dt.date)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        universe = kfrev.generate_synthetic(tmp / "data", n_instruments=6, n_days=200, seed=2)
        config = tmp / "run.toml"
        config.write_text(
            f'market_code = "SYN"\n'
            f'universe = "{universe}"\n'
            f'output_dir = "{tmp / "out"}"\n'
            f"max_lag = 3\n"
            f"[data]\n"
            f'source = "local"\n'
            f'dir = "{tmp / "data"}"\n'
        )
        result = kfrev.run_backtest(str(config))
        assert (tmp / "out" / "summary.json").is_file()
        assert set(result.summaries) == set(kfrev.schemes())

    try:
        kfrev.filter_series([100.0, -1.0])
    except kfrev.KfrevError:
        pass
    else:
        raise AssertionError("negative price accepted")

    print("kfrev smoke test ok:", exec2)


if __name__ == "__main__":
    main()
