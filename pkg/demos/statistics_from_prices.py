"""
Asset statistics from a price history
=====================================

Turn a table of closing prices into the mean returns and covariance the
solvers consume, then write and reread them in the mean/stddev/correlation
text layout.
"""
import io

import numpy as np

from buyin.ingest import (
    asset_statistics,
    compute_returns,
    dump_meanstd_correlation,
    load_meanstd_correlation,
    read_price_csv,
)

# A small synthetic price file: a date column, then one column per asset.
rng = np.random.default_rng(7)
steps = rng.normal([0.002, 0.001, 0.004], [0.01, 0.004, 0.02], size=(60, 3))
prices = 100 * np.cumprod(1 + steps, axis=0)
lines = ["date,steady,bond,growth"] + [f"{k}," + ",".join(f"{p:.4f}" for p in row) for k, row in enumerate(prices)]
pm = read_price_csv(io.StringIO("\n".join(lines)))
print("assets:", pm.asset_names, "dates:", pm.prices.shape[1])

# Arithmetic returns are the default; log returns are one keyword away.
stats = asset_statistics(compute_returns(pm))
log_stats = asset_statistics(compute_returns(pm, "log"))
print("mean returns       ", np.round(stats.mean_returns, 5))
print("mean log returns   ", np.round(log_stats.mean_returns, 5))
print("stddevs            ", np.round(stats.stddevs(), 5))

# The text layout stores stddevs and correlations; a round trip is lossless.
text = dump_meanstd_correlation(stats)
print(text.splitlines()[:3])
back = load_meanstd_correlation(io.StringIO(text))
print("max covariance difference after round trip:", np.max(np.abs(back.covariance - stats.covariance)))
