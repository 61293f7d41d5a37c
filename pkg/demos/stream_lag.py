"""
Sequential adaptation over a drifting stream
============================================

Each batch is scored by every model adapted so far. Reading a column
downwards goes from the oldest model to the newest.
"""

import numpy as np
from streamassoc.experiments import StreamConfig, stream_trial

report = stream_trial(seed=0, stream=StreamConfig(K=4))
lag = report.lag

np.set_printoptions(precision=3, suppress=True)
print("rows: model adapted through batch k, columns: batch m")
print(lag.acc)
print("source only:", lag.source_only)

for m in range(lag.K):
    print("batch %d by lag:" % (m + 1), lag.row(m))

# the same report as flat CSV
print(report.to_csv())
