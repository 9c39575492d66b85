"""From hit sequences to backtest verdicts.

A correct VaR model produces independent Bernoulli(alpha) hits. Two bad
models are staged next to it: one with too many hits and one whose hits
come in bursts. Run with ``python3 demos/var_backtest_walkthrough.py``.
"""

import numpy as np

from bernvine import backtests as bt
from bernvine.risk import HitSequence

rng = np.random.default_rng(3)
P, alpha = 300, 0.05

good = rng.random(P) < alpha
loose = rng.random(P) < 2.5 * alpha

# Bursty hits: calm spells alternate with short turbulent ones.
state = np.zeros(P, dtype=bool)
for t in range(1, P):
    state[t] = rng.random() < (0.9 if state[t - 1] else 0.02)
bursty = rng.random(P) < np.where(state, 0.3, 0.02)

sets = [(alpha, "long", name, HitSequence(h.astype(np.int8), alpha))
        for name, h in (("good", good), ("loose", loose), ("bursty", bursty))]

# Every p-value is Monte-Carlo: the statistic is ranked among 9999 draws
# simulated under the correct-model null at the same P and alpha.
rows = bt.backtest_report(sets, seed=0)
print(bt.format_report(rows, precision=6), end="")

# The spell structure that the duration tests look at.
for name, h in (("good", good), ("bursty", bursty)):
    ds = bt.durations(h, alpha)
    print(f"{name:6s} hits={int(h.sum()):3d} mean gap {ds.interior.mean():6.1f} "
          f"gap sd {ds.interior.std():6.1f}")
