"""Generate the synthetic 30-asset fixture shipped in src/hjb_portfolio/data.

The numbers are invented: a one-factor model with a fixed seed, loosely
shaped like a large-cap equity index. They are NOT real index data.
"""
import sys
from pathlib import Path

import numpy as np

from hjb_portfolio.market_data import dump_asset_stats, make_asset_stats

rng = np.random.default_rng(20171231)
n = 30
beta = rng.uniform(0.6, 1.4, n)
idio = rng.uniform(0.15, 0.40, n)
market_vol = 0.16
sigma = np.outer(beta, beta) * market_vol**2 + np.diag(idio**2)
# expected returns rise with total risk, plus noise
vol = np.sqrt(np.diag(sigma))
mu = 0.02 + 0.35 * (vol - vol.min()) + rng.normal(0.0, 0.015, n)
names = [f"SYN{i:02d}" for i in range(1, n + 1)]
stats = make_asset_stats(names, np.round(mu, 6), np.round(sigma, 8))
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("src/hjb_portfolio/data/synthetic30.csv")
out.write_text(dump_asset_stats(stats))
print(f"wrote {out}")
