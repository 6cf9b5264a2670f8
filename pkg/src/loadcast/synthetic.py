from datetime import date

import numpy as np

from loadcast.meterdata import HouseSeries
from loadcast.numkit import make_rng


def synthetic_daily(n=1000, seed=0, noise=0.05):
    """``2 + sin(2 pi t / 7) + 0.5 sin(2 pi t / 365) + u``, ``u ~ U(-noise, noise)``."""
    t = np.arange(n)
    rng = make_rng(seed)
    return (
        2.0
        + np.sin(2 * np.pi * t / 7)
        + 0.5 * np.sin(2 * np.pi * t / 365)
        + rng.uniform(-noise, noise, n)
    )


def synthetic_house(n=1000, seed=0, noise=0.05, house_id="SYN0", start=date(2012, 1, 1)):
    return HouseSeries(house_id, start, synthetic_daily(n, seed, noise))
