"""Shared builders for randomized series and small cohorts."""

import numpy as np
import pytest

from robustseq.temporal import VisitSeries


def random_series(rng, t_len=6, d=4, c=3, patient_id="p0", with_states=False,
                  observed_rate=0.7):
    timestamps = np.concatenate([[0.0], np.cumsum(0.1 + rng.exponential(1.0, t_len - 1))])
    values = rng.standard_normal((t_len, d))
    mask = (rng.random((t_len, d)) < observed_rate).astype(float)
    labels = (rng.random((t_len, c)) < 0.4).astype(float)
    states = rng.integers(0, 3, t_len) if with_states else None
    return VisitSeries(timestamps=timestamps, values=values, mask=mask,
                       labels=labels, patient_id=patient_id,
                       latent_states=states)


def random_cohort(rng, n=8, d=4, c=3, max_len=7):
    return [random_series(rng, t_len=int(rng.integers(2, max_len + 1)), d=d,
                          c=c, patient_id=f"p{i:03d}") for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
