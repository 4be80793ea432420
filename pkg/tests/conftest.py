"""Shared random-instance generators for the test suite.

Instances mimic the shapes this package prunes: weight matrices with
unevenly important heads/channels and Hessians built from correlated
calibration features (finite sample counts, so off-diagonal structure is
always present).
"""

import numpy as np

from obslim.head_pruner import HeadLayout
from obslim.linalg import SpdMatrix
from obslim.obs_core import mask_residual


def rand_spd(rng, n: int, m_factor: int = 4, gamma: float = 0.3) -> SpdMatrix:
    """SPD Hessian of mildly mixed features, 2 X X^T with m_factor*n tokens."""
    mix = np.eye(n) + gamma * rng.normal(size=(n, n)) / np.sqrt(n)
    x = mix @ rng.normal(size=(n, m_factor * n))
    return SpdMatrix(2.0 * x @ x.T)


def head_cols(layout: HeadLayout, head: int) -> np.ndarray:
    return np.asarray(layout.col_range(head), dtype=np.intp)


def other_cols(layout: HeadLayout, head) -> np.ndarray:
    """All columns except the given head(s)."""
    heads = np.atleast_1d(head)
    drop = np.concatenate([head_cols(layout, h) for h in heads])
    return np.setdiff1d(np.arange(layout.n_cols), drop)


def exact_head_residuals(w, h: SpdMatrix, layout: HeadLayout) -> np.ndarray:
    """Exact residual of optimally removing each single head."""
    return np.array(
        [mask_residual(w, h, other_cols(layout, hd)) for hd in range(layout.n_head)]
    )


def head_instance(rng, n_head: int = 4, sep: float = 2.0):
    """Random head-pruning instance with a clearly best head.

    Features carry a per-head shared component (within-head correlation
    0.2..0.6) and a mild global mixing; per-head weight scales are
    log-normal, mirroring the wide importance spread of real attention
    heads. Instances whose two cheapest heads sit within `sep` of each
    other are resampled so the exact argmin is well defined.
    """
    while True:
        d_head = int(rng.integers(2, 5))
        layout = HeadLayout(n_head, d_head)
        n = layout.n_cols
        m = 32 * n
        rho = rng.uniform(0.2, 0.6)
        x = np.sqrt(1.0 - rho) * rng.normal(size=(n, m))
        for hd in range(n_head):
            x[head_cols(layout, hd)] += np.sqrt(rho) * rng.normal(size=m)
        mix = np.eye(n) + 0.15 * rng.normal(size=(n, n)) / np.sqrt(n)
        xm = mix @ x
        h = SpdMatrix(2.0 * xm @ xm.T)
        w = rng.normal(size=(int(rng.integers(8, 17)), n))
        for hd in range(n_head):
            w[:, head_cols(layout, hd)] *= np.exp(0.8 * rng.normal())
        exact = exact_head_residuals(w, h, layout)
        srt = np.sort(exact)
        if srt[1] >= sep * srt[0]:
            return w, h, layout, exact


def ffn_instance(rng, max_channels: int = 64):
    """Random FFN channel-pruning instance at half pruning."""
    d = int(rng.integers(16, max_channels + 1))
    w = rng.normal(size=(int(rng.integers(8, 17)), d))
    w *= np.exp(0.5 * rng.normal(size=d))[None, :]
    h = rand_spd(rng, d, m_factor=4, gamma=0.3)
    return w, h, d // 2
