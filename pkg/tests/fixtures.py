"""Small builders shared by several test modules."""

import numpy as np
import scipy.sparse as sp

from superhawkes.core import RegressionBundle


def dense_bundle(X, N, W=None, D=2, blocks=1, layout="single"):
    X = np.asarray(X, dtype=float)
    L = X.shape[0]
    return RegressionBundle(
        N=np.asarray(N, dtype=float),
        X=sp.csr_matrix(X),
        W=np.ones(L) if W is None else np.asarray(W, dtype=float),
        layout=layout,
        D=D,
        num_mu_blocks=blocks,
        index=np.column_stack([np.zeros(L, dtype=np.int64), np.arange(L)]),
    )


def well_conditioned_instance(seed, D=2, blocks=1, L=40, noise=0.01):
    """Random weighted LS problem whose unconstrained optimum is strictly positive."""
    rng = np.random.default_rng(seed)
    P = D * (blocks + D)
    while True:
        X = rng.standard_normal((L, P)) + 2.0
        W = rng.uniform(0.5, 2.0, L)
        theta = rng.uniform(0.5, 1.5, P)
        N = X @ theta + noise * rng.standard_normal(L)
        Xw, Nw = W[:, None] * X, W * N
        if np.linalg.cond(Xw) < 1e3 and np.all(np.linalg.solve(Xw.T @ Xw, Xw.T @ Nw) > 0):
            return dense_bundle(X, N, W, D, blocks), Xw, Nw
