"""Single-response PLS regression used as a supervised feature extractor.

Components are extracted one at a time from deflated data (PLS1). For a
scalar target the covariance-maximising unit weight on the deflated
matrices has the closed form ``w = X_d^T y_d / ||X_d^T y_d||``, so no inner
iteration is needed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .preprocess import fit_scaler

log = logging.getLogger(__name__)

PLS_FORMAT = 1
DEFAULT_K_MAX = 10
_STALL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PlsModel:
    W: np.ndarray  # (D, K) unit-norm weights
    P: np.ndarray  # (D, K) input loadings
    q: np.ndarray  # (K,) output loadings
    W_star: np.ndarray  # (D, K) rotated weights, T = X_c @ W_star
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    truncated: bool = False

    @property
    def K(self) -> int:
        return self.W.shape[1]

    @property
    def D(self) -> int:
        return self.W.shape[0]

    def to_dict(self) -> dict:
        return {
            "pls_format": PLS_FORMAT,
            "K": self.K,
            "truncated": self.truncated,
            "y_mean": float(self.y_mean),
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "q": self.q.tolist(),
            "W": self.W.tolist(),
            "P": self.P.tolist(),
            "W_star": self.W_star.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlsModel":
        if d.get("pls_format") != PLS_FORMAT:
            raise ValueError(f"unsupported pls_format {d.get('pls_format')!r}")
        K = int(d["K"])
        D = len(d["x_mean"])

        def mat(name):
            return np.asarray(d[name], dtype=float).reshape(D, K)

        return cls(
            W=mat("W"),
            P=mat("P"),
            q=np.asarray(d["q"], dtype=float).reshape(K),
            W_star=mat("W_star"),
            x_mean=np.asarray(d["x_mean"], dtype=float),
            x_std=np.asarray(d["x_std"], dtype=float),
            y_mean=float(d["y_mean"]),
            truncated=bool(d.get("truncated", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def truncate(self, k: int) -> "PlsModel":
        """The same model restricted to its first ``k`` components."""
        k = min(k, self.K)
        W, P = self.W[:, :k], self.P[:, :k]
        return PlsModel(W, P, self.q[:k], _rotate(W, P), self.x_mean, self.x_std, self.y_mean, self.truncated)


def _rotate(W: np.ndarray, P: np.ndarray) -> np.ndarray:
    return W @ np.linalg.inv(P.T @ W)


def fit_pls(X, y, K: int, scale: bool = True) -> PlsModel:
    """Fit a K-component PLS1 model of ``y`` on ``X``.

    X columns are centred (and standardised when ``scale``), y is centred.
    If the deflated cross-covariance vanishes before K components are found
    the model is truncated to the achieved K and ``truncated`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    N, D = X.shape
    if y.shape[0] != N:
        raise ValueError("X and y have different numbers of rows")
    if N < 2:
        raise ValueError("insufficient data")
    if np.all(y == y[0]):
        raise ValueError("degenerate target")
    if not 1 <= K <= min(D, N - 1):
        raise ValueError(f"K must be in [1, {min(D, N - 1)}], got {K}")

    if scale:
        s = fit_scaler(X)
        x_mean, x_std = s.means, s.stds
    else:
        x_mean, x_std = X.mean(axis=0), np.ones(D)
    Xd = (X - x_mean) / x_std
    y_mean = float(y.mean())
    yd = y - y_mean

    W = np.zeros((D, K))
    P = np.zeros((D, K))
    q = np.zeros(K)
    stall = None
    k_done = 0
    for k in range(K):
        c = Xd.T @ yd
        norm = np.linalg.norm(c)
        if stall is None:
            stall = _STALL_TOL * max(1.0, norm)
        if norm < stall:
            break
        w = c / norm
        t = Xd @ w
        tt = t @ t
        p = Xd.T @ t / tt
        qk = (yd @ t) / tt
        Xd -= np.outer(t, p)
        yd = yd - qk * t
        W[:, k], P[:, k], q[k] = w, p, qk
        k_done = k + 1

    truncated = k_done < K
    if truncated:
        if k_done == 0:
            raise ValueError("degenerate target")
        warnings.warn(f"PLS stopped after {k_done} of {K} components", RuntimeWarning, stacklevel=2)
        W, P, q = W[:, :k_done], P[:, :k_done], q[:k_done]
    return PlsModel(W, P, q, _rotate(W, P), x_mean, x_std, y_mean, truncated)


def _check_dim(model: PlsModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.D:
        raise ValueError(f"dimension mismatch: model has D={model.D}, X has {X.shape[1]} columns")
    return X


def transform(model: PlsModel, X) -> np.ndarray:
    """Latent scores ``T = ((X - x_mean) / x_std) @ W_star``."""
    X = _check_dim(model, X)
    return ((X - model.x_mean) / model.x_std) @ model.W_star


def predict(model: PlsModel, X) -> np.ndarray:
    return transform(model, X) @ model.q + model.y_mean


def _fold_ids(N: int, n_folds: int, groups) -> np.ndarray:
    if groups is None:
        return np.arange(N) % n_folds
    groups = list(groups)
    if len(groups) != N:
        raise ValueError("groups must have one entry per row")
    order = {}
    for g in groups:
        order.setdefault(g, len(order))
    if len(order) < n_folds:
        raise ValueError(f"{len(order)} groups cannot fill {n_folds} folds")
    return np.array([order[g] % n_folds for g in groups])


def select_components(
    X, y, K_max: int = DEFAULT_K_MAX, n_folds: int = 5, scale: bool = True, groups=None
) -> int:
    """Number of components minimising cross-validated squared error.

    Rows are dealt to folds round-robin; with ``groups`` whole groups are
    dealt instead (in order of first appearance), which keeps correlated
    rows such as overlapping windows of one trial on the same side of the
    split. Errors within a relative 1e-9 of the best count as ties and the
    smaller K wins.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    N = X.shape[0]
    if not 2 <= n_folds <= N:
        raise ValueError(f"need 2 <= n_folds <= N, got n_folds={n_folds}, N={N}")
    if np.all(y == y[0]):
        raise ValueError("degenerate target")
    folds = _fold_ids(N, n_folds, groups)
    k_cap = min(K_max, X.shape[1], N - 1)
    for f in range(n_folds):
        k_cap = min(k_cap, int(np.sum(folds != f)) - 1)
    if k_cap < 1:
        raise ValueError("insufficient data")

    press = np.zeros(k_cap)
    for f in range(n_folds):
        tr, te = folds != f, folds == f
        if np.all(y[tr] == y[tr][0]):
            # fold with constant target: only the mean can be predicted
            press += np.sum((y[te] - y[tr].mean()) ** 2)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            full = fit_pls(X[tr], y[tr], k_cap, scale=scale)
        for k in range(1, k_cap + 1):
            pred = predict(full.truncate(k), X[te])
            press[k - 1] += np.sum((y[te] - pred) ** 2)

    best = press.min()
    tie = best + 1e-9 * max(best, 1e-300) + 1e-12 * np.sum((y - y.mean()) ** 2)
    K = int(np.flatnonzero(press <= tie)[0]) + 1
    log.debug("PLS CV press=%s -> K=%d", np.array2string(press, precision=4), K)
    return K
